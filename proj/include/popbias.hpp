#pragma once

// Umbrella header.
#include "popbias/config.hpp"
#include "popbias/corpus.hpp"
#include "popbias/dataset.hpp"
#include "popbias/error.hpp"
#include "popbias/evaluation.hpp"
#include "popbias/experiment.hpp"
#include "popbias/gapcalc.hpp"
#include "popbias/io.hpp"
#include "popbias/metrics.hpp"
#include "popbias/model.hpp"
#include "popbias/multivae.hpp"
#include "popbias/rng.hpp"
#include "popbias/serialize.hpp"
#include "popbias/slim.hpp"
#include "popbias/wrmf.hpp"
