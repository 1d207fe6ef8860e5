#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "popbias/corpus.hpp"
#include "popbias/error.hpp"
#include "popbias/model.hpp"
#include "popbias/multivae.hpp"
#include "popbias/slim.hpp"
#include "popbias/wrmf.hpp"

namespace popbias {

using Json = nlohmann::json;

inline const std::set<std::string>& model_families() {
  static const std::set<std::string> names{"slim", "multivae", "wrmf", "popularity", "random"};
  return names;
}

namespace detail {

template <typename T>
void read_field(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("config field '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const Json& j, std::initializer_list<const char*> known, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ValidationError("unknown key '" + key + "' in " + where);
  }
}

}  // namespace detail

inline SlimParams slim_params_from_json(const Json& j) {
  detail::reject_unknown(j, {"l1", "l2", "non_negative", "binarize", "max_iters", "tolerance"}, "slim params");
  SlimParams p;
  detail::read_field(j, "l1", p.l1);
  detail::read_field(j, "l2", p.l2);
  detail::read_field(j, "non_negative", p.non_negative);
  detail::read_field(j, "binarize", p.binarize);
  detail::read_field(j, "max_iters", p.max_iters);
  detail::read_field(j, "tolerance", p.tolerance);
  p.validate();
  return p;
}

inline WrmfParams wrmf_params_from_json(const Json& j) {
  detail::reject_unknown(j, {"factors", "alpha", "lambda", "sweeps", "init_seed", "log_confidence", "log_epsilon"},
                         "wrmf params");
  WrmfParams p;
  detail::read_field(j, "factors", p.factors);
  detail::read_field(j, "alpha", p.alpha);
  detail::read_field(j, "lambda", p.lambda);
  detail::read_field(j, "sweeps", p.sweeps);
  detail::read_field(j, "init_seed", p.init_seed);
  detail::read_field(j, "log_confidence", p.log_confidence);
  detail::read_field(j, "log_epsilon", p.log_epsilon);
  p.validate();
  return p;
}

inline MultiVaeParams multivae_params_from_json(const Json& j) {
  detail::reject_unknown(j,
                         {"hidden_dim", "latent_dim", "beta_max", "anneal_steps", "epochs", "batch_size",
                          "learning_rate", "momentum", "dropout_keep", "init_seed"},
                         "multivae params");
  MultiVaeParams p;
  detail::read_field(j, "hidden_dim", p.hidden_dim);
  detail::read_field(j, "latent_dim", p.latent_dim);
  detail::read_field(j, "beta_max", p.beta_max);
  detail::read_field(j, "anneal_steps", p.anneal_steps);
  detail::read_field(j, "epochs", p.epochs);
  detail::read_field(j, "batch_size", p.batch_size);
  detail::read_field(j, "learning_rate", p.learning_rate);
  detail::read_field(j, "momentum", p.momentum);
  detail::read_field(j, "dropout_keep", p.dropout_keep);
  detail::read_field(j, "init_seed", p.init_seed);
  p.validate();
  return p;
}

/// Builds an unfitted model of `family` from a JSON parameter object.
inline std::unique_ptr<Recommender> make_model(const std::string& family, const Json& params = Json::object()) {
  const Json& j = params.is_null() ? Json::object() : params;
  if (family == "slim") return std::make_unique<SlimModel>(slim_params_from_json(j));
  if (family == "wrmf") return std::make_unique<WrmfModel>(wrmf_params_from_json(j));
  if (family == "multivae") return std::make_unique<MultiVaeModel>(multivae_params_from_json(j));
  if (family == "popularity") {
    detail::reject_unknown(j, {"weight"}, "popularity params");
    std::string weight = "listeners";
    detail::read_field(j, "weight", weight);
    if (weight != "listeners" && weight != "play_counts")
      throw ValidationError("popularity weight must be 'listeners' or 'play_counts'");
    return std::make_unique<PopularityModel>(weight == "listeners" ? PopularityWeight::Listeners
                                                                   : PopularityWeight::PlayCounts);
  }
  if (family == "random") {
    detail::reject_unknown(j, {"seed"}, "random params");
    std::uint64_t seed = 0;
    detail::read_field(j, "seed", seed);
    return std::make_unique<RandomModel>(seed);
  }
  throw ValidationError("unknown model '" + family + "'");
}

/// Reads a model container written by Recommender::save. Models that score
/// from a user's training row need the same training data attached.
inline std::unique_ptr<Recommender> load_model(std::istream& in, std::shared_ptr<const InteractionDataset> train) {
  const auto c = ModelContainer::read(in);
  if (c.tag == "popularity") return PopularityModel::load(c);
  if (c.tag == "random") return RandomModel::load(c);
  if (!train) throw ValidationError("loading a '" + c.tag + "' model requires training data");
  if (c.tag == "slim") return SlimModel::load(c, std::move(train));
  if (c.tag == "wrmf") return WrmfModel::load(c, std::move(train));
  if (c.tag == "multivae") return MultiVaeModel::load(c, std::move(train));
  throw ValidationError("unknown model tag '" + c.tag + "'");
}

// ---------------------------------------------------------------------------

struct ModelSpec {
  std::string family;
  std::string label;           // defaults to family
  std::vector<Json> grid;      // each entry is a full parameter object
};

struct ExperimentConfig {
  std::filesystem::path interactions;
  std::filesystem::path groups;
  std::optional<SyntheticConfig> synthetic;
  std::uint64_t synthetic_seed = 1;
  double holdout_fraction = 0.2;
  std::uint64_t split_seed = 42;
  std::uint64_t tune_seed = 7;
  std::size_t top_n = 10;
  std::size_t ap_k = 0;  // 0 selects automatically from the artist count
  PopularityScope popularity_scope = PopularityScope::AllData;
  bool gap_profile_train_only = false;
  unsigned threads = 1;
  std::vector<ModelSpec> models;
  Json source;  // parsed document, for provenance

  void validate() const {
    if (interactions.empty() && !synthetic) throw ValidationError("config needs dataset.interactions or dataset.synthetic");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw ValidationError("split fraction must be in (0, 1)");
    if (top_n < 1) throw ValidationError("top_n must be >= 1");
    if (models.empty()) throw ValidationError("config lists no models");
    std::set<std::string> labels;
    for (const auto& m : models) {
      if (!model_families().contains(m.family)) throw ValidationError("unknown model '" + m.family + "'");
      if (m.grid.empty()) throw ValidationError("model '" + m.label + "' has an empty grid");
      if (!labels.insert(m.label).second) throw ValidationError("duplicate model label '" + m.label + "'");
    }
  }
};

inline SyntheticConfig synthetic_from_json(const Json& j) {
  detail::reject_unknown(j,
                         {"num_users", "num_artists", "zipf_exponent", "profile_min", "profile_max",
                          "mainstream_bias", "count_p"},
                         "dataset.synthetic");
  SyntheticConfig c;
  detail::read_field(j, "num_users", c.num_users);
  detail::read_field(j, "num_artists", c.num_artists);
  detail::read_field(j, "zipf_exponent", c.zipf_exponent);
  detail::read_field(j, "profile_min", c.profile_min);
  detail::read_field(j, "profile_max", c.profile_max);
  detail::read_field(j, "count_p", c.count_p);
  if (j.contains("mainstream_bias")) {
    const auto& b = j.at("mainstream_bias");
    if (!b.is_array() || b.size() != 3) throw ValidationError("mainstream_bias must be [low, medium, high]");
    for (int g = 0; g < 3; ++g) c.mainstream_bias[g] = b[g].get<double>();
  }
  c.validate();
  return c;
}

namespace detail {

inline ExperimentConfig parse_config_document(const Json& j) {
  reject_unknown(j,
                         {"dataset", "split", "top_n", "ap_k", "tune_seed", "popularity_scope", "gap_profile",
                          "threads", "models"},
                         "config");
  ExperimentConfig c;
  c.source = j;
  if (!j.contains("dataset")) throw ValidationError("config has no dataset");
  const auto& ds = j.at("dataset");
  detail::reject_unknown(ds, {"interactions", "groups", "synthetic", "seed"}, "dataset");
  if (ds.contains("interactions")) c.interactions = ds.at("interactions").get<std::string>();
  if (ds.contains("groups")) c.groups = ds.at("groups").get<std::string>();
  if (ds.contains("synthetic")) c.synthetic = synthetic_from_json(ds.at("synthetic"));
  detail::read_field(ds, "seed", c.synthetic_seed);
  if (!c.interactions.empty() && c.synthetic) throw ValidationError("dataset: give interactions or synthetic, not both");
  if (j.contains("split")) {
    const auto& s = j.at("split");
    detail::reject_unknown(s, {"holdout_fraction", "seed"}, "split");
    detail::read_field(s, "holdout_fraction", c.holdout_fraction);
    detail::read_field(s, "seed", c.split_seed);
  }
  detail::read_field(j, "top_n", c.top_n);
  detail::read_field(j, "ap_k", c.ap_k);
  detail::read_field(j, "tune_seed", c.tune_seed);
  detail::read_field(j, "threads", c.threads);
  std::string scope = "all";
  detail::read_field(j, "popularity_scope", scope);
  if (scope == "all")
    c.popularity_scope = PopularityScope::AllData;
  else if (scope == "train")
    c.popularity_scope = PopularityScope::TrainOnly;
  else
    throw ValidationError("popularity_scope must be 'all' or 'train'");
  std::string profile = "full";
  detail::read_field(j, "gap_profile", profile);
  if (profile != "full" && profile != "train") throw ValidationError("gap_profile must be 'full' or 'train'");
  c.gap_profile_train_only = profile == "train";
  if (!j.contains("models") || !j.at("models").is_array()) throw ValidationError("config.models must be an array");
  for (const auto& m : j.at("models")) {
    detail::reject_unknown(m, {"name", "label", "params", "grid"}, "model entry");
    ModelSpec spec;
    spec.family = m.at("name").get<std::string>();
    spec.label = m.value("label", spec.family);
    const Json base = m.value("params", Json::object());
    if (m.contains("grid")) {
      if (!m.at("grid").is_array()) throw ValidationError("grid must be an array");
      for (const auto& point : m.at("grid")) {
        Json merged = base;
        merged.update(point);
        spec.grid.push_back(std::move(merged));
      }
    } else {
      spec.grid.push_back(base);
    }
    for (const auto& point : spec.grid) make_model(spec.family, point);  // validates
    c.models.push_back(std::move(spec));
  }
  c.validate();
  return c;
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const Json& j) {
  try {
    return detail::parse_config_document(j);
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ValidationError("config '" + path.string() + "': " + e.what());
  }
  auto c = parse_experiment_config(j);
  // Relative dataset paths resolve against the config's directory.
  auto resolve = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = path.parent_path() / p;
  };
  resolve(c.interactions);
  resolve(c.groups);
  return c;
}

}  // namespace popbias
