#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "popbias/corpus.hpp"
#include "popbias/dataset.hpp"
#include "popbias/error.hpp"
#include "popbias/parallel.hpp"

namespace popbias {

/// Candidate artists ordered best-first, plus the held-out positives.
struct RankedCandidates {
  std::vector<Index> ordering;
  std::vector<Index> positives;  // sorted

  /// 1 where ordering[i] is a positive.
  std::vector<std::uint8_t> positive_flags() const {
    std::vector<std::uint8_t> flags(ordering.size());
    for (std::size_t i = 0; i < ordering.size(); ++i)
      flags[i] = std::binary_search(positives.begin(), positives.end(), ordering[i]) ? 1 : 0;
    return flags;
  }
};

/// AUC of a ranking given positive flags in rank order (best first): the
/// fraction of (positive, negative) pairs with the positive ranked higher.
inline double auc(std::span<const std::uint8_t> flags) {
  std::uint64_t positives = 0, negatives = 0, concordant = 0;
  for (auto it = flags.rbegin(); it != flags.rend(); ++it) {
    if (*it) {
      ++positives;
      concordant += negatives;
    } else {
      ++negatives;
    }
  }
  if (positives == 0) throw UndefinedMetric("AUC undefined: no positives");
  if (negatives == 0) throw UndefinedMetric("AUC undefined: no negatives");
  return static_cast<double>(concordant) / (static_cast<double>(positives) * static_cast<double>(negatives));
}

inline double auc(const RankedCandidates& ranked) {
  const auto flags = ranked.positive_flags();
  return auc(std::span<const std::uint8_t>(flags));
}

/// AP@k = (1 / min(k, P)) * sum of precision@i over positive ranks i <= k.
inline double average_precision_at_k(std::span<const std::uint8_t> flags, std::size_t k) {
  if (k < 1) throw ValidationError("AP@k requires k >= 1");
  std::size_t positives = 0;
  for (auto f : flags) positives += f ? 1 : 0;
  if (positives == 0) throw UndefinedMetric("AP undefined: no positives");
  if (positives == flags.size()) throw UndefinedMetric("AP undefined: no negatives");
  double sum = 0.0;
  std::size_t hits = 0;
  const std::size_t limit = std::min(k, flags.size());
  for (std::size_t i = 0; i < limit; ++i) {
    if (!flags[i]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(i + 1);
  }
  return sum / static_cast<double>(std::min(k, positives));
}

inline double average_precision_at_k(const RankedCandidates& ranked, std::size_t k) {
  const auto flags = ranked.positive_flags();
  return average_precision_at_k(std::span<const std::uint8_t>(flags), k);
}

/// Mean phi over one artist set.
inline double mean_popularity(std::span<const Index> artists, const PopularityTable& pop) {
  if (artists.empty()) throw ValidationError("GAP over an empty artist set");
  double s = 0.0;
  for (Index a : artists) {
    if (a >= pop.size()) throw ValidationError("artist not covered by popularity table");
    s += pop[a];
  }
  return s / static_cast<double>(artists.size());
}

/// Group Average Popularity: mean over users of each user's mean phi.
template <typename Profiles>
double gap(const Profiles& profiles, const PopularityTable& pop) {
  std::vector<double> per_user;
  for (const auto& p : profiles) per_user.push_back(mean_popularity(std::span<const Index>(p), pop));
  if (per_user.empty()) throw ValidationError("GAP over an empty group");
  return ordered_sum(per_user) / static_cast<double>(per_user.size());
}

/// Popularity lift (gap_r - gap_p) / gap_p.
inline double delta_gap(double gap_p, double gap_r) {
  if (!(gap_p > 0.0)) throw ValidationError("delta GAP requires GAP_p > 0");
  return (gap_r - gap_p) / gap_p;
}

struct GapReport {
  double gap_p = 0.0;
  double gap_r = 0.0;
  double delta_gap = 0.0;
};

inline GapReport make_gap_report(double gap_p, double gap_r) {
  return {gap_p, gap_r, delta_gap(gap_p, gap_r)};
}

struct MeanStderr {
  double mean = 0.0;
  std::optional<double> std_error;  // undefined for n < 2
  std::size_t n = 0;
};

/// Mean and standard error (sample std with n-1, divided by sqrt(n)).
inline MeanStderr mean_with_stderr(std::span<const double> values) {
  if (values.empty()) throw UndefinedMetric("mean of zero values");
  MeanStderr r;
  r.n = values.size();
  r.mean = ordered_sum(values) / static_cast<double>(r.n);
  if (r.n >= 2) {
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) sq[i] = (values[i] - r.mean) * (values[i] - r.mean);
    const double var = ordered_sum(sq) / static_cast<double>(r.n - 1);
    r.std_error = std::sqrt(var) / std::sqrt(static_cast<double>(r.n));
  }
  return r;
}

}  // namespace popbias
