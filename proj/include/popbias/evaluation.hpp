#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "popbias/corpus.hpp"
#include "popbias/dataset.hpp"
#include "popbias/metrics.hpp"
#include "popbias/model.hpp"
#include "popbias/parallel.hpp"

namespace popbias {

/// Per-user outcome of ranking all candidates (artists outside the training
/// profile) with the masked artists as positives.
struct UserEvaluation {
  std::optional<double> auc;  // empty when undefined (no positives or no negatives)
  std::vector<Index> top;     // top-n recommendations
  std::optional<double> profile_popularity;
  std::optional<double> recommended_popularity;
};

struct EvaluationOptions {
  std::size_t top_n = 10;
  unsigned threads = 1;
};

/// `gap_profiles[u]` is the artist set whose mean phi forms GAP_p.
inline std::vector<UserEvaluation> evaluate_users(const Recommender& model, const SplitDataset& split,
                                                  const PopularityTable& pop,
                                                  const std::vector<std::vector<Index>>& gap_profiles,
                                                  const EvaluationOptions& opts) {
  const auto& train = split.train;
  if (model.num_artists() != train.num_artists()) throw ValidationError("model artist count differs from data");
  std::vector<UserEvaluation> out(train.num_users());
  parallel_for(train.num_users(), opts.threads, [&](std::size_t u) {
    const auto scores = model.score_user(u);
    for (double s : scores)
      if (std::isnan(s)) throw NumericalError("model produced NaN score for user " + std::to_string(u));
    const auto order = rank_candidates(scores, train.row(u));
    const auto& positives = split.masked[u];
    std::vector<std::uint8_t> flags(order.size());
    for (std::size_t i = 0; i < order.size(); ++i)
      flags[i] = std::binary_search(positives.begin(), positives.end(), order[i]) ? 1 : 0;
    UserEvaluation& e = out[u];
    try {
      e.auc = auc(std::span<const std::uint8_t>(flags));
    } catch (const UndefinedMetric&) {
    }
    e.top.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(opts.top_n, order.size())));
    if (!e.top.empty()) e.recommended_popularity = mean_popularity(e.top, pop);
    if (!gap_profiles[u].empty()) e.profile_popularity = mean_popularity(gap_profiles[u], pop);
  });
  return out;
}

/// Mean AP@k over users where it is defined, or nullopt if none are.
inline std::optional<double> mean_average_precision(const Recommender& model, const SplitDataset& split,
                                                    std::size_t k, unsigned threads = 1) {
  const auto& train = split.train;
  std::vector<std::optional<double>> ap(train.num_users());
  parallel_for(train.num_users(), threads, [&](std::size_t u) {
    const auto& positives = split.masked[u];
    if (positives.empty()) return;
    const auto scores = model.score_user(u);
    const auto order = rank_candidates(scores, train.row(u));
    std::vector<std::uint8_t> flags(order.size());
    for (std::size_t i = 0; i < order.size(); ++i)
      flags[i] = std::binary_search(positives.begin(), positives.end(), order[i]) ? 1 : 0;
    try {
      ap[u] = average_precision_at_k(std::span<const std::uint8_t>(flags), k);
    } catch (const UndefinedMetric&) {
    }
  });
  std::vector<double> values;
  for (const auto& v : ap)
    if (v) values.push_back(*v);
  if (values.empty()) return std::nullopt;
  return ordered_sum(values) / static_cast<double>(values.size());
}

/// AP cutoff: 5000 for catalogues above 10,000 artists, else max(50, 2%).
inline std::size_t default_ap_k(std::size_t num_artists) {
  if (num_artists > 10000) return 5000;
  return std::max<std::size_t>(50, static_cast<std::size_t>(std::ceil(0.02 * static_cast<double>(num_artists))));
}

}  // namespace popbias
