#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "popbias/dataset.hpp"
#include "popbias/error.hpp"
#include "popbias/parallel.hpp"
#include "popbias/rng.hpp"

namespace popbias {

/// phi(a): fraction of users in scope who listened to artist a.
struct PopularityTable {
  std::vector<double> phi;
  std::vector<std::size_t> listeners;
  std::size_t num_users = 0;

  double operator[](std::size_t a) const { return phi[a]; }
  std::size_t size() const noexcept { return phi.size(); }
};

enum class PopularityScope { AllData, TrainOnly };

inline PopularityTable popularity_from_listeners(std::vector<std::size_t> listeners, std::size_t num_users) {
  if (num_users == 0) throw ValidationError("popularity of an empty dataset");
  PopularityTable t;
  t.phi.resize(listeners.size());
  for (std::size_t a = 0; a < listeners.size(); ++a)
    t.phi[a] = static_cast<double>(listeners[a]) / static_cast<double>(num_users);
  t.listeners = std::move(listeners);
  t.num_users = num_users;
  return t;
}

inline PopularityTable compute_popularity(const InteractionDataset& d) {
  std::vector<std::size_t> listeners(d.num_artists(), 0);
  for (std::size_t u = 0; u < d.num_users(); ++u)
    for (Index a : d.row(u)) ++listeners[a];
  return popularity_from_listeners(std::move(listeners), d.num_users());
}

/// Per-user mean phi over the profile.
inline std::vector<double> mainstreaminess(const InteractionDataset& d, const PopularityTable& pop) {
  if (pop.size() < d.num_artists()) throw ValidationError("popularity table does not cover all artists");
  std::vector<double> score(d.num_users());
  for (std::size_t u = 0; u < d.num_users(); ++u) {
    double s = 0.0;
    for (Index a : d.row(u)) s += pop[a];
    score[u] = s / static_cast<double>(d.profile_size(u));
  }
  return score;
}

/// Equal-size terciles of mean profile popularity; ties go to the lower
/// user index first.
inline std::vector<Group> assign_mainstream_groups(const InteractionDataset& d, const PopularityTable& pop) {
  const auto score = mainstreaminess(d, pop);
  std::vector<std::size_t> order(d.num_users());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] < score[b]; });
  std::vector<Group> groups(d.num_users());
  const std::size_t n = order.size();
  for (std::size_t rank = 0; rank < n; ++rank)
    groups[order[rank]] = static_cast<Group>(rank * 3 / n);
  return groups;
}

// ---------------------------------------------------------------------------
// Masked split

struct SplitDataset {
  InteractionDataset train;
  std::vector<std::vector<Index>> masked;  // sorted per user
  std::uint64_t seed = 0;
  double holdout_fraction = 0.2;

  std::size_t num_masked() const {
    std::size_t n = 0;
    for (const auto& m : masked) n += m.size();
    return n;
  }
};

/// round-half-up, at least 1 when the profile has >= 2 artists, and at most
/// profile - 1 so every user keeps a training artist.
inline std::size_t holdout_size(std::size_t profile, double fraction) {
  if (profile < 2) return 0;
  auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(profile) + 0.5 + 1e-9));
  return std::clamp<std::size_t>(k, 1, profile - 1);
}

inline SplitDataset split_mask(const InteractionDataset& d, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw ValidationError("holdout_fraction must be in (0, 1)");
  std::vector<std::vector<std::pair<Index, Count>>> rows(d.num_users());
  std::vector<std::vector<Index>> masked(d.num_users());
  for (std::size_t u = 0; u < d.num_users(); ++u) {
    auto r = d.row(u);
    auto c = d.row_counts(u);
    const std::size_t n = r.size();
    const std::size_t k = holdout_size(n, holdout_fraction);
    std::vector<std::size_t> pos(n);
    std::iota(pos.begin(), pos.end(), 0);
    Rng rng(seed, u);
    for (std::size_t i = 0; i < k; ++i) std::swap(pos[i], pos[i + rng.index(n - i)]);
    std::vector<bool> hidden(n, false);
    for (std::size_t i = 0; i < k; ++i) hidden[pos[i]] = true;
    for (std::size_t j = 0; j < n; ++j) {
      if (hidden[j])
        masked[u].push_back(r[j]);
      else
        rows[u].emplace_back(r[j], c[j]);
    }
  }
  return SplitDataset{d.with_rows(std::move(rows)), std::move(masked), seed, holdout_fraction};
}

inline PopularityTable compute_popularity(const SplitDataset& split, PopularityScope scope) {
  auto table = compute_popularity(split.train);
  if (scope == PopularityScope::TrainOnly) return table;
  auto listeners = std::move(table.listeners);
  for (const auto& m : split.masked)
    for (Index a : m) ++listeners[a];
  return popularity_from_listeners(std::move(listeners), split.train.num_users());
}

// ---------------------------------------------------------------------------
// Long-tail summary

struct CoveragePoint {
  double artist_fraction;
  double interaction_fraction;
};

struct TailStats {
  std::size_t num_users = 0;
  std::size_t num_artists = 0;
  std::size_t num_pairs = 0;
  std::vector<CoveragePoint> coverage_curve;
  std::size_t trainable_artists = 0;  // only meaningful with a split

  /// Linear lookup of the sampled curve at an exact sample fraction.
  double coverage_at(double fraction) const {
    for (const auto& p : coverage_curve)
      if (std::abs(p.artist_fraction - fraction) < 1e-12) return p.interaction_fraction;
    throw ValidationError("fraction not on the sampled coverage grid");
  }
};

inline std::vector<double> coverage_fractions() {
  std::vector<double> f{0.01};
  for (int i = 1; i <= 20; ++i) f.push_back(i * 0.05);
  f.back() = 1.0;
  return f;
}

/// Artist indices sorted by descending listener count, ascending index on ties.
inline std::vector<Index> artists_by_popularity(const PopularityTable& pop) {
  std::vector<Index> order(pop.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return pop.listeners[a] > pop.listeners[b]; });
  return order;
}

inline TailStats long_tail_stats(const InteractionDataset& d, const SplitDataset* split = nullptr) {
  TailStats s;
  s.num_users = d.num_users();
  s.num_artists = d.num_artists();
  s.num_pairs = d.num_pairs();
  if (d.num_artists() == 0 || d.num_pairs() == 0) return s;
  const auto pop = compute_popularity(d);
  const auto order = artists_by_popularity(pop);
  std::vector<std::size_t> cumulative(order.size() + 1, 0);
  for (std::size_t i = 0; i < order.size(); ++i) cumulative[i + 1] = cumulative[i] + pop.listeners[order[i]];
  for (double f : coverage_fractions()) {
    auto top = static_cast<std::size_t>(std::ceil(f * static_cast<double>(order.size()) - 1e-9));
    top = std::min(top, order.size());
    s.coverage_curve.push_back(
        {f, static_cast<double>(cumulative[top]) / static_cast<double>(d.num_pairs())});
  }
  if (split) {
    const auto train_pop = compute_popularity(split->train);
    s.trainable_artists = static_cast<std::size_t>(
        std::count_if(train_pop.listeners.begin(), train_pop.listeners.end(), [](std::size_t n) { return n > 0; }));
  }
  return s;
}

inline void write_coverage(std::ostream& out, const TailStats& s) {
  out << "fraction_of_artists\tfraction_of_interactions\n";
  out.setf(std::ios::fixed);
  out.precision(6);
  for (const auto& p : s.coverage_curve) out << p.artist_fraction << '\t' << p.interaction_fraction << '\n';
}

// ---------------------------------------------------------------------------
// Synthetic long-tail data

struct SyntheticConfig {
  std::size_t num_users = 300;
  std::size_t num_artists = 1000;
  double zipf_exponent = 1.0;
  std::size_t profile_min = 10;
  std::size_t profile_max = 60;
  /// Exponent applied to base popularity when sampling, per group
  /// (low, medium, high). Larger favours popular artists more.
  double mainstream_bias[3] = {0.4, 0.9, 1.4};
  /// Success probability of the geometric play-count distribution.
  double count_p = 0.3;

  void validate() const {
    if (num_users < 1 || num_artists < 1) throw ValidationError("synthetic sizes must be >= 1");
    if (!(zipf_exponent > 0.0)) throw ValidationError("zipf_exponent must be > 0");
    if (profile_min < 1 || profile_max < profile_min) throw ValidationError("invalid profile_size_range");
    if (profile_min > num_artists) throw ValidationError("profile_min exceeds num_artists");
    for (double b : mainstream_bias)
      if (!(b >= 0.0) || !std::isfinite(b)) throw ValidationError("mainstream bias must be finite and >= 0");
    if (!(count_p > 0.0 && count_p <= 1.0)) throw ValidationError("count_p must be in (0, 1]");
  }
};

/// Group of generated user u: three contiguous blocks, sizes equal to within one.
inline Group synthetic_group(std::size_t u, std::size_t num_users) {
  return static_cast<Group>(u * 3 / num_users);
}

inline InteractionDataset generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t V = cfg.num_artists;
  std::vector<double> log_base(V);
  for (std::size_t a = 0; a < V; ++a) log_base[a] = -cfg.zipf_exponent * std::log(static_cast<double>(a + 1));

  std::vector<std::string> users(cfg.num_users), artists(V);
  for (std::size_t u = 0; u < cfg.num_users; ++u) users[u] = "u" + std::to_string(u);
  for (std::size_t a = 0; a < V; ++a) artists[a] = "a" + std::to_string(a);

  std::vector<Triplet> triplets;
  std::vector<Group> groups(cfg.num_users);
  std::vector<std::pair<double, Index>> keys(V);
  const std::size_t max_size = std::min(cfg.profile_max, V);
  const double log_fail = std::log1p(-cfg.count_p);
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    Rng rng(seed, u);
    groups[u] = synthetic_group(u, cfg.num_users);
    const double bias = cfg.mainstream_bias[static_cast<int>(groups[u])];
    const std::size_t k = cfg.profile_min + rng.index(max_size - cfg.profile_min + 1);
    // Weighted sampling without replacement (exponential-race keys; smaller wins).
    for (std::size_t a = 0; a < V; ++a)
      keys[a] = {std::log(-std::log(rng.uniform_open() * (1.0 - 1e-16))) - bias * log_base[a], static_cast<Index>(a)};
    std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k - 1), keys.end());
    std::vector<Index> chosen;
    for (std::size_t i = 0; i < k; ++i) chosen.push_back(keys[i].second);
    std::sort(chosen.begin(), chosen.end());
    for (Index a : chosen) {
      Count c = 1;
      if (cfg.count_p < 1.0) c += static_cast<Count>(std::floor(std::log(rng.uniform_open()) / log_fail));
      triplets.push_back({static_cast<Index>(u), a, c});
    }
  }
  return InteractionDataset::from_triplets(std::move(users), std::move(artists), std::move(triplets),
                                           std::move(groups));
}

}  // namespace popbias
