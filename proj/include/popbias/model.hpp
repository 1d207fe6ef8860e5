#pragma once

#include <algorithm>
#include <memory>
#include <numeric>
#include <span>
#include <string_view>
#include <vector>

#include "popbias/corpus.hpp"
#include "popbias/dataset.hpp"
#include "popbias/error.hpp"
#include "popbias/rng.hpp"
#include "popbias/serialize.hpp"

namespace popbias {

/// A fitted model scores every artist for a user; higher is better.
/// Fitted models are immutable, so score_user may run concurrently.
class Recommender {
 public:
  virtual ~Recommender() = default;

  virtual std::string_view tag() const = 0;
  virtual void fit(std::shared_ptr<const InteractionDataset> train, unsigned threads = 1) = 0;
  virtual std::vector<double> score_user(std::size_t user) const = 0;
  virtual std::size_t num_artists() const = 0;
  virtual ModelContainer save() const = 0;

  void fit(const InteractionDataset& train, unsigned threads = 1) {
    fit(std::make_shared<const InteractionDataset>(train), threads);
  }
};

/// Artists in [0, num_artists) not in the sorted `profile`, ascending.
inline std::vector<Index> candidates(std::size_t num_artists, std::span<const Index> profile) {
  std::vector<Index> out;
  out.reserve(num_artists - std::min(num_artists, profile.size()));
  std::size_t p = 0;
  for (Index a = 0; a < num_artists; ++a) {
    while (p < profile.size() && profile[p] < a) ++p;
    if (p < profile.size() && profile[p] == a) continue;
    out.push_back(a);
  }
  return out;
}

/// Candidates ordered by descending score, ascending artist index on ties.
inline std::vector<Index> rank_candidates(std::span<const double> scores, std::span<const Index> profile) {
  auto order = candidates(scores.size(), profile);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores[a] > scores[b]; });
  return order;
}

/// Top-n of rank_candidates; shorter when fewer candidates exist.
inline std::vector<Index> top_n(std::span<const double> scores, std::span<const Index> profile, std::size_t n) {
  if (n < 1) throw ValidationError("top-n requires n >= 1");
  auto order = candidates(scores.size(), profile);
  auto better = [&](Index a, Index b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); };
  const std::size_t k = std::min(n, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  order.resize(k);
  return order;
}

inline std::vector<Index> recommend_top_n(const Recommender& model, const InteractionDataset& train,
                                          std::size_t user, std::size_t n) {
  if (user >= train.num_users()) throw ValidationError("unknown user index");
  const auto scores = model.score_user(user);
  return top_n(scores, train.row(user), n);
}

// ---------------------------------------------------------------------------

enum class PopularityWeight : std::uint8_t { Listeners = 0, PlayCounts = 1 };

/// Non-personalized baseline: every user gets the same score vector.
class PopularityModel final : public Recommender {
 public:
  explicit PopularityModel(PopularityWeight weight = PopularityWeight::Listeners) : weight_(weight) {}

  std::string_view tag() const override { return "popularity"; }

  void fit(std::shared_ptr<const InteractionDataset> train, unsigned = 1) override {
    scores_.assign(train->num_artists(), 0.0);
    for (std::size_t u = 0; u < train->num_users(); ++u) {
      auto r = train->row(u);
      auto c = train->row_counts(u);
      for (std::size_t k = 0; k < r.size(); ++k)
        scores_[r[k]] += weight_ == PopularityWeight::Listeners ? 1.0 : static_cast<double>(c[k]);
    }
  }
  using Recommender::fit;

  std::vector<double> score_user(std::size_t) const override { return scores_; }
  std::size_t num_artists() const override { return scores_.size(); }

  ModelContainer save() const override {
    ModelContainer c;
    c.tag = std::string(tag());
    c.add("weight", BlobWriter().put(static_cast<std::uint8_t>(weight_)).take());
    c.add("scores", BlobWriter().put_vector(scores_).take());
    return c;
  }

  static std::unique_ptr<PopularityModel> load(const ModelContainer& c) {
    auto m = std::make_unique<PopularityModel>(
        static_cast<PopularityWeight>(BlobReader(c.blob("weight")).get<std::uint8_t>()));
    m->scores_ = BlobReader(c.blob("scores")).get_vector<double>();
    return m;
  }

 private:
  PopularityWeight weight_;
  std::vector<double> scores_;
};

/// Lower-bound baseline: i.i.d. uniform scores from a stream keyed by (seed, user).
class RandomModel final : public Recommender {
 public:
  explicit RandomModel(std::uint64_t seed = 0) : seed_(seed) {}

  std::string_view tag() const override { return "random"; }

  void fit(std::shared_ptr<const InteractionDataset> train, unsigned = 1) override {
    num_artists_ = train->num_artists();
  }
  using Recommender::fit;

  std::vector<double> score_user(std::size_t user) const override {
    Rng rng(seed_, user);
    std::vector<double> s(num_artists_);
    for (auto& v : s) v = rng.uniform();
    return s;
  }
  std::size_t num_artists() const override { return num_artists_; }

  ModelContainer save() const override {
    ModelContainer c;
    c.tag = std::string(tag());
    c.add("state", BlobWriter().put(seed_).put(static_cast<std::uint64_t>(num_artists_)).take());
    return c;
  }

  static std::unique_ptr<RandomModel> load(const ModelContainer& c) {
    BlobReader r(c.blob("state"));
    auto m = std::make_unique<RandomModel>(r.get<std::uint64_t>());
    m->num_artists_ = r.get<std::uint64_t>();
    return m;
  }

 private:
  std::uint64_t seed_;
  std::size_t num_artists_ = 0;
};

}  // namespace popbias
