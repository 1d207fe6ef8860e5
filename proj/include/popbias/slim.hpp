#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "popbias/dataset.hpp"
#include "popbias/error.hpp"
#include "popbias/model.hpp"
#include "popbias/parallel.hpp"
#include "popbias/serialize.hpp"

namespace popbias {

struct SlimParams {
  double l1 = 0.5;
  double l2 = 1.0;
  bool non_negative = true;
  bool binarize = false;
  std::size_t max_iters = 100;
  double tolerance = 1e-4;

  void validate() const {
    if (!(l1 >= 0.0) || !(l2 >= 0.0)) throw ValidationError("SLIM penalties must be >= 0");
    if (max_iters < 1) throw ValidationError("SLIM max_iters must be >= 1");
    if (!(tolerance > 0.0)) throw ValidationError("SLIM tolerance must be > 0");
  }
};

/// Item-item weights, stored by column: columns[t] lists (j, W[j][t]).
struct SlimWeights {
  std::size_t num_artists = 0;
  std::vector<std::vector<std::pair<Index, double>>> columns;
};

/// Training matrix values by column, as the regression sees them.
struct SlimDesign {
  const InteractionDataset* rows = nullptr;
  ColumnIndex cols;
  std::vector<double> values;  // aligned with cols.rows
  std::vector<double> sq_norm;  // ||a_j||^2

  SlimDesign(const InteractionDataset& train, bool binarize) : rows(&train), cols(train) {
    auto value = [binarize](Count c) { return binarize ? 1.0 : static_cast<double>(c); };
    values.resize(cols.counts.size());
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = value(cols.counts[k]);
    sq_norm.assign(train.num_artists(), 0.0);
    for (std::size_t a = 0; a < train.num_artists(); ++a)
      for (std::size_t k = cols.col_ptr[a]; k < cols.col_ptr[a + 1]; ++k) sq_norm[a] += values[k] * values[k];
  }

  std::size_t num_users() const { return rows->num_users(); }
  std::size_t num_artists() const { return rows->num_artists(); }
};

/// Called after every coordinate update with (artist j, new weight).
using SlimObserver = std::function<void(Index, double)>;

/// Elastic-net coordinate descent for one target column t:
///   min_w 1/2 ||a_t - A w||^2 + l2/2 ||w||^2 + l1 ||w||_1,  w_t = 0 (and w >= 0).
/// Starts from w = 0 and sweeps coordinates in ascending artist order until
/// the largest coordinate change of a sweep drops below the tolerance.
inline std::vector<std::pair<Index, double>> solve_slim_column(const SlimDesign& A, Index target,
                                                               const SlimParams& p,
                                                               const SlimObserver& observer = {}) {
  const std::size_t U = A.num_users();
  const std::size_t V = A.num_artists();
  std::vector<Index> active;
  if (p.non_negative) {
    // With w >= 0 and non-negative data, a coordinate that never co-occurs
    // with the target has gradient >= l1 at zero, so its optimum is 0.
    std::vector<std::uint8_t> seen(V, 0);
    for (Index u : A.cols.col(target))
      for (Index j : A.rows->row(u)) seen[j] = 1;
    for (Index j = 0; j < V; ++j)
      if (seen[j] && j != target) active.push_back(j);
  } else {
    for (Index j = 0; j < V; ++j)
      if (j != target && A.sq_norm[j] > 0.0) active.push_back(j);
  }

  std::vector<double> residual(U, 0.0);
  for (std::size_t k = A.cols.col_ptr[target]; k < A.cols.col_ptr[target + 1]; ++k)
    residual[A.cols.rows[k]] = A.values[k];
  std::vector<double> w(active.size(), 0.0);

  for (std::size_t iter = 0; iter < p.max_iters; ++iter) {
    double max_delta = 0.0;
    for (std::size_t c = 0; c < active.size(); ++c) {
      const Index j = active[c];
      const std::size_t begin = A.cols.col_ptr[j], end = A.cols.col_ptr[j + 1];
      double rho = A.sq_norm[j] * w[c];
      for (std::size_t k = begin; k < end; ++k) rho += A.values[k] * residual[A.cols.rows[k]];
      double next;
      if (p.non_negative)
        next = std::max(rho - p.l1, 0.0) / (A.sq_norm[j] + p.l2);
      else
        next = std::copysign(std::max(std::abs(rho) - p.l1, 0.0), rho) / (A.sq_norm[j] + p.l2);
      if (!std::isfinite(next))
        throw NumericalError("SLIM: non-finite weight in column " + std::to_string(target));
      const double delta = next - w[c];
      if (delta != 0.0) {
        for (std::size_t k = begin; k < end; ++k) residual[A.cols.rows[k]] -= delta * A.values[k];
        w[c] = next;
        if (observer) observer(j, next);
      }
      max_delta = std::max(max_delta, std::abs(delta));
    }
    if (max_delta < p.tolerance) break;
  }

  std::vector<std::pair<Index, double>> out;
  for (std::size_t c = 0; c < active.size(); ++c)
    if (w[c] != 0.0) out.emplace_back(active[c], w[c]);
  return out;
}

/// 1/2 ||A - AW||_F^2 + l2/2 ||W||_F^2 + l1 ||W||_1.
inline double slim_objective(const InteractionDataset& train, const SlimWeights& W, const SlimParams& p) {
  if (W.num_artists != train.num_artists() || W.columns.size() != train.num_artists())
    throw ValidationError("SLIM weight shape does not match training data");
  const SlimDesign A(train, p.binarize);
  double loss = 0.0, l2 = 0.0, l1 = 0.0;
  std::vector<double> residual(train.num_users());
  for (std::size_t t = 0; t < W.columns.size(); ++t) {
    std::fill(residual.begin(), residual.end(), 0.0);
    for (std::size_t k = A.cols.col_ptr[t]; k < A.cols.col_ptr[t + 1]; ++k) residual[A.cols.rows[k]] = A.values[k];
    for (const auto& [j, w] : W.columns[t]) {
      if (j >= train.num_artists()) throw ValidationError("SLIM weight index out of range");
      for (std::size_t k = A.cols.col_ptr[j]; k < A.cols.col_ptr[j + 1]; ++k)
        residual[A.cols.rows[k]] -= w * A.values[k];
      l2 += w * w;
      l1 += std::abs(w);
    }
    for (double r : residual) loss += r * r;
  }
  return 0.5 * loss + 0.5 * p.l2 * l2 + p.l1 * l1;
}

class SlimModel final : public Recommender {
 public:
  explicit SlimModel(SlimParams params = {}) : params_(params) { params_.validate(); }

  std::string_view tag() const override { return "slim"; }

  void fit(std::shared_ptr<const InteractionDataset> train, unsigned threads = 1) override {
    train_ = std::move(train);
    const SlimDesign design(*train_, params_.binarize);
    weights_.num_artists = train_->num_artists();
    weights_.columns.assign(train_->num_artists(), {});
    parallel_for(train_->num_artists(), threads, [&](std::size_t t) {
      weights_.columns[t] = solve_slim_column(design, static_cast<Index>(t), params_);
    });
    build_rows();
  }
  using Recommender::fit;

  /// Score of artist t for user u: sum over the user's artists j of a_uj * W[j][t].
  std::vector<double> score_user(std::size_t u) const override {
    std::vector<double> s(weights_.num_artists, 0.0);
    auto r = train_->row(u);
    auto c = train_->row_counts(u);
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double a = params_.binarize ? 1.0 : static_cast<double>(c[k]);
      for (const auto& [t, w] : rows_[r[k]]) s[t] += a * w;
    }
    return s;
  }

  std::size_t num_artists() const override { return weights_.num_artists; }
  const SlimWeights& weights() const noexcept { return weights_; }
  const SlimParams& params() const noexcept { return params_; }

  std::size_t nonzeros() const {
    std::size_t n = 0;
    for (const auto& col : weights_.columns) n += col.size();
    return n;
  }

  ModelContainer save() const override {
    ModelContainer c;
    c.tag = std::string(tag());
    c.add("params", BlobWriter()
                        .put(params_.l1)
                        .put(params_.l2)
                        .put(static_cast<std::uint8_t>(params_.non_negative))
                        .put(static_cast<std::uint8_t>(params_.binarize))
                        .put(static_cast<std::uint64_t>(params_.max_iters))
                        .put(params_.tolerance)
                        .take());
    std::vector<std::uint32_t> rows, cols;
    std::vector<double> vals;
    for (std::size_t t = 0; t < weights_.columns.size(); ++t)
      for (const auto& [j, w] : weights_.columns[t]) {
        rows.push_back(j);
        cols.push_back(static_cast<std::uint32_t>(t));
        vals.push_back(w);
      }
    c.add("weights", BlobWriter()
                         .put(static_cast<std::uint64_t>(weights_.num_artists))
                         .put_vector(rows)
                         .put_vector(cols)
                         .put_vector(vals)
                         .take());
    return c;
  }

  static std::unique_ptr<SlimModel> load(const ModelContainer& c, std::shared_ptr<const InteractionDataset> train) {
    BlobReader p(c.blob("params"));
    SlimParams params;
    params.l1 = p.get<double>();
    params.l2 = p.get<double>();
    params.non_negative = p.get<std::uint8_t>() != 0;
    params.binarize = p.get<std::uint8_t>() != 0;
    params.max_iters = p.get<std::uint64_t>();
    params.tolerance = p.get<double>();
    auto m = std::make_unique<SlimModel>(params);
    BlobReader w(c.blob("weights"));
    m->weights_.num_artists = w.get<std::uint64_t>();
    const auto rows = w.get_vector<std::uint32_t>();
    const auto cols = w.get_vector<std::uint32_t>();
    const auto vals = w.get_vector<double>();
    if (rows.size() != cols.size() || rows.size() != vals.size()) throw ValidationError("SLIM triplets mismatched");
    if (train->num_artists() != m->weights_.num_artists)
      throw ValidationError("SLIM model does not match training data");
    m->weights_.columns.assign(m->weights_.num_artists, {});
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k] >= m->weights_.num_artists || cols[k] >= m->weights_.num_artists)
        throw ValidationError("SLIM triplet out of range");
      m->weights_.columns[cols[k]].emplace_back(rows[k], vals[k]);
    }
    m->train_ = std::move(train);
    m->build_rows();
    return m;
  }

 private:
  void build_rows() {
    rows_.assign(weights_.num_artists, {});
    for (std::size_t t = 0; t < weights_.columns.size(); ++t)
      for (const auto& [j, w] : weights_.columns[t]) rows_[j].emplace_back(static_cast<Index>(t), w);
  }

  SlimParams params_;
  SlimWeights weights_;
  std::vector<std::vector<std::pair<Index, double>>> rows_;
  std::shared_ptr<const InteractionDataset> train_;
};

}  // namespace popbias
