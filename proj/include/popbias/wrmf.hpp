#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "popbias/dataset.hpp"
#include "popbias/error.hpp"
#include "popbias/model.hpp"
#include "popbias/parallel.hpp"
#include "popbias/rng.hpp"
#include "popbias/serialize.hpp"

namespace popbias {

struct WrmfParams {
  std::size_t factors = 16;
  double alpha = 10.0;   // confidence scale
  double lambda = 0.1;   // ridge
  std::size_t sweeps = 10;
  std::uint64_t init_seed = 0;
  bool log_confidence = false;  // c = 1 + alpha * log(1 + count / epsilon)
  double log_epsilon = 1.0;

  void validate() const {
    if (factors < 1) throw ValidationError("WRMF factors must be >= 1");
    if (!(alpha > 0.0)) throw ValidationError("WRMF alpha must be > 0");
    if (!(lambda > 0.0)) throw ValidationError("WRMF lambda must be > 0");
    if (sweeps < 1) throw ValidationError("WRMF sweeps must be >= 1");
    if (log_confidence && !(log_epsilon > 0.0)) throw ValidationError("WRMF log_epsilon must be > 0");
  }

  double confidence(Count count) const {
    const double r = static_cast<double>(count);
    return log_confidence ? 1.0 + alpha * std::log1p(r / log_epsilon) : 1.0 + alpha * r;
  }
};

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// sum_{u,i} c_ui (p_ui - x_u . y_i)^2 + lambda (||X||^2 + ||Y||^2), where
/// p_ui = 1[count > 0] and c_ui = 1 for unobserved pairs.
inline double wrmf_objective(const InteractionDataset& train, const Matrix& X, const Matrix& Y, const WrmfParams& p) {
  if (static_cast<std::size_t>(X.rows()) != train.num_users() ||
      static_cast<std::size_t>(Y.rows()) != train.num_artists() || X.cols() != Y.cols())
    throw ValidationError("WRMF factor shapes do not match training data");
  // All-pairs sum of s^2 via Gram matrices, then correct observed pairs.
  const Eigen::MatrixXd xtx = X.transpose() * X;
  const Eigen::MatrixXd yty = Y.transpose() * Y;
  double loss = xtx.cwiseProduct(yty).sum();
  for (std::size_t u = 0; u < train.num_users(); ++u) {
    auto r = train.row(u);
    auto c = train.row_counts(u);
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double s = X.row(static_cast<Eigen::Index>(u)).dot(Y.row(r[k]));
      loss += p.confidence(c[k]) * (1.0 - s) * (1.0 - s) - s * s;
    }
  }
  return loss + p.lambda * (X.squaredNorm() + Y.squaredNorm());
}

class WrmfModel final : public Recommender {
 public:
  explicit WrmfModel(WrmfParams params = {}) : params_(params) { params_.validate(); }

  std::string_view tag() const override { return "wrmf"; }

  void fit(std::shared_ptr<const InteractionDataset> train, unsigned threads = 1) override {
    initialize(std::move(train));
    for (std::size_t s = 0; s < params_.sweeps; ++s) {
      update_users(threads);
      update_items(threads);
    }
  }
  using Recommender::fit;

  /// Uniform [-0.01, 0.01] factors from init_seed; items first, then users.
  void initialize(std::shared_ptr<const InteractionDataset> train) {
    train_ = std::move(train);
    columns_.emplace(*train_);
    const auto d = static_cast<Eigen::Index>(params_.factors);
    Rng rng(params_.init_seed);
    Y_.resize(static_cast<Eigen::Index>(train_->num_artists()), d);
    X_.resize(static_cast<Eigen::Index>(train_->num_users()), d);
    for (Eigen::Index i = 0; i < Y_.size(); ++i) Y_.data()[i] = rng.uniform(-0.01, 0.01);
    for (Eigen::Index i = 0; i < X_.size(); ++i) X_.data()[i] = rng.uniform(-0.01, 0.01);
  }

  /// Exact ridge solve of every user row against fixed item factors.
  void update_users(unsigned threads = 1) {
    const Eigen::MatrixXd gram = Y_.transpose() * Y_;
    parallel_for(train_->num_users(), threads, [&](std::size_t u) {
      X_.row(static_cast<Eigen::Index>(u)) = solve_row(gram, Y_, train_->row(u), train_->row_counts(u), u);
    });
  }

  /// Exact ridge solve of every item row against fixed user factors.
  void update_items(unsigned threads = 1) {
    const Eigen::MatrixXd gram = X_.transpose() * X_;
    parallel_for(train_->num_artists(), threads, [&](std::size_t a) {
      Y_.row(static_cast<Eigen::Index>(a)) = solve_row(gram, X_, columns_->col(a), columns_->col_counts(a), a);
    });
  }

  double objective() const { return wrmf_objective(*train_, X_, Y_, params_); }

  std::vector<double> score_user(std::size_t u) const override {
    std::vector<double> s(static_cast<std::size_t>(Y_.rows()));
    Eigen::Map<Eigen::VectorXd>(s.data(), Y_.rows()) = Y_ * X_.row(static_cast<Eigen::Index>(u)).transpose();
    return s;
  }

  std::size_t num_artists() const override { return static_cast<std::size_t>(Y_.rows()); }
  const Matrix& user_factors() const noexcept { return X_; }
  const Matrix& item_factors() const noexcept { return Y_; }
  Matrix& user_factors() noexcept { return X_; }
  Matrix& item_factors() noexcept { return Y_; }
  const WrmfParams& params() const noexcept { return params_; }

  ModelContainer save() const override {
    ModelContainer c;
    c.tag = std::string(tag());
    c.add("params", BlobWriter()
                        .put(static_cast<std::uint64_t>(params_.factors))
                        .put(params_.alpha)
                        .put(params_.lambda)
                        .put(static_cast<std::uint64_t>(params_.sweeps))
                        .put(params_.init_seed)
                        .put(static_cast<std::uint8_t>(params_.log_confidence))
                        .put(params_.log_epsilon)
                        .take());
    c.add("user_factors", matrix_blob(X_));
    c.add("item_factors", matrix_blob(Y_));
    return c;
  }

  static std::unique_ptr<WrmfModel> load(const ModelContainer& c, std::shared_ptr<const InteractionDataset> train) {
    BlobReader p(c.blob("params"));
    WrmfParams params;
    params.factors = p.get<std::uint64_t>();
    params.alpha = p.get<double>();
    params.lambda = p.get<double>();
    params.sweeps = p.get<std::uint64_t>();
    params.init_seed = p.get<std::uint64_t>();
    params.log_confidence = p.get<std::uint8_t>() != 0;
    params.log_epsilon = p.get<double>();
    auto m = std::make_unique<WrmfModel>(params);
    m->X_ = read_matrix(c.blob("user_factors"));
    m->Y_ = read_matrix(c.blob("item_factors"));
    if (train) {
      m->train_ = std::move(train);
      m->columns_.emplace(*m->train_);
    }
    return m;
  }

 private:
  /// (F^T F + F^T (C - I) F + lambda I) x = F^T C p over the observed entries.
  Eigen::VectorXd solve_row(const Eigen::MatrixXd& gram, const Matrix& F, std::span<const Index> idx,
                            std::span<const Count> counts, std::size_t which) const {
    const auto d = F.cols();
    Eigen::MatrixXd A = gram;
    A.diagonal().array() += params_.lambda;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(d);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const double c = params_.confidence(counts[k]);
      const auto f = F.row(idx[k]).transpose();
      A.noalias() += (c - 1.0) * f * f.transpose();
      b.noalias() += c * f;
    }
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) throw NumericalError("WRMF: normal equations not positive definite at row " + std::to_string(which));
    Eigen::VectorXd x = llt.solve(b);
    if (!x.allFinite()) throw NumericalError("WRMF: non-finite factor at row " + std::to_string(which));
    return x;
  }

  static std::string matrix_blob(const Matrix& m) {
    return BlobWriter()
        .put(static_cast<std::uint64_t>(m.rows()))
        .put(static_cast<std::uint64_t>(m.cols()))
        .put_array(m.data(), static_cast<std::size_t>(m.size()))
        .take();
  }

  static Matrix read_matrix(const std::string& bytes) {
    BlobReader r(bytes);
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    const auto data = r.get_vector<double>();
    if (data.size() != rows * cols) throw ValidationError("WRMF factor blob size mismatch");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::copy(data.begin(), data.end(), m.data());
    return m;
  }

  WrmfParams params_;
  Matrix X_, Y_;
  std::shared_ptr<const InteractionDataset> train_;
  std::optional<ColumnIndex> columns_;
};

}  // namespace popbias
