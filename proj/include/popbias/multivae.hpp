#pragma once

#include <cmath>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "popbias/dataset.hpp"
#include "popbias/error.hpp"
#include "popbias/model.hpp"
#include "popbias/rng.hpp"
#include "popbias/serialize.hpp"

namespace popbias {

struct MultiVaeParams {
  std::size_t hidden_dim = 64;
  std::size_t latent_dim = 16;
  double beta_max = 0.2;
  std::size_t anneal_steps = 200;  // optimizer steps to reach beta_max
  std::size_t epochs = 40;
  std::size_t batch_size = 50;
  double learning_rate = 0.05;
  double momentum = 0.0;
  double dropout_keep = 0.5;
  std::uint64_t init_seed = 0;

  void validate() const {
    if (hidden_dim < 1 || latent_dim < 1) throw ValidationError("Multi-VAE layer sizes must be >= 1");
    if (!(beta_max >= 0.0 && beta_max <= 1.0)) throw ValidationError("Multi-VAE beta_max must be in [0, 1]");
    if (epochs < 1 || batch_size < 1) throw ValidationError("Multi-VAE epochs and batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw ValidationError("Multi-VAE learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("Multi-VAE momentum must be in [0, 1)");
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) throw ValidationError("Multi-VAE dropout_keep must be in (0, 1]");
  }
};

using DenseMatrix = Eigen::MatrixXd;
using DenseVector = Eigen::VectorXd;

/// Encoder V -> H -> [mu, logvar] (2L), decoder L -> H -> V, tanh hidden units.
/// Weight matrices are (out x in).
struct VaeWeights {
  DenseMatrix enc_w, enc_out_w, dec_w, dec_out_w;
  DenseVector enc_b, enc_out_b, dec_b, dec_out_b;

  static VaeWeights zeros(std::size_t items, std::size_t hidden, std::size_t latent) {
    const auto V = static_cast<Eigen::Index>(items), H = static_cast<Eigen::Index>(hidden),
               L = static_cast<Eigen::Index>(latent);
    VaeWeights w;
    w.enc_w = DenseMatrix::Zero(H, V);
    w.enc_b = DenseVector::Zero(H);
    w.enc_out_w = DenseMatrix::Zero(2 * L, H);
    w.enc_out_b = DenseVector::Zero(2 * L);
    w.dec_w = DenseMatrix::Zero(H, L);
    w.dec_b = DenseVector::Zero(H);
    w.dec_out_w = DenseMatrix::Zero(V, H);
    w.dec_out_b = DenseVector::Zero(V);
    return w;
  }

  std::size_t items() const { return static_cast<std::size_t>(enc_w.cols()); }
  std::size_t hidden() const { return static_cast<std::size_t>(enc_w.rows()); }
  std::size_t latent() const { return static_cast<std::size_t>(dec_w.cols()); }

  /// Visits every parameter block as (name, data, size) in a fixed order.
  template <typename F>
  void for_each(F&& f) {
    f("enc_w", enc_w.data(), enc_w.size());
    f("enc_b", enc_b.data(), enc_b.size());
    f("enc_out_w", enc_out_w.data(), enc_out_w.size());
    f("enc_out_b", enc_out_b.data(), enc_out_b.size());
    f("dec_w", dec_w.data(), dec_w.size());
    f("dec_b", dec_b.data(), dec_b.size());
    f("dec_out_w", dec_out_w.data(), dec_out_w.size());
    f("dec_out_b", dec_out_b.data(), dec_out_b.size());
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<VaeWeights*>(this)->for_each([&](const char* n, double* d, Eigen::Index s) {
      f(n, static_cast<const double*>(d), s);
    });
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const char*, const double* d, Eigen::Index n) {
      for (Eigen::Index i = 0; i < n && ok; ++i) ok = std::isfinite(d[i]);
    });
    return ok;
  }
};

struct ElboTerms {
  double total = 0.0;
  double nll = 0.0;
  double kl = 0.0;
};

/// KL(N(mu, exp(logvar)) || N(0, I)) = 1/2 sum(mu^2 + exp(logvar) - logvar - 1).
inline double gaussian_kl(std::span<const double> mu, std::span<const double> logvar) {
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) kl += mu[i] * mu[i] + std::exp(logvar[i]) - logvar[i] - 1.0;
  return 0.5 * kl;
}

namespace detail {

inline DenseMatrix normalize_rows(const DenseMatrix& x) {
  DenseMatrix out = x;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double n = out.row(r).norm();
    if (n > 0.0) out.row(r) /= n;
  }
  return out;
}

inline DenseMatrix log_softmax_rows(const DenseMatrix& logits) {
  DenseMatrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

}  // namespace detail

/// Batch ELBO and its exact gradient. Rows of `x` are binarized user rows;
/// the encoder sees their L2-normalized form times `input_scale` (dropout
/// mask / keep, or empty for none). Loss and gradient are sums over rows of
///   -sum_i x_i log softmax(logits)_i + beta * KL.
inline ElboTerms elbo_batch(const VaeWeights& w, const DenseMatrix& x, const DenseMatrix& noise, double beta,
                            VaeWeights* grad = nullptr, const DenseMatrix* input_scale = nullptr) {
  const auto L = static_cast<Eigen::Index>(w.latent());
  DenseMatrix xin = detail::normalize_rows(x);
  if (input_scale) xin = xin.cwiseProduct(*input_scale);

  const DenseMatrix h1 = ((xin * w.enc_w.transpose()).rowwise() + w.enc_b.transpose()).array().tanh().matrix();
  const DenseMatrix enc = (h1 * w.enc_out_w.transpose()).rowwise() + w.enc_out_b.transpose();
  const DenseMatrix mu = enc.leftCols(L);
  const DenseMatrix logvar = enc.rightCols(L);
  const DenseMatrix sigma = (0.5 * logvar.array()).exp().matrix();
  const DenseMatrix z = mu + sigma.cwiseProduct(noise);
  const DenseMatrix h3 = ((z * w.dec_w.transpose()).rowwise() + w.dec_b.transpose()).array().tanh().matrix();
  const DenseMatrix logits = (h3 * w.dec_out_w.transpose()).rowwise() + w.dec_out_b.transpose();
  const DenseMatrix log_pi = detail::log_softmax_rows(logits);

  ElboTerms t;
  t.nll = -(x.cwiseProduct(log_pi)).sum();
  t.kl = 0.5 * (mu.array().square() + logvar.array().exp() - logvar.array() - 1.0).sum();
  t.total = t.nll + beta * t.kl;
  if (!grad) return t;

  // d nll / d logits = (sum_i x_i) * softmax - x
  const DenseVector mass = x.rowwise().sum();
  const DenseMatrix d_logits = (log_pi.array().exp().colwise() * mass.array()).matrix() - x;
  grad->dec_out_w = d_logits.transpose() * h3;
  grad->dec_out_b = d_logits.colwise().sum().transpose();
  const DenseMatrix d_a3 = (d_logits * w.dec_out_w).cwiseProduct((1.0 - h3.array().square()).matrix());
  grad->dec_w = d_a3.transpose() * z;
  grad->dec_b = d_a3.colwise().sum().transpose();
  const DenseMatrix d_z = d_a3 * w.dec_w;

  DenseMatrix d_enc(enc.rows(), 2 * L);
  d_enc.leftCols(L) = d_z + beta * mu;
  d_enc.rightCols(L) =
      (0.5 * d_z.cwiseProduct(noise).cwiseProduct(sigma).array() + 0.5 * beta * (logvar.array().exp() - 1.0))
          .matrix();
  grad->enc_out_w = d_enc.transpose() * h1;
  grad->enc_out_b = d_enc.colwise().sum().transpose();
  const DenseMatrix d_a1 = (d_enc * w.enc_out_w).cwiseProduct((1.0 - h1.array().square()).matrix());
  grad->enc_w = d_a1.transpose() * xin;
  grad->enc_b = d_a1.colwise().sum().transpose();
  return t;
}

/// ELBO terms for one binarized user row at a fixed standard-normal draw.
inline ElboTerms elbo_loss(std::span<const double> x, const VaeWeights& w, std::span<const double> z_noise,
                           double beta) {
  if (x.size() != w.items() || z_noise.size() != w.latent()) throw ValidationError("Multi-VAE input shape mismatch");
  const DenseMatrix xm = Eigen::Map<const Eigen::RowVectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  const DenseMatrix nm = Eigen::Map<const Eigen::RowVectorXd>(z_noise.data(), static_cast<Eigen::Index>(z_noise.size()));
  return elbo_batch(w, xm, nm, beta);
}

/// Gradient of elbo_loss(x, w, z_noise, beta).total with respect to w.
inline VaeWeights elbo_gradient(std::span<const double> x, const VaeWeights& w, std::span<const double> z_noise,
                                double beta) {
  if (x.size() != w.items() || z_noise.size() != w.latent()) throw ValidationError("Multi-VAE input shape mismatch");
  const DenseMatrix xm = Eigen::Map<const Eigen::RowVectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  const DenseMatrix nm = Eigen::Map<const Eigen::RowVectorXd>(z_noise.data(), static_cast<Eigen::Index>(z_noise.size()));
  VaeWeights g;
  elbo_batch(w, xm, nm, beta, &g);
  return g;
}

/// Decoder logits at the encoder mean (no sampling, no dropout).
inline DenseMatrix vae_logits(const VaeWeights& w, const DenseMatrix& x) {
  const auto L = static_cast<Eigen::Index>(w.latent());
  const DenseMatrix xin = detail::normalize_rows(x);
  const DenseMatrix h1 = ((xin * w.enc_w.transpose()).rowwise() + w.enc_b.transpose()).array().tanh().matrix();
  const DenseMatrix mu = ((h1 * w.enc_out_w.transpose()).rowwise() + w.enc_out_b.transpose()).leftCols(L);
  const DenseMatrix h3 = ((mu * w.dec_w.transpose()).rowwise() + w.dec_b.transpose()).array().tanh().matrix();
  return (h3 * w.dec_out_w.transpose()).rowwise() + w.dec_out_b.transpose();
}

/// Glorot-uniform weights, zero biases.
inline VaeWeights init_vae_weights(std::size_t items, std::size_t hidden, std::size_t latent, std::uint64_t seed) {
  auto w = VaeWeights::zeros(items, hidden, latent);
  Rng rng(seed);
  auto fill = [&](DenseMatrix& m) {
    const double r = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-r, r);
  };
  fill(w.enc_w);
  fill(w.enc_out_w);
  fill(w.dec_w);
  fill(w.dec_out_w);
  return w;
}

class MultiVaeModel final : public Recommender {
 public:
  explicit MultiVaeModel(MultiVaeParams params = {}) : params_(params) { params_.validate(); }

  std::string_view tag() const override { return "multivae"; }

  void fit(std::shared_ptr<const InteractionDataset> train, unsigned = 1) override {
    train_ = std::move(train);
    const std::size_t U = train_->num_users(), V = train_->num_artists();
    if (U == 0 || V == 0) throw ValidationError("Multi-VAE needs a non-empty training set");
    weights_ = init_vae_weights(V, params_.hidden_dim, params_.latent_dim, params_.init_seed);
    VaeWeights velocity = VaeWeights::zeros(V, params_.hidden_dim, params_.latent_dim);
    loss_curve_.clear();

    std::vector<std::size_t> order(U);
    std::iota(order.begin(), order.end(), 0);
    std::size_t step = 0;
    const auto L = static_cast<Eigen::Index>(params_.latent_dim);
    for (std::size_t epoch = 0; epoch < params_.epochs; ++epoch) {
      Rng rng(params_.init_seed, 0x5eed0000ULL + epoch);
      for (std::size_t i = U; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
      for (std::size_t start = 0, batch = 0; start < U; start += params_.batch_size, ++batch) {
        const std::size_t B = std::min(params_.batch_size, U - start);
        const auto rows = std::span<const std::size_t>(order).subspan(start, B);
        const DenseMatrix x = binarized(rows);
        DenseMatrix noise(static_cast<Eigen::Index>(B), L);
        for (Eigen::Index k = 0; k < noise.size(); ++k) noise.data()[k] = rng.normal();
        DenseMatrix scale;
        if (params_.dropout_keep < 1.0) {
          scale.resize(x.rows(), x.cols());
          for (Eigen::Index k = 0; k < scale.size(); ++k)
            scale.data()[k] = rng.uniform() < params_.dropout_keep ? 1.0 / params_.dropout_keep : 0.0;
        }
        const double beta = anneal_beta(step);
        VaeWeights grad;
        const auto terms = elbo_batch(weights_, x, noise, beta, &grad, scale.size() ? &scale : nullptr);
        if (!std::isfinite(terms.total))
          throw NumericalError("Multi-VAE: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batch));
        apply_update(grad, velocity, static_cast<double>(B));
        if (!weights_.all_finite())
          throw NumericalError("Multi-VAE: non-finite parameters at epoch " + std::to_string(epoch) + ", batch " +
                               std::to_string(batch));
        ++step;
      }
      loss_curve_.push_back(training_loss(anneal_beta(step)));
    }
  }
  using Recommender::fit;

  /// Mean ELBO over the training users with dropout off and one fixed noise
  /// draw, so successive epochs are comparable.
  double training_loss(double beta) const {
    const std::size_t U = train_->num_users();
    const auto L = static_cast<Eigen::Index>(params_.latent_dim);
    Rng rng(params_.init_seed, 0xe7a1000000ULL);
    std::vector<std::size_t> users(U);
    std::iota(users.begin(), users.end(), 0);
    double total = 0.0;
    for (std::size_t start = 0; start < U; start += params_.batch_size) {
      const std::size_t B = std::min(params_.batch_size, U - start);
      DenseMatrix noise(static_cast<Eigen::Index>(B), L);
      for (Eigen::Index k = 0; k < noise.size(); ++k) noise.data()[k] = rng.normal();
      total += elbo_batch(weights_, binarized(std::span<const std::size_t>(users).subspan(start, B)), noise, beta).total;
    }
    return total / static_cast<double>(U);
  }

  double anneal_beta(std::size_t step) const {
    if (params_.anneal_steps == 0) return params_.beta_max;
    return params_.beta_max * std::min(1.0, static_cast<double>(step) / static_cast<double>(params_.anneal_steps));
  }

  std::vector<double> score_user(std::size_t u) const override {
    const std::size_t rows[] = {u};
    const DenseMatrix logits = vae_logits(weights_, binarized(rows));
    return {logits.data(), logits.data() + logits.size()};
  }

  std::size_t num_artists() const override { return weights_.items(); }
  const VaeWeights& weights() const noexcept { return weights_; }
  const std::vector<double>& loss_curve() const noexcept { return loss_curve_; }
  const MultiVaeParams& params() const noexcept { return params_; }

  ModelContainer save() const override {
    ModelContainer c;
    c.tag = std::string(tag());
    const auto& p = params_;
    c.add("params", BlobWriter()
                        .put(static_cast<std::uint64_t>(p.hidden_dim))
                        .put(static_cast<std::uint64_t>(p.latent_dim))
                        .put(p.beta_max)
                        .put(static_cast<std::uint64_t>(p.anneal_steps))
                        .put(static_cast<std::uint64_t>(p.epochs))
                        .put(static_cast<std::uint64_t>(p.batch_size))
                        .put(p.learning_rate)
                        .put(p.momentum)
                        .put(p.dropout_keep)
                        .put(p.init_seed)
                        .take());
    c.add("shape", BlobWriter()
                       .put(static_cast<std::uint64_t>(weights_.items()))
                       .put(static_cast<std::uint64_t>(weights_.hidden()))
                       .put(static_cast<std::uint64_t>(weights_.latent()))
                       .take());
    weights_.for_each([&](const char* name, const double* d, Eigen::Index n) {
      c.add(name, BlobWriter().put_array(d, static_cast<std::size_t>(n)).take());
    });
    return c;
  }

  static std::unique_ptr<MultiVaeModel> load(const ModelContainer& c, std::shared_ptr<const InteractionDataset> train) {
    BlobReader p(c.blob("params"));
    MultiVaeParams params;
    params.hidden_dim = p.get<std::uint64_t>();
    params.latent_dim = p.get<std::uint64_t>();
    params.beta_max = p.get<double>();
    params.anneal_steps = p.get<std::uint64_t>();
    params.epochs = p.get<std::uint64_t>();
    params.batch_size = p.get<std::uint64_t>();
    params.learning_rate = p.get<double>();
    params.momentum = p.get<double>();
    params.dropout_keep = p.get<double>();
    params.init_seed = p.get<std::uint64_t>();
    auto m = std::make_unique<MultiVaeModel>(params);
    BlobReader s(c.blob("shape"));
    const auto V = s.get<std::uint64_t>(), H = s.get<std::uint64_t>(), L = s.get<std::uint64_t>();
    m->weights_ = VaeWeights::zeros(V, H, L);
    m->weights_.for_each([&](const char* name, double* d, Eigen::Index n) {
      const auto v = BlobReader(c.blob(name)).get_vector<double>();
      if (v.size() != static_cast<std::size_t>(n)) throw ValidationError(std::string("Multi-VAE blob size mismatch: ") + name);
      std::copy(v.begin(), v.end(), d);
    });
    if (train && train->num_artists() != V) throw ValidationError("Multi-VAE model does not match training data");
    m->train_ = std::move(train);
    return m;
  }

 private:
  DenseMatrix binarized(std::span<const std::size_t> users) const {
    DenseMatrix x = DenseMatrix::Zero(static_cast<Eigen::Index>(users.size()), static_cast<Eigen::Index>(weights_.items()));
    for (std::size_t r = 0; r < users.size(); ++r)
      for (Index a : train_->row(users[r])) x(static_cast<Eigen::Index>(r), a) = 1.0;
    return x;
  }

  void apply_update(const VaeWeights& grad, VaeWeights& velocity, double batch) {
    const double lr = params_.learning_rate, mom = params_.momentum;
    std::vector<const double*> g;
    grad.for_each([&](const char*, const double* d, Eigen::Index) { g.push_back(d); });
    std::vector<double*> v;
    velocity.for_each([&](const char*, double* d, Eigen::Index) { v.push_back(d); });
    std::size_t block = 0;
    weights_.for_each([&](const char*, double* d, Eigen::Index n) {
      for (Eigen::Index i = 0; i < n; ++i) {
        v[block][i] = mom * v[block][i] + g[block][i] / batch;
        d[i] -= lr * v[block][i];
      }
      ++block;
    });
  }

  MultiVaeParams params_;
  VaeWeights weights_;
  std::vector<double> loss_curve_;
  std::shared_ptr<const InteractionDataset> train_;
};

}  // namespace popbias
