#pragma once

// Plain-loop reference implementations for the unit tests and the acceptance runner.

#include <algorithm>
#include <cmath>
#include <vector>

#include "popbias.hpp"

namespace popbias::oracle {

// Pairwise AUC straight from the definition.
inline double brute_auc(const std::vector<std::uint8_t>& f) {
  double good = 0, total = 0;
  for (std::size_t i = 0; i < f.size(); ++i)
    for (std::size_t j = 0; j < f.size(); ++j)
      if (f[i] && !f[j]) {
        total += 1;
        good += i < j ? 1 : 0;
      }
  return good / total;
}

inline double brute_ap(const std::vector<std::uint8_t>& f, std::size_t k) {
  const auto P = static_cast<std::size_t>(std::count(f.begin(), f.end(), 1));
  double s = 0;
  for (std::size_t i = 0; i < std::min(k, f.size()); ++i) {
    if (!f[i]) continue;
    double hits = 0;
    for (std::size_t j = 0; j <= i; ++j) hits += f[j];
    s += hits / static_cast<double>(i + 1);
  }
  return s / static_cast<double>(std::min(k, P));
}

inline std::vector<std::uint8_t> random_flags(Rng& rng) {
  const std::size_t n = 2 + rng.index(40);
  std::vector<std::uint8_t> f(n, 0);
  f[0] = 1;
  f[1] = 0;
  for (std::size_t i = 2; i < n; ++i) f[i] = rng.uniform() < 0.3 ? 1 : 0;
  for (std::size_t i = n - 1; i > 0; --i) std::swap(f[i], f[rng.index(i + 1)]);
  return f;
}

// Dense copy of the training matrix.
inline std::vector<std::vector<double>> dense(const InteractionDataset& d, bool binarize = false) {
  std::vector<std::vector<double>> A(d.num_users(), std::vector<double>(d.num_artists(), 0.0));
  for (std::size_t u = 0; u < d.num_users(); ++u)
    for (std::size_t k = 0; k < d.profile_size(u); ++k)
      A[u][d.row(u)[k]] = binarize ? 1.0 : static_cast<double>(d.row_counts(u)[k]);
  return A;
}

// Objective restricted to target column t for a dense weight vector w.
inline double column_objective(const std::vector<std::vector<double>>& A, std::size_t t, const std::vector<double>& w,
                        const SlimParams& p) {
  double loss = 0, l2 = 0, l1 = 0;
  for (const auto& row : A) {
    double r = row[t];
    for (std::size_t j = 0; j < w.size(); ++j) r -= row[j] * w[j];
    loss += r * r;
  }
  for (double v : w) {
    l2 += v * v;
    l1 += std::abs(v);
  }
  return 0.5 * loss + 0.5 * p.l2 * l2 + p.l1 * l1;
}

inline std::vector<double> dense_column(const SlimWeights& W, std::size_t t) {
  std::vector<double> w(W.num_artists, 0.0);
  for (const auto& [j, v] : W.columns[t]) w[j] = v;
  return w;
}

using Dense = std::vector<std::vector<double>>;

inline Dense to_dense(const Matrix& m) {
  Dense out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

// Gaussian elimination with partial pivoting.
inline std::vector<double> solve(Dense A, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    std::swap(A[c], A[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = A[r][c] / A[c][c];
      for (std::size_t k = c; k < n; ++k) A[r][k] -= f * A[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= A[i][k] * x[k];
    x[i] = s / A[i][i];
  }
  return x;
}

// Dense confidence and preference matrices.
struct Problem {
  Dense C, P;
};

inline Problem dense_problem(const InteractionDataset& d, const WrmfParams& p) {
  Problem pr{Dense(d.num_users(), std::vector<double>(d.num_artists(), 1.0)),
             Dense(d.num_users(), std::vector<double>(d.num_artists(), 0.0))};
  for (std::size_t u = 0; u < d.num_users(); ++u)
    for (std::size_t k = 0; k < d.profile_size(u); ++k) {
      pr.C[u][d.row(u)[k]] = p.confidence(d.row_counts(u)[k]);
      pr.P[u][d.row(u)[k]] = 1.0;
    }
  return pr;
}

// Naive (F^T C F + lambda I) x = F^T C p for every row of the "solved" side.
inline Dense naive_half_sweep(const Dense& F, const Dense& C, const Dense& P, double lambda, bool transpose) {
  const std::size_t rows = transpose ? C[0].size() : C.size();
  const std::size_t others = F.size();
  const std::size_t d = F[0].size();
  Dense out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    Dense A(d, std::vector<double>(d, 0.0));
    std::vector<double> b(d, 0.0);
    for (std::size_t o = 0; o < others; ++o) {
      const double c = transpose ? C[o][r] : C[r][o];
      const double pv = transpose ? P[o][r] : P[r][o];
      for (std::size_t i = 0; i < d; ++i) {
        b[i] += c * pv * F[o][i];
        for (std::size_t j = 0; j < d; ++j) A[i][j] += c * F[o][i] * F[o][j];
      }
    }
    for (std::size_t i = 0; i < d; ++i) A[i][i] += lambda;
    out[r] = solve(A, b);
  }
  return out;
}

inline double naive_objective(const Dense& X, const Dense& Y, const Problem& pr, double lambda) {
  double f = 0;
  for (std::size_t u = 0; u < X.size(); ++u)
    for (std::size_t i = 0; i < Y.size(); ++i) {
      double s = 0;
      for (std::size_t k = 0; k < X[u].size(); ++k) s += X[u][k] * Y[i][k];
      f += pr.C[u][i] * (pr.P[u][i] - s) * (pr.P[u][i] - s);
    }
  for (const auto& row : X)
    for (double v : row) f += lambda * v * v;
  for (const auto& row : Y)
    for (double v : row) f += lambda * v * v;
  return f;
}

inline double max_diff(const Dense& a, const Matrix& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j)
      m = std::max(m, std::abs(a[i][j] - b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
  return m;
}

struct Instance {
  VaeWeights w;
  std::vector<double> x, noise;
};

inline Instance random_instance(std::uint64_t seed, std::size_t V = 12, std::size_t H = 8, std::size_t L = 4) {
  Rng rng(seed);
  Instance in{VaeWeights::zeros(V, H, L), std::vector<double>(V, 0.0), std::vector<double>(L)};
  in.w.for_each([&](const char*, double* d, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) d[i] = rng.uniform(-0.6, 0.6);
  });
  for (auto& v : in.x) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  in.x[rng.index(V)] = 1.0;
  for (auto& v : in.noise) v = rng.normal();
  return in;
}

inline double tanh_(double v) { return std::tanh(v); }

// Plain-loop forward pass, written independently of the Eigen version.
inline ElboTerms naive_elbo(const Instance& in, double beta) {
  const auto& w = in.w;
  const std::size_t V = w.items(), H = w.hidden(), L = w.latent();
  double norm = 0;
  for (double v : in.x) norm += v * v;
  norm = std::sqrt(norm);
  std::vector<double> h1(H), mu(L), lv(L), z(L), h3(H), logit(V);
  for (std::size_t h = 0; h < H; ++h) {
    double a = w.enc_b(static_cast<Eigen::Index>(h));
    for (std::size_t v = 0; v < V; ++v) a += w.enc_w(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(v)) * in.x[v] / norm;
    h1[h] = tanh_(a);
  }
  for (std::size_t l = 0; l < 2 * L; ++l) {
    double a = w.enc_out_b(static_cast<Eigen::Index>(l));
    for (std::size_t h = 0; h < H; ++h) a += w.enc_out_w(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(h)) * h1[h];
    (l < L ? mu[l] : lv[l - L]) = a;
  }
  for (std::size_t l = 0; l < L; ++l) z[l] = mu[l] + std::exp(0.5 * lv[l]) * in.noise[l];
  for (std::size_t h = 0; h < H; ++h) {
    double a = w.dec_b(static_cast<Eigen::Index>(h));
    for (std::size_t l = 0; l < L; ++l) a += w.dec_w(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(l)) * z[l];
    h3[h] = tanh_(a);
  }
  double denom = 0;
  for (std::size_t v = 0; v < V; ++v) {
    double a = w.dec_out_b(static_cast<Eigen::Index>(v));
    for (std::size_t h = 0; h < H; ++h) a += w.dec_out_w(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(h)) * h3[h];
    logit[v] = a;
    denom += std::exp(a);
  }
  ElboTerms t;
  for (std::size_t v = 0; v < V; ++v) t.nll -= in.x[v] * (logit[v] - std::log(denom));
  for (std::size_t l = 0; l < L; ++l) t.kl += 0.5 * (mu[l] * mu[l] + std::exp(lv[l]) - lv[l] - 1);
  t.total = t.nll + beta * t.kl;
  return t;
}

inline std::vector<double> flatten(const VaeWeights& w) {
  std::vector<double> out;
  w.for_each([&](const char*, const double* d, Eigen::Index n) { out.insert(out.end(), d, d + n); });
  return out;
}

}  // namespace popbias::oracle
