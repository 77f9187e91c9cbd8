// Copyright 2026 The DPS Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "dps/errors.hpp"
#include "dps/rng.hpp"

namespace dps {

/// Trainable selection scores: one row of logits per measurement.
struct LogitsMatrix {
  Eigen::MatrixXd phi;  // M x N
  Eigen::Index rows() const { return phi.rows(); }
  Eigen::Index cols() const { return phi.cols(); }
};

/// One standard Gumbel draw per logit, shared by the hard forward pass and
/// the soft backward pass of the same iteration.
struct GumbelNoise {
  Eigen::MatrixXd e;  // M x N
};

/// Large negative constant used to knock already-selected columns out of
/// every later row's argmax and softmax.
constexpr double kMaskNeg = -1e9;

/// Cumulative exclusion mask. Row m applies to measurement m, so row 0 is all
/// zero and row m has exactly m entries at kMaskNeg.
struct MaskState {
  Eigen::MatrixXd w;  // (M+1) x N
};

/// M distinct column indices of an N-point spectrum, in selection order.
struct SamplingPattern {
  std::vector<int> indices;
  int signal_length = 0;

  int measurements() const { return static_cast<int>(indices.size()); }

  Eigen::MatrixXd onehot() const {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(measurements(), signal_length);
    for (int m = 0; m < measurements(); ++m) a(m, indices[static_cast<size_t>(m)]) = 1.0;
    return a;
  }

  void validate() const {
    std::vector<bool> seen(static_cast<size_t>(signal_length), false);
    for (int idx : indices) {
      if (idx < 0 || idx >= signal_length)
        throw internal_error("pattern index " + std::to_string(idx) + " out of range");
      if (seen[static_cast<size_t>(idx)])
        throw internal_error("pattern index " + std::to_string(idx) + " repeated");
      seen[static_cast<size_t>(idx)] = true;
    }
  }
};

/// Quartic ridge centered on the uniform-stride diagonal, plus Gaussian
/// jitter, so early training prefers a near-uniform but symmetry-broken grid.
/// The grid offset d for row m, column n uses 1-based coordinates.
inline LogitsMatrix init_logits(int m_rows, int n_cols, RandomStream& rng,
                                double noise_std = 0.1) {
  if (m_rows <= 0 || n_cols <= 0 || m_rows > n_cols)
    throw config_error("init_logits requires 0 < M <= N");
  constexpr double kQuartic = -2.73e-7;
  constexpr double kQuadratic = -2.73e-3;
  const double ratio = static_cast<double>(n_cols) / m_rows;
  LogitsMatrix out;
  out.phi.resize(m_rows, n_cols);
  for (int m = 0; m < m_rows; ++m)
    for (int n = 0; n < n_cols; ++n) {
      const double d = (n + 1) - ratio * (m + 1);
      const double d2 = d * d;
      out.phi(m, n) = kQuartic * d2 * d2 + kQuadratic * d2 + rng.normal(noise_std);
    }
  return out;
}

/// Standard Gumbel quantile transform of u in (0, 1).
inline double gumbel_from_uniform(double u) { return -std::log(-std::log(u)); }

inline GumbelNoise sample_gumbel(RandomStream& rng, int rows, int cols) {
  if (rows <= 0 || cols <= 0) throw config_error("sample_gumbel requires positive shape");
  GumbelNoise g;
  g.e.resize(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) g.e(r, c) = gumbel_from_uniform(rng.uniform_open01());
  return g;
}

namespace detail {
inline int argmax_first(const Eigen::RowVectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}
}  // namespace detail

/// Sequential perturbed argmax over rows: row m picks the maximum of
/// mask + logits + noise, then masks that column for all later rows. Exact
/// ties resolve to the lowest index.
inline std::pair<SamplingPattern, MaskState> draw_pattern(const LogitsMatrix& logits,
                                                          const GumbelNoise& noise) {
  const Eigen::Index m_rows = logits.rows(), n_cols = logits.cols();
  if (noise.e.rows() != m_rows || noise.e.cols() != n_cols)
    throw config_error("draw_pattern: noise shape does not match logits");
  MaskState mask;
  mask.w = Eigen::MatrixXd::Zero(m_rows + 1, n_cols);
  SamplingPattern pat;
  pat.signal_length = static_cast<int>(n_cols);
  pat.indices.resize(static_cast<size_t>(m_rows));
  Eigen::RowVectorXd score(n_cols);
  for (Eigen::Index m = 0; m < m_rows; ++m) {
    score = mask.w.row(m) + logits.phi.row(m) + noise.e.row(m);
    const int pick = detail::argmax_first(score);
    pat.indices[static_cast<size_t>(m)] = pick;
    mask.w.row(m + 1) = mask.w.row(m);
    mask.w(m + 1, pick) = kMaskNeg;
  }
  return {pat, mask};
}

/// Noise-free greedy maximizer of the same sequential selection.
inline SamplingPattern map_pattern(const LogitsMatrix& logits) {
  GumbelNoise zero;
  zero.e = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
  return draw_pattern(logits, zero).first;
}

/// Tempered softmax of (mask + logits + noise) per row; the relaxation whose
/// Jacobian stands in for the non-differentiable argmax.
inline Eigen::MatrixXd soft_rows(const LogitsMatrix& logits, const GumbelNoise& noise,
                                 const MaskState& mask, double tau) {
  if (!(tau > 0.0)) throw config_error("soft_rows requires tau > 0");
  const Eigen::Index m_rows = logits.rows(), n_cols = logits.cols();
  if (noise.e.rows() != m_rows || noise.e.cols() != n_cols)
    throw config_error("soft_rows: noise shape does not match logits");
  if (mask.w.rows() != m_rows + 1 || mask.w.cols() != n_cols)
    throw config_error("soft_rows: mask shape does not match logits");
  Eigen::MatrixXd out(m_rows, n_cols);
  Eigen::RowVectorXd s(n_cols);
  for (Eigen::Index m = 0; m < m_rows; ++m) {
    s = (mask.w.row(m) + logits.phi.row(m) + noise.e.row(m)) / tau;
    const double peak = s.maxCoeff();
    out.row(m) = (s.array() - peak).exp();
    out.row(m) /= out.row(m).sum();
  }
  return out;
}

/// Pulls an upstream gradient through the tempered softmax rows:
/// g = (p .* (u - <p, u>)) / tau per row. Masked-out columns receive zero;
/// the mask itself is treated as constant.
inline Eigen::MatrixXd st_grad_logits(const Eigen::MatrixXd& upstream,
                                      const Eigen::MatrixXd& soft, double tau,
                                      const MaskState& mask) {
  if (!(tau > 0.0)) throw config_error("st_grad_logits requires tau > 0");
  if (upstream.rows() != soft.rows() || upstream.cols() != soft.cols())
    throw config_error("st_grad_logits: upstream shape does not match soft rows");
  const Eigen::Index m_rows = soft.rows(), n_cols = soft.cols();
  Eigen::MatrixXd grad(m_rows, n_cols);
  for (Eigen::Index m = 0; m < m_rows; ++m) {
    const auto p = soft.row(m).array();
    const auto u = upstream.row(m).array();
    const double inner = (p * u).sum();
    grad.row(m) = (p * (u - inner) / tau).matrix();
    for (Eigen::Index n = 0; n < n_cols; ++n)
      if (mask.w(m, n) != 0.0) grad(m, n) = 0.0;
  }
  return grad;
}

/// Total Shannon entropy of the unmasked row distributions (natural log) and
/// its gradient with respect to the logits. Maximized at uniform rows; adding
/// a small negative weight of it to the loss sharpens the distributions.
inline std::pair<double, Eigen::MatrixXd> entropy_penalty(const LogitsMatrix& logits) {
  const Eigen::Index m_rows = logits.rows(), n_cols = logits.cols();
  double total = 0.0;
  Eigen::MatrixXd grad(m_rows, n_cols);
  Eigen::RowVectorXd logp(n_cols);
  for (Eigen::Index m = 0; m < m_rows; ++m) {
    const auto row = logits.phi.row(m);
    const double peak = row.maxCoeff();
    const double lse = peak + std::log((row.array() - peak).exp().sum());
    logp = row.array() - lse;
    double h = 0.0;
    for (Eigen::Index n = 0; n < n_cols; ++n) {
      const double p = std::exp(logp(n));
      if (p > 0.0) h -= p * logp(n);
    }
    total += h;
    for (Eigen::Index n = 0; n < n_cols; ++n) {
      const double p = std::exp(logp(n));
      grad(m, n) = p > 0.0 ? -p * (logp(n) + h) : 0.0;
    }
  }
  return {total, grad};
}

/// Row distributions softmax(phi): each row sums to one.
inline Eigen::MatrixXd row_distributions(const LogitsMatrix& logits) {
  Eigen::MatrixXd out(logits.rows(), logits.cols());
  for (Eigen::Index m = 0; m < logits.rows(); ++m) {
    const auto row = logits.phi.row(m);
    const double peak = row.maxCoeff();
    out.row(m) = (row.array() - peak).exp();
    out.row(m) /= out.row(m).sum();
  }
  return out;
}

/// Evenly strided baseline pattern: indices 0, N/M, 2N/M, ...
inline SamplingPattern uniform_pattern(int n, int m) {
  if (m <= 0 || n <= 0 || n % m != 0)
    throw config_error("uniform_pattern requires M dividing N");
  SamplingPattern pat;
  pat.signal_length = n;
  const int stride = n / m;
  pat.indices.resize(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) pat.indices[static_cast<size_t>(i)] = i * stride;
  return pat;
}

/// M distinct indices drawn uniformly at random, in draw order.
inline SamplingPattern random_pattern(int n, int m, RandomStream& rng) {
  if (m <= 0 || n <= 0 || m > n) throw config_error("random_pattern requires 0 < M <= N");
  std::vector<int> pool(static_cast<size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  SamplingPattern pat;
  pat.signal_length = n;
  pat.indices.resize(static_cast<size_t>(m));
  for (int j = 0; j < m; ++j) {
    const int swap_at = j + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - j)));
    std::swap(pool[static_cast<size_t>(j)], pool[static_cast<size_t>(swap_at)]);
    pat.indices[static_cast<size_t>(j)] = pool[static_cast<size_t>(j)];
  }
  return pat;
}

/// Gathers the sampled spectrum columns: rows are signals, output is B x M.
inline Eigen::MatrixXcd apply_pattern(const SamplingPattern& pat, const Eigen::MatrixXcd& x) {
  if (pat.signal_length != x.cols())
    throw config_error("apply_pattern: pattern length does not match signals");
  Eigen::MatrixXcd y(x.rows(), pat.measurements());
  for (int m = 0; m < pat.measurements(); ++m) {
    const int idx = pat.indices[static_cast<size_t>(m)];
    if (idx < 0 || idx >= x.cols()) throw internal_error("apply_pattern: index out of range");
    y.col(m) = x.col(idx);
  }
  return y;
}

inline Eigen::VectorXcd apply_pattern(const SamplingPattern& pat, const Eigen::VectorXcd& x) {
  Eigen::MatrixXcd y = apply_pattern(pat, Eigen::MatrixXcd(x.transpose()));
  return y.row(0).transpose();
}

}  // namespace dps
