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
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <utility>

#include "dps/errors.hpp"
#include "dps/sampling.hpp"
#include "dps/signals.hpp"

namespace dps {

/// Sub-sampled unitary DFT: psi = A F where A gathers pattern rows. The
/// realified form stacks [Re(psi); Im(psi)] so real networks can consume
/// complex measurements as paired channels.
struct SensingMatrix {
  Eigen::MatrixXcd psi;      // M x N
  Eigen::MatrixXd realified; // 2M x N
  Eigen::Index m() const { return psi.rows(); }
  Eigen::Index n() const { return psi.cols(); }
};

inline SensingMatrix build_sensing_matrix(const SamplingPattern& pat, int n) {
  if (pat.signal_length != n) throw config_error("build_sensing_matrix: pattern length mismatch");
  pat.validate();
  const int m = pat.measurements();
  SensingMatrix s;
  s.psi.resize(m, n);
  const Eigen::MatrixXcd& f = dft_matrix(n);
  for (int r = 0; r < m; ++r) s.psi.row(r) = f.row(pat.indices[static_cast<size_t>(r)]);
  s.realified.resize(2 * m, n);
  s.realified.topRows(m) = s.psi.real();
  s.realified.bottomRows(m) = s.psi.imag();
  return s;
}

/// Stacks a batch of complex measurements (rows of y, B x M) into paired real
/// channels, 2M x B with columns as signals.
inline Eigen::MatrixXd realify_measurements(const Eigen::MatrixXcd& y) {
  const Eigen::Index m = y.cols(), b = y.rows();
  Eigen::MatrixXd out(2 * m, b);
  out.topRows(m) = y.real().transpose();
  out.bottomRows(m) = y.imag().transpose();
  return out;
}

inline Eigen::VectorXd realify_measurements(const Eigen::VectorXcd& y) {
  Eigen::VectorXd out(2 * y.size());
  out.head(y.size()) = y.real();
  out.tail(y.size()) = y.imag();
  return out;
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Smooth soft-threshold surrogate v * sigmoid(a(|v| - t)); odd in v,
/// differentiable everywhere (including v = 0), and pointwise convergent to
/// hard soft-thresholding-like gating as a grows. Requires a > 0.
inline double sigmoid_shrink(double v, double t, double a) {
  return v * stable_sigmoid(a * (std::abs(v) - t));
}

/// d/dv of sigmoid_shrink: s + a|v| s(1-s), even in v.
inline double sigmoid_shrink_dv(double v, double t, double a) {
  const double s = stable_sigmoid(a * (std::abs(v) - t));
  return s + a * std::abs(v) * s * (1.0 - s);
}

/// d/dt of sigmoid_shrink: -a v s(1-s).
inline double sigmoid_shrink_dt(double v, double t, double a) {
  const double s = stable_sigmoid(a * (std::abs(v) - t));
  return -a * v * s * (1.0 - s);
}

struct IstaConfig {
  int n_iter = 300;
  double step = 1.0;
  double threshold = 0.1;
};

/// Classic proximal-gradient sparse recovery over the complex sensing matrix:
/// z <- soft(z + step * Re(psi^H (y - psi z)); step * threshold).
inline Eigen::VectorXd ista(
    const Eigen::VectorXcd& y, const SensingMatrix& sensing, const IstaConfig& cfg,
    const std::function<void(int, const Eigen::VectorXd&)>& on_iterate = {}) {
  if (cfg.n_iter < 1) throw config_error("ista requires n_iter >= 1");
  if (!(cfg.step > 0.0) || !(cfg.threshold > 0.0))
    throw config_error("ista requires positive step and threshold");
  if (y.size() != sensing.m()) throw config_error("ista: measurement size mismatch");
  const Eigen::Index n = sensing.n();
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  const double gate = cfg.step * cfg.threshold;
  Eigen::VectorXcd r(sensing.m());
  Eigen::VectorXd v(n);
  for (int it = 1; it <= cfg.n_iter; ++it) {
    r = y - sensing.psi * z.cast<std::complex<double>>();
    v = z + cfg.step * (sensing.psi.adjoint() * r).real();
    z = ((v.array().abs() - gate).max(0.0) * v.array().sign()).matrix();
    if (!z.allFinite()) throw divergence_error("ista: iterate became non-finite");
    if (on_iterate) on_iterate(it, z);
  }
  return z;
}

/// Learned 3-fold unrolled estimator. W maps realified measurements (2M) to
/// the signal domain (N); S mixes the previous estimate back in from fold 2
/// on; each fold ends in the smooth shrink with its own trained threshold.
struct ListaParams {
  std::array<Eigen::MatrixXd, 3> W;  // each N x 2M
  std::array<Eigen::MatrixXd, 2> S;  // folds 2, 3: N x N
  Eigen::VectorXd t;                 // 3 thresholds
  double shrink_slope = 20.0;

  static constexpr int folds() { return 3; }

  void validate() const {
    if (t.size() != 3) throw config_error("lista expects one threshold per fold");
    if (!(shrink_slope > 0.0)) throw config_error("shrink slope must be positive");
    const Eigen::Index n = W[0].rows(), m2 = W[0].cols();
    for (const auto& w : W)
      if (w.rows() != n || w.cols() != m2) throw config_error("lista W shapes disagree");
    for (const auto& s : S)
      if (s.rows() != n || s.cols() != n) throw config_error("lista S shapes disagree");
  }
};

/// Matched-filter initialization: W = psi_r^T, S = I - psi_r^T psi_r plus
/// N(0, 0.01^2) jitter, thresholds 0.1. One noise draw per S entry, fold 2
/// first, row-major.
inline ListaParams init_lista(const SensingMatrix& sensing, RandomStream& rng,
                              double noise_std = 0.01, double threshold0 = 0.1) {
  const Eigen::Index n = sensing.n();
  ListaParams p;
  for (auto& w : p.W) w = sensing.realified.transpose();
  const Eigen::MatrixXd base =
      Eigen::MatrixXd::Identity(n, n) - sensing.realified.transpose() * sensing.realified;
  for (auto& s : p.S) {
    s = base;
    for (Eigen::Index r = 0; r < n; ++r)
      for (Eigen::Index c = 0; c < n; ++c) s(r, c) += rng.normal(noise_std);
  }
  p.t = Eigen::VectorXd::Constant(3, threshold0);
  return p;
}

/// Intermediate state of one forward pass, retained for the backward pass.
/// sig caches sigmoid(a(|v| - t)) so backward needs no fresh exponentials.
struct ListaCache {
  Eigen::MatrixXd y_r;                  // 2M x B
  std::array<Eigen::MatrixXd, 3> v;     // pre-shrink activations, N x B
  std::array<Eigen::MatrixXd, 3> z;     // post-shrink estimates, N x B
  std::array<Eigen::MatrixXd, 3> sig;   // shrink gates, N x B
};

struct ListaGrads {
  std::array<Eigen::MatrixXd, 3> W;
  std::array<Eigen::MatrixXd, 2> S;
  Eigen::VectorXd t;
};

/// Batched forward pass; columns of y_r are independent signals.
inline std::pair<Eigen::MatrixXd, ListaCache> lista_forward_batch(const ListaParams& p,
                                                                  const Eigen::MatrixXd& y_r) {
  p.validate();
  if (y_r.rows() != p.W[0].cols()) throw config_error("lista_forward: measurement size mismatch");
  const double a = p.shrink_slope;
  ListaCache c;
  c.y_r = y_r;
  for (int l = 0; l < 3; ++l) {
    c.v[static_cast<size_t>(l)] = p.W[static_cast<size_t>(l)] * y_r;
    if (l > 0) c.v[static_cast<size_t>(l)] += p.S[static_cast<size_t>(l - 1)] * c.z[static_cast<size_t>(l - 1)];
    const double t = p.t(l);
    c.sig[static_cast<size_t>(l)] =
        (a * (c.v[static_cast<size_t>(l)].array().abs() - t))
            .unaryExpr([](double x) { return stable_sigmoid(x); })
            .matrix();
    c.z[static_cast<size_t>(l)] =
        (c.v[static_cast<size_t>(l)].array() * c.sig[static_cast<size_t>(l)].array()).matrix();
  }
  return {c.z[2], c};
}

inline std::pair<Eigen::VectorXd, ListaCache> lista_forward(const ListaParams& p,
                                                            const Eigen::VectorXcd& y) {
  auto [z, cache] = lista_forward_batch(p, realify_measurements(y));
  return {Eigen::VectorXd(z.col(0)), std::move(cache)};
}

/// Inference-only batched forward: the same arithmetic as
/// lista_forward_batch, but no per-fold caches are kept and the sigmoid runs
/// through Eigen's vectorized path. This is the deployed form of the
/// network; outputs agree with the cached forward to rounding error.
inline Eigen::MatrixXd lista_infer_batch(const ListaParams& p, const Eigen::MatrixXd& y_r) {
  p.validate();
  if (y_r.rows() != p.W[0].cols()) throw config_error("lista_infer: measurement size mismatch");
  const double a = p.shrink_slope;
  Eigen::MatrixXd z, v;
  for (int l = 0; l < 3; ++l) {
    v.noalias() = p.W[static_cast<size_t>(l)] * y_r;
    if (l > 0) v.noalias() += p.S[static_cast<size_t>(l - 1)] * z;
    z = (v.array() * (a * (v.array().abs() - p.t(l))).logistic()).matrix();
  }
  return z;
}

/// Reverse-mode gradients for all parameters and the realified measurements,
/// given dL/d(output). Pure function of the cached forward state.
inline std::pair<ListaGrads, Eigen::MatrixXd> lista_backward_batch(const ListaParams& p,
                                                                   const ListaCache& c,
                                                                   const Eigen::MatrixXd& g_out) {
  const double a = p.shrink_slope;
  ListaGrads g;
  g.t = Eigen::VectorXd::Zero(3);
  Eigen::MatrixXd g_yr = Eigen::MatrixXd::Zero(c.y_r.rows(), c.y_r.cols());
  Eigen::MatrixXd gz = g_out;
  for (int l = 2; l >= 0; --l) {
    const auto& v = c.v[static_cast<size_t>(l)];
    const auto& sig = c.sig[static_cast<size_t>(l)];
    // ds/dv = s + a|v|s(1-s);  ds/dt = -a v s(1-s)
    const Eigen::ArrayXXd sp = sig.array() * (1.0 - sig.array());
    const Eigen::MatrixXd gv =
        (gz.array() * (sig.array() + a * v.array().abs() * sp)).matrix();
    g.t(l) = (gz.array() * (-a * v.array() * sp)).sum();
    g.W[static_cast<size_t>(l)] = gv * c.y_r.transpose();
    g_yr += p.W[static_cast<size_t>(l)].transpose() * gv;
    if (l > 0) {
      g.S[static_cast<size_t>(l - 1)] = gv * c.z[static_cast<size_t>(l - 1)].transpose();
      gz = p.S[static_cast<size_t>(l - 1)].transpose() * gv;
    }
  }
  return {g, g_yr};
}

}  // namespace dps
