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
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dps/errors.hpp"
#include "dps/reconstruction.hpp"
#include "dps/rng.hpp"
#include "dps/sampling.hpp"
#include "dps/signals.hpp"
#include "dps/text_io.hpp"

namespace dps {

enum class SamplerKind { dps, uniform, random };
enum class ReconKind { lista, ista };

inline const char* to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::dps: return "dps";
    case SamplerKind::uniform: return "uniform";
    case SamplerKind::random: return "random";
  }
  throw internal_error("bad sampler kind");
}

inline const char* to_string(ReconKind k) {
  switch (k) {
    case ReconKind::lista: return "lista";
    case ReconKind::ista: return "ista";
  }
  throw internal_error("bad recon kind");
}

inline SamplerKind parse_sampler(const std::string& s) {
  if (s == "dps") return SamplerKind::dps;
  if (s == "uniform") return SamplerKind::uniform;
  if (s == "random") return SamplerKind::random;
  throw config_error("unknown sampler '" + s + "' (expected dps|uniform|random)");
}

inline ReconKind parse_recon(const std::string& s) {
  if (s == "lista") return ReconKind::lista;
  if (s == "ista") return ReconKind::ista;
  throw config_error("unknown recon '" + s + "' (expected lista|ista)");
}

struct TemperatureSchedule {
  double tau_init = 5.0;
  double tau_end = 0.5;
  int n_iter = 1;
};

/// Linear relaxation-temperature decay over 1-based iterations. Both
/// endpoints are returned exactly: tau(1) == tau_init, tau(n_iter) == tau_end.
inline double anneal_tau(const TemperatureSchedule& s, int iteration) {
  if (s.n_iter < 1) throw config_error("schedule needs n_iter >= 1");
  if (!(s.tau_init > 0.0) || !(s.tau_end > 0.0) || s.tau_end > s.tau_init)
    throw config_error("schedule requires tau_init >= tau_end > 0");
  if (iteration < 1 || iteration > s.n_iter)
    throw config_error("anneal_tau: iteration out of range");
  if (iteration == 1) return s.tau_init;
  if (iteration == s.n_iter) return s.tau_end;
  const double frac = static_cast<double>(iteration - 1) / (s.n_iter - 1);
  return s.tau_init + (s.tau_end - s.tau_init) * frac;
}

struct TrainConfig {
  int n_iter = 96000;
  int batch = 16;
  double lr_theta = 1e-3;
  double lr_phi = 5e-3;
  double l2_lambda = 0.0;
  double entropy_mu = 1e-8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-7;
  double tau_init = 5.0;
  double tau_end = 0.5;
  SamplerKind sampler = SamplerKind::dps;
  ReconKind recon = ReconKind::lista;
  int factor = 4;
  int n_nominal = 128;
  int k = 5;
  double amplitude_std = 1.0;
  std::uint64_t seed = 1;

  TemperatureSchedule schedule() const { return {tau_init, tau_end, n_iter}; }
};

inline void validate(const TrainConfig& c) {
  if (c.n_iter < 1 || c.batch < 1) throw config_error("n_iter and batch must be >= 1");
  if (!(c.lr_theta > 0.0) || !(c.lr_phi > 0.0)) throw config_error("learning rates must be positive");
  if (c.l2_lambda < 0.0 || c.entropy_mu < 0.0) throw config_error("penalty weights must be >= 0");
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0) || !(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0))
    throw config_error("adam betas must lie in [0, 1)");
  if (!(c.adam_eps > 0.0)) throw config_error("adam_eps must be positive");
  if (!(c.tau_init > 0.0) || !(c.tau_end > 0.0) || c.tau_end > c.tau_init)
    throw config_error("temperature schedule requires tau_init >= tau_end > 0");
  if (c.factor < 1) throw config_error("factor must be >= 1");
  if (c.n_nominal < c.factor) throw config_error("n_nominal must be >= factor");
  if (c.k <= 0) throw config_error("k must be positive");
  if (!(c.amplitude_std > 0.0)) throw config_error("amplitude_std must be positive");
}

/// First-moment/second-moment accumulator for one tensor.
struct AdamState {
  Eigen::ArrayXXd m, v;
  long step = 0;

  void init(Eigen::Index rows, Eigen::Index cols) {
    m = Eigen::ArrayXXd::Zero(rows, cols);
    v = Eigen::ArrayXXd::Zero(rows, cols);
    step = 0;
  }
};

/// One bias-corrected Adam update of param in place.
template <typename Mat>
inline void adam_step(AdamState& st, const Mat& grad, Mat& param, double lr,
                      const TrainConfig& cfg) {
  if (!grad.allFinite()) throw divergence_error("adam_step: non-finite gradient");
  if (st.m.rows() != grad.rows() || st.m.cols() != grad.cols()) st.init(grad.rows(), grad.cols());
  ++st.step;
  st.m = cfg.adam_beta1 * st.m + (1.0 - cfg.adam_beta1) * grad.array();
  st.v = cfg.adam_beta2 * st.v + (1.0 - cfg.adam_beta2) * grad.array().square();
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(st.step));
  param.array() -= lr * (st.m / c1) / ((st.v / c2).sqrt() + cfg.adam_eps);
}

struct LossComponents {
  double mse = 0.0;       // batch mean of ||z_hat - z||^2
  double theta_l2 = 0.0;  // ||theta||^2 over all trained arrays
  double entropy = 0.0;   // total row entropy of the logits
  double total = 0.0;
};

inline double theta_sq_norm(const ListaParams& p) {
  double s = 0.0;
  for (const auto& w : p.W) s += w.squaredNorm();
  for (const auto& m : p.S) s += m.squaredNorm();
  s += p.t.squaredNorm();
  return s;
}

/// Columns of z_hat and z_ref are signals.
inline LossComponents total_loss(const Eigen::MatrixXd& z_hat, const Eigen::MatrixXd& z_ref,
                                 const ListaParams& theta, const LogitsMatrix& phi,
                                 const TrainConfig& cfg) {
  if (z_hat.rows() != z_ref.rows() || z_hat.cols() != z_ref.cols())
    throw config_error("total_loss: estimate/reference shape mismatch");
  LossComponents out;
  out.mse = (z_hat - z_ref).squaredNorm() / static_cast<double>(z_hat.cols());
  out.theta_l2 = theta_sq_norm(theta);
  out.entropy = entropy_penalty(phi).first;
  out.total = out.mse + cfg.l2_lambda * out.theta_l2 + cfg.entropy_mu * out.entropy;
  return out;
}

/// Everything a finished (or aborted) run leaves behind.
struct RunArtifacts {
  TrainConfig cfg;
  int n = 0;  // effective signal length
  int m = 0;  // measurement count
  LogitsMatrix phi;
  ListaParams theta;
  // Fixed pattern for uniform/random runs; the noise-free greedy pattern of
  // the final logits for dps runs.
  SamplingPattern pattern;
  Eigen::MatrixXd history;  // completed_iters x 3: total, mse, entropy
  int completed_iters = 0;
};

/// divergence_error that still carries whatever the run produced so far.
struct train_divergence : divergence_error {
  RunArtifacts partial;
  train_divergence(const std::string& msg, RunArtifacts p)
      : divergence_error(msg), partial(std::move(p)) {}
};

struct TrainProgress {
  int iteration = 0;
  double total = 0.0, mse = 0.0, entropy = 0.0, tau = 0.0;
};
using ProgressFn = std::function<void(const TrainProgress&)>;

/// Jointly trains the sampling logits (dps mode) and the unrolled estimator
/// on freshly drawn batches. Fixed-pattern modes (uniform/random) train only
/// the estimator and never touch the logits. Deterministic in cfg.seed.
inline RunArtifacts train(const TrainConfig& cfg, const ProgressFn& progress = {}) {
  validate(cfg);
  if (cfg.recon != ReconKind::lista)
    throw config_error("training drives the lista estimator; use eval for ista");

  const int n = effective_length(cfg.n_nominal, cfg.factor);
  const int m = n / cfg.factor;
  if (cfg.k >= n) throw config_error("k must be smaller than the effective length");

  RandomStream data_rng(cfg.seed, "data");
  RandomStream gumbel_rng(cfg.seed, "gumbel");
  RandomStream init_rng(cfg.seed, "init");

  RunArtifacts art;
  art.cfg = cfg;
  art.n = n;
  art.m = m;
  art.phi = init_logits(m, n, init_rng);

  const bool learned_pattern = cfg.sampler == SamplerKind::dps;
  if (cfg.sampler == SamplerKind::uniform) art.pattern = uniform_pattern(n, m);
  if (cfg.sampler == SamplerKind::random) art.pattern = random_pattern(n, m, init_rng);

  // The estimator starts matched to a concrete sensing matrix; in dps mode
  // that is the greedy pattern of the fresh logits.
  const SamplingPattern init_pattern = learned_pattern ? map_pattern(art.phi) : art.pattern;
  art.theta = init_lista(build_sensing_matrix(init_pattern, n), init_rng);

  AdamState st_w[3], st_s[2], st_t, st_phi;
  const SparseSignalConfig scfg{n, cfg.k, cfg.amplitude_std, cfg.seed};
  const TemperatureSchedule sched = cfg.schedule();
  art.history.resize(cfg.n_iter, 3);

  auto partial = [&](int done) {
    RunArtifacts p = art;
    p.completed_iters = done;
    p.history.conservativeResize(done, 3);
    if (learned_pattern) p.pattern = map_pattern(p.phi);
    return p;
  };

  for (int it = 1; it <= cfg.n_iter; ++it) {
    const double tau = anneal_tau(sched, it);
    const SignalBatch batch = gen_sparse_batch(scfg, cfg.batch, data_rng);

    GumbelNoise noise;
    MaskState mask;
    SamplingPattern pat;
    if (learned_pattern) {
      noise = sample_gumbel(gumbel_rng, m, n);
      std::tie(pat, mask) = draw_pattern(art.phi, noise);
    } else {
      pat = art.pattern;
    }

    const Eigen::MatrixXcd y = apply_pattern(pat, batch.x);
    const Eigen::MatrixXd y_r = realify_measurements(y);
    const Eigen::MatrixXd z_ref = batch.z.transpose();
    auto [z_hat, cache] = lista_forward_batch(art.theta, y_r);

    LossComponents loss;
    loss.mse = (z_hat - z_ref).squaredNorm() / cfg.batch;
    loss.theta_l2 = cfg.l2_lambda > 0.0 ? theta_sq_norm(art.theta) : 0.0;
    std::pair<double, Eigen::MatrixXd> ent{0.0, Eigen::MatrixXd()};
    if (learned_pattern) ent = entropy_penalty(art.phi);
    loss.entropy = ent.first;
    loss.total = loss.mse + cfg.l2_lambda * loss.theta_l2 + cfg.entropy_mu * loss.entropy;
    if (!std::isfinite(loss.total))
      throw train_divergence("loss became non-finite at iteration " + std::to_string(it),
                             partial(it - 1));

    const Eigen::MatrixXd g_out = (2.0 / cfg.batch) * (z_hat - z_ref);
    auto [grads, g_yr] = lista_backward_batch(art.theta, cache, g_out);
    if (cfg.l2_lambda > 0.0) {
      for (int l = 0; l < 3; ++l) grads.W[static_cast<size_t>(l)] += 2.0 * cfg.l2_lambda * art.theta.W[static_cast<size_t>(l)];
      for (int l = 0; l < 2; ++l) grads.S[static_cast<size_t>(l)] += 2.0 * cfg.l2_lambda * art.theta.S[static_cast<size_t>(l)];
      grads.t += 2.0 * cfg.l2_lambda * art.theta.t;
    }

    try {
      if (learned_pattern) {
        // Chain rule through y = sum_n a_{m,n} x_n with a relaxed to the
        // tempered softmax rows: the upstream signal for row m, column n is
        // Re(g_y_m) Re(x_n) + Im(g_y_m) Im(x_n), i.e. one real GEMM per part.
        const Eigen::MatrixXd upstream = g_yr.topRows(m) * batch.x.real() +
                                         g_yr.bottomRows(m) * batch.x.imag();
        const Eigen::MatrixXd soft = soft_rows(art.phi, noise, mask, tau);
        Eigen::MatrixXd g_phi = st_grad_logits(upstream, soft, tau, mask);
        g_phi += cfg.entropy_mu * ent.second;
        adam_step(st_phi, g_phi, art.phi.phi, cfg.lr_phi, cfg);
      }
      for (int l = 0; l < 3; ++l)
        adam_step(st_w[l], grads.W[static_cast<size_t>(l)], art.theta.W[static_cast<size_t>(l)], cfg.lr_theta, cfg);
      for (int l = 0; l < 2; ++l)
        adam_step(st_s[l], grads.S[static_cast<size_t>(l)], art.theta.S[static_cast<size_t>(l)], cfg.lr_theta, cfg);
      adam_step(st_t, grads.t, art.theta.t, cfg.lr_theta, cfg);
    } catch (const divergence_error& e) {
      throw train_divergence(std::string(e.what()) + " at iteration " + std::to_string(it),
                             partial(it - 1));
    }
    art.theta.t = art.theta.t.cwiseMax(0.0);  // thresholds stay physical

    art.history(it - 1, 0) = loss.total;
    art.history(it - 1, 1) = loss.mse;
    art.history(it - 1, 2) = loss.entropy;
    if (progress) progress({it, loss.total, loss.mse, loss.entropy, tau});
  }

  art.completed_iters = cfg.n_iter;
  if (learned_pattern) art.pattern = map_pattern(art.phi);
  return art;
}

// ---------------------------------------------------------------------------
// Analytic-vs-numeric gradient verification.

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Test hook: negates the analytic entropy gradient so the check must fail.
  bool flip_entropy_gradient_sign = false;
};

struct GradCheckBlock {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;

  double worst() const {
    double w = 0.0;
    for (const auto& b : blocks) w = std::max(w, b.max_rel_err);
    return w;
  }
  bool all_below(double threshold) const { return worst() < threshold; }
};

namespace detail {

/// Max absolute deviation, relative to the largest entry of either tensor.
inline double rel_err_inf(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double denom = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), 1e-12});
  return (a - b).cwiseAbs().maxCoeff() / denom;
}

inline double check_st_softmax(double tau, double eps) {
  RandomStream rng(8211u, "gradcheck-st");
  const int m = 3, n = 8;
  LogitsMatrix phi;
  phi.phi.resize(m, n);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) phi.phi(r, c) = rng.normal();
  const GumbelNoise noise = sample_gumbel(rng, m, n);
  const MaskState mask = draw_pattern(phi, noise).second;
  Eigen::MatrixXd up(m, n);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) up(r, c) = rng.normal();

  const Eigen::MatrixXd analytic =
      st_grad_logits(up, soft_rows(phi, noise, mask, tau), tau, mask);
  auto scalar_loss = [&](const LogitsMatrix& l) {
    return (up.array() * soft_rows(l, noise, mask, tau).array()).sum();
  };
  Eigen::MatrixXd numeric(m, n);
  LogitsMatrix probe = phi;
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) {
      const double saved = probe.phi(r, c);
      probe.phi(r, c) = saved + eps;
      const double hi = scalar_loss(probe);
      probe.phi(r, c) = saved - eps;
      const double lo = scalar_loss(probe);
      probe.phi(r, c) = saved;
      numeric(r, c) = (hi - lo) / (2.0 * eps);
    }
  return rel_err_inf(analytic, numeric);
}

inline double check_entropy(double eps, bool flip_sign) {
  RandomStream rng(40961u, "gradcheck-entropy");
  const int m = 3, n = 8;
  LogitsMatrix phi;
  phi.phi.resize(m, n);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) phi.phi(r, c) = rng.normal();
  Eigen::MatrixXd analytic = entropy_penalty(phi).second;
  if (flip_sign) analytic = -analytic;
  Eigen::MatrixXd numeric(m, n);
  LogitsMatrix probe = phi;
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) {
      const double saved = probe.phi(r, c);
      probe.phi(r, c) = saved + eps;
      const double hi = entropy_penalty(probe).first;
      probe.phi(r, c) = saved - eps;
      const double lo = entropy_penalty(probe).first;
      probe.phi(r, c) = saved;
      numeric(r, c) = (hi - lo) / (2.0 * eps);
    }
  return rel_err_inf(analytic, numeric);
}

inline double check_shrink(double eps) {
  // Probe away from v = 0: the derivative exists there but has a curvature
  // kink that breaks the O(eps^2) central-difference model.
  const double vs[] = {-2.0, -0.7, -0.15, 0.08, 0.5, 1.9};
  const double ts[] = {0.05, 0.3};
  const double as[] = {5.0, 20.0};
  double worst = 0.0;
  for (double a : as)
    for (double t : ts)
      for (double v : vs) {
        const double ndv = (sigmoid_shrink(v + eps, t, a) - sigmoid_shrink(v - eps, t, a)) / (2.0 * eps);
        const double ndt = (sigmoid_shrink(v, t + eps, a) - sigmoid_shrink(v, t - eps, a)) / (2.0 * eps);
        const double adv = sigmoid_shrink_dv(v, t, a);
        const double adt = sigmoid_shrink_dt(v, t, a);
        const double denom = std::max({std::abs(adv), std::abs(adt), 1.0});
        worst = std::max(worst, std::abs(ndv - adv) / denom);
        worst = std::max(worst, std::abs(ndt - adt) / denom);
      }
  return worst;
}

inline double check_lista(double eps) {
  RandomStream rng(51520u, "gradcheck-lista");
  const int n = 6, m = 3, b = 2;
  const SamplingPattern pat = random_pattern(n, m, rng);
  const SensingMatrix sensing = build_sensing_matrix(pat, n);
  ListaParams p = init_lista(sensing, rng);
  Eigen::MatrixXd y_r(2 * m, b), cost(n, b);
  for (int r = 0; r < 2 * m; ++r)
    for (int c = 0; c < b; ++c) y_r(r, c) = rng.normal();
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < b; ++c) cost(r, c) = rng.normal();

  auto loss_of = [&](const ListaParams& q, const Eigen::MatrixXd& yr) {
    return (cost.array() * lista_forward_batch(q, yr).first.array()).sum();
  };
  auto [z, cache] = lista_forward_batch(p, y_r);
  (void)z;
  auto [analytic, g_yr] = lista_backward_batch(p, cache, cost);

  double worst = 0.0;
  auto fd_matrix = [&](Eigen::MatrixXd& target, const Eigen::MatrixXd& expected,
                       const Eigen::MatrixXd* yr_override) {
    Eigen::MatrixXd numeric(expected.rows(), expected.cols());
    for (Eigen::Index r = 0; r < target.rows(); ++r)
      for (Eigen::Index c = 0; c < target.cols(); ++c) {
        const double saved = target(r, c);
        target(r, c) = saved + eps;
        const double hi = loss_of(p, yr_override ? *yr_override : y_r);
        target(r, c) = saved - eps;
        const double lo = loss_of(p, yr_override ? *yr_override : y_r);
        target(r, c) = saved;
        numeric(r, c) = (hi - lo) / (2.0 * eps);
      }
    worst = std::max(worst, rel_err_inf(expected, numeric));
  };
  for (int l = 0; l < 3; ++l) fd_matrix(p.W[static_cast<size_t>(l)], analytic.W[static_cast<size_t>(l)], nullptr);
  for (int l = 0; l < 2; ++l) fd_matrix(p.S[static_cast<size_t>(l)], analytic.S[static_cast<size_t>(l)], nullptr);
  {
    Eigen::MatrixXd numeric(3, 1);
    for (int l = 0; l < 3; ++l) {
      const double saved = p.t(l);
      p.t(l) = saved + eps;
      const double hi = loss_of(p, y_r);
      p.t(l) = saved - eps;
      const double lo = loss_of(p, y_r);
      p.t(l) = saved;
      numeric(l, 0) = (hi - lo) / (2.0 * eps);
    }
    worst = std::max(worst, rel_err_inf(Eigen::MatrixXd(analytic.t), numeric));
  }
  {
    Eigen::MatrixXd yr_probe = y_r;
    fd_matrix(yr_probe, g_yr, &yr_probe);
  }
  return worst;
}

}  // namespace detail

/// Central-difference verification of every analytic gradient path. Each
/// block reports the worst deviation relative to its largest gradient entry.
inline GradCheckReport grad_check_all(const GradCheckOptions& opts = {}) {
  if (!(opts.epsilon > 0.0)) throw config_error("grad check epsilon must be positive");
  GradCheckReport rep;
  for (double tau : {5.0, 1.0, 0.5}) {
    rep.blocks.push_back({"st_softmax_tau_" + fmt_double(tau),
                          detail::check_st_softmax(tau, opts.epsilon)});
  }
  rep.blocks.push_back({"entropy_penalty",
                        detail::check_entropy(opts.epsilon, opts.flip_entropy_gradient_sign)});
  rep.blocks.push_back({"sigmoid_shrink", detail::check_shrink(opts.epsilon)});
  rep.blocks.push_back({"lista", detail::check_lista(opts.epsilon)});
  return rep;
}

}  // namespace dps
