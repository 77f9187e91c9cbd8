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
#include <Eigen/SVD>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dps/errors.hpp"
#include "dps/checkpoint.hpp"
#include "dps/reconstruction.hpp"
#include "dps/sampling.hpp"
#include "dps/signals.hpp"
#include "dps/training.hpp"

namespace dps {

enum class PatternMode { map, sample, fixed };

inline const char* to_string(PatternMode m) {
  switch (m) {
    case PatternMode::map: return "map";
    case PatternMode::sample: return "sample";
    case PatternMode::fixed: return "fixed";
  }
  throw internal_error("bad pattern mode");
}

inline PatternMode parse_pattern_mode(const std::string& s) {
  if (s == "map") return PatternMode::map;
  if (s == "sample") return PatternMode::sample;
  if (s == "fixed") return PatternMode::fixed;
  throw config_error("unknown pattern mode '" + s + "' (expected map|sample|fixed)");
}

struct EvalOptions {
  std::optional<ReconKind> recon;  // defaults to the trained estimator
  IstaConfig ista;
  std::uint64_t pattern_seed = 1;  // used by PatternMode::sample
  // Diagnostic override: given (signal index, measurements), produce the
  // estimate directly. Lets tests wire in oracles.
  std::function<Eigen::VectorXd(int, const Eigen::VectorXcd&)> recon_hook;
};

struct EvalReport {
  double mean_mse = 0.0;       // per-element squared error, averaged over signals
  double baseline_mse = 0.0;   // same metric for the all-zero predictor
  Eigen::VectorXd per_signal;
  SamplingPattern pattern;
  double seconds = 0.0;        // wall time spent inside the reconstructions
};

inline SamplingPattern resolve_pattern(const RunArtifacts& art, PatternMode mode,
                                       std::uint64_t pattern_seed) {
  switch (mode) {
    case PatternMode::map:
      return map_pattern(art.phi);
    case PatternMode::sample: {
      RandomStream rng(pattern_seed, "gumbel");
      return draw_pattern(art.phi, sample_gumbel(rng, art.m, art.n)).first;
    }
    case PatternMode::fixed:
      if (art.pattern.measurements() == 0)
        throw config_error("checkpoint carries no fixed pattern");
      return art.pattern;
  }
  throw internal_error("bad pattern mode");
}

/// Reconstructs every test signal once and reports the per-element MSE
/// ||z_hat - z||^2 / N per signal, its mean, and the empirical signal power
/// per element (the score of the all-zero predictor) as a baseline.
inline EvalReport evaluate(const RunArtifacts& art, const SignalBatch& test, PatternMode mode,
                           const EvalOptions& opts = {}) {
  if (test.n() != art.n)
    throw config_error("evaluate: test-set signal length " + std::to_string(test.n()) +
                       " does not match model length " + std::to_string(art.n));
  if (test.size() < 1) throw config_error("evaluate: empty test set");

  EvalReport rep;
  rep.pattern = resolve_pattern(art, mode, opts.pattern_seed);
  const ReconKind recon = opts.recon.value_or(art.cfg.recon);
  const SensingMatrix sensing = build_sensing_matrix(rep.pattern, art.n);
  const Eigen::MatrixXcd y_all = apply_pattern(rep.pattern, test.x);

  const int count = static_cast<int>(test.size());
  const double n = static_cast<double>(art.n);
  rep.per_signal.resize(count);

  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < count; ++i) {
    const Eigen::VectorXcd y = y_all.row(i).transpose();
    Eigen::VectorXd z_hat;
    if (opts.recon_hook) {
      z_hat = opts.recon_hook(i, y);
    } else if (recon == ReconKind::lista) {
      z_hat = lista_forward(art.theta, y).first;
    } else {
      z_hat = ista(y, sensing, opts.ista);
    }
    rep.per_signal(i) = (z_hat - test.z.row(i).transpose()).squaredNorm() / n;
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  rep.mean_mse = rep.per_signal.mean();
  rep.baseline_mse = test.z.rowwise().squaredNorm().mean() / n;
  return rep;
}

struct RipReport {
  long tested = 0;
  bool exhaustive = false;
  double min_singular = std::numeric_limits<double>::infinity();
  double tol = 1e-6;
  bool pass = false;
};

namespace detail {

/// C(n, k) capped to avoid overflow; anything above the cap is "huge".
inline double binomial_capped(int n, int k, double cap) {
  double v = 1.0;
  for (int i = 1; i <= k; ++i) {
    v *= static_cast<double>(n - k + i) / i;
    if (v > cap) return cap + 1.0;
  }
  return v;
}

}  // namespace detail

/// Smallest singular value of psi restricted to K columns, minimized over
/// column subsets: exhaustively when C(N, K) <= trials, otherwise over
/// `trials` uniformly drawn subsets. The pattern passes when even the worst
/// tested subset keeps full column rank (sigma_min > tol).
inline RipReport rip_rank_check(const SamplingPattern& pat, int k, long trials = 10000,
                                double tol = 1e-6, std::uint64_t seed = 12345) {
  const int n = pat.signal_length;
  const int m = pat.measurements();
  if (k <= 0 || k > m)
    throw config_error("rip check requires 0 < K <= M");
  if (trials < 1) throw config_error("rip check requires trials >= 1");
  const SensingMatrix sensing = build_sensing_matrix(pat, n);

  RipReport rep;
  rep.tol = tol;
  Eigen::MatrixXcd sub(m, k);
  auto test_subset = [&](const std::vector<int>& cols) {
    for (int j = 0; j < k; ++j) sub.col(j) = sensing.psi.col(cols[static_cast<size_t>(j)]);
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(sub);
    const double smin = svd.singularValues().minCoeff();
    rep.min_singular = std::min(rep.min_singular, smin);
    ++rep.tested;
  };

  const double total = detail::binomial_capped(n, k, static_cast<double>(trials));
  if (total <= static_cast<double>(trials)) {
    rep.exhaustive = true;
    std::vector<int> cols(static_cast<size_t>(k));
    for (int j = 0; j < k; ++j) cols[static_cast<size_t>(j)] = j;
    while (true) {
      test_subset(cols);
      int i = k - 1;
      while (i >= 0 && cols[static_cast<size_t>(i)] == n - k + i) --i;
      if (i < 0) break;
      ++cols[static_cast<size_t>(i)];
      for (int j = i + 1; j < k; ++j) cols[static_cast<size_t>(j)] = cols[static_cast<size_t>(j - 1)] + 1;
    }
  } else {
    RandomStream rng(seed, "rip");
    std::vector<int> pool(static_cast<size_t>(n));
    std::vector<int> cols(static_cast<size_t>(k));
    for (long tr = 0; tr < trials; ++tr) {
      std::iota(pool.begin(), pool.end(), 0);
      for (int j = 0; j < k; ++j) {
        const int swap_at = j + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - j)));
        std::swap(pool[static_cast<size_t>(j)], pool[static_cast<size_t>(swap_at)]);
        cols[static_cast<size_t>(j)] = pool[static_cast<size_t>(j)];
      }
      test_subset(cols);
    }
  }
  rep.pass = rep.min_singular > tol;
  return rep;
}

struct GratingLobeQuery {
  int k = 1;              // lobe order
  double wavelength = 0.3;  // same unit as pitch
  double pitch = 0.151;     // element spacing before sub-sampling
  double factor = 4.0;      // sub-sampling factor
};

/// First-order grating lobe direction, in degrees, of a uniformly
/// sub-sampled array: asin(k * wavelength / (pitch * factor)). Returns
/// nullopt when the argument leaves [-1, 1], i.e. no lobe enters real space.
inline std::optional<double> grating_lobe_angle(const GratingLobeQuery& q) {
  if (q.k < 1) throw config_error("grating lobe order must be >= 1");
  if (!(q.wavelength > 0.0) || !(q.pitch > 0.0) || !(q.factor > 0.0))
    throw config_error("grating lobe geometry must be positive");
  const double arg = q.k * q.wavelength / (q.pitch * q.factor);
  if (arg > 1.0) return std::nullopt;
  return std::asin(arg) * 180.0 / std::numbers::pi;
}

struct TimingReport {
  double lista_seconds = 0.0;  // median over repetitions
  double ista_seconds = 0.0;
  double speedup = 0.0;        // ista / lista
  int reps = 0;
  int signals = 0;
};

/// Times both estimators over the whole test set, median of `reps` passes.
/// Pattern resolution, sensing-matrix construction, and measurement
/// formation are excluded: only solver arithmetic is inside the clock.
/// The unrolled network runs in its deployed form — one batched forward over
/// the whole set — while ista iterates per signal as usual.
inline TimingReport timing_benchmark(const RunArtifacts& art, const IstaConfig& ista_cfg,
                                     const SignalBatch& test, int reps = 5) {
  if (reps < 1) throw config_error("timing_benchmark requires reps >= 1");
  if (test.n() != art.n) throw config_error("timing_benchmark: test-set length mismatch");
  const SamplingPattern pat = art.cfg.sampler == SamplerKind::dps
                                  ? map_pattern(art.phi)
                                  : art.pattern;
  const SensingMatrix sensing = build_sensing_matrix(pat, art.n);
  const Eigen::MatrixXcd y_all = apply_pattern(pat, test.x);
  const Eigen::MatrixXd y_r_all = realify_measurements(y_all);
  const int count = static_cast<int>(test.size());

  std::vector<Eigen::VectorXcd> ys(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) ys[static_cast<size_t>(i)] = y_all.row(i).transpose();

  volatile double sink = 0.0;  // keep the solver calls observable
  auto median_time = [&](const std::function<void()>& pass) {
    std::vector<double> times(static_cast<size_t>(reps));
    for (int r = 0; r < reps; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      pass();
      times[static_cast<size_t>(r)] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    std::sort(times.begin(), times.end());
    return times[static_cast<size_t>(reps / 2)];
  };

  TimingReport rep;
  rep.reps = reps;
  rep.signals = count;
  rep.lista_seconds = median_time([&] {
    sink = sink + lista_infer_batch(art.theta, y_r_all)(0, 0);
  });
  rep.ista_seconds = median_time([&] {
    for (const auto& y : ys) sink = sink + ista(y, sensing, ista_cfg)(0);
  });
  rep.speedup = rep.ista_seconds / rep.lista_seconds;
  return rep;
}

/// Writes softmax(phi) as CSV, one row distribution per line. Values are in
/// shortest round-trip form; each row sums to 1 within 1e-9 by construction.
inline void export_distributions(const LogitsMatrix& logits, const std::string& path) {
  const Eigen::MatrixXd pi = row_distributions(logits);
  for (Eigen::Index r = 0; r < pi.rows(); ++r) {
    const double sum = pi.row(r).sum();
    if (std::abs(sum - 1.0) > 1e-9)
      throw internal_error("row distribution drifted from 1: sum=" + fmt_double(sum));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw storage_error("cannot open '" + path + "' for writing");
  for (Eigen::Index r = 0; r < pi.rows(); ++r) {
    for (Eigen::Index c = 0; c < pi.cols(); ++c) {
      if (c) out << ',';
      out << fmt_double(pi(r, c));
    }
    out << '\n';
  }
  if (!out) throw storage_error("write failed for '" + path + "'");
}

inline Eigen::MatrixXd load_csv_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw storage_error("cannot open '" + path + "' for reading");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    size_t start = 0;
    while (start <= line.size()) {
      const size_t comma = line.find(',', start);
      const size_t end = comma == std::string::npos ? line.size() : comma;
      row.push_back(parse_double(std::string_view(line).substr(start, end - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw storage_error(path + ": ragged CSV rows");
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = rows[static_cast<size_t>(r)][static_cast<size_t>(c)];
  return m;
}

}  // namespace dps
