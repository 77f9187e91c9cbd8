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
#include <complex>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "dps/errors.hpp"
#include "dps/rng.hpp"
#include "dps/text_io.hpp"

namespace dps {

/// Ground-truth sparse signals and their Fourier-domain counterparts.
struct SparseSignalConfig {
  int n = 128;                 // signal length
  int k = 5;                   // nonzeros per signal
  double amplitude_std = 1.0;  // Gaussian amplitude scale
  std::uint64_t seed = 1;
};

/// Rows are signals: z real (B x n), x = dft(z) complex (B x n).
struct SignalBatch {
  Eigen::MatrixXd z;
  Eigen::MatrixXcd x;
  Eigen::Index size() const { return z.rows(); }
  Eigen::Index n() const { return z.cols(); }
};

inline void validate(const SparseSignalConfig& cfg) {
  if (cfg.n <= 0 || cfg.k <= 0 || cfg.k >= cfg.n)
    throw config_error("sparse signal config requires 0 < k < n, got n=" +
                       std::to_string(cfg.n) + " k=" + std::to_string(cfg.k));
  if (!(cfg.amplitude_std > 0.0))
    throw config_error("amplitude_std must be positive");
}

/// Unitary DFT matrix; symmetric, F^-1 = conj(F). Cached per length.
inline const Eigen::MatrixXcd& dft_matrix(int n) {
  static thread_local std::map<int, Eigen::MatrixXcd> cache;
  auto [it, inserted] = cache.try_emplace(n);
  if (inserted) {
    Eigen::MatrixXcd& f = it->second;
    f.resize(n, n);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        const long long phase = static_cast<long long>(r) * c % n;
        f(r, c) = std::polar(scale, -2.0 * std::numbers::pi * static_cast<double>(phase) / n);
      }
  }
  return it->second;
}

/// Row-wise unitary DFT: each row of z is transformed independently.
inline Eigen::MatrixXcd dft(const Eigen::MatrixXd& z) {
  // F is symmetric, so transforming rows is a right-multiplication by F.
  return z.cast<std::complex<double>>() * dft_matrix(static_cast<int>(z.cols()));
}

inline Eigen::MatrixXcd dft(const Eigen::MatrixXcd& z) {
  return z * dft_matrix(static_cast<int>(z.cols()));
}

inline Eigen::MatrixXcd idft_complex(const Eigen::MatrixXcd& x) {
  return x * dft_matrix(static_cast<int>(x.cols())).conjugate();
}

/// Residual imaginary magnitude above this is worth a warning: the input was
/// not the transform of a real signal.
constexpr double kImagResidueTol = 1e-8;

/// Row-wise inverse DFT of spectra of real signals. The discarded imaginary
/// residue's max magnitude is written to *max_abs_imag when requested.
inline Eigen::MatrixXd idft(const Eigen::MatrixXcd& x, double* max_abs_imag = nullptr) {
  Eigen::MatrixXcd full = idft_complex(x);
  if (max_abs_imag)
    *max_abs_imag = full.size() == 0 ? 0.0 : full.imag().cwiseAbs().maxCoeff();
  return full.real();
}

/// Nearest multiple of factor to nominal; ties round down. Keeps the
/// measurement count integral at every sub-sampling factor.
inline int effective_length(int nominal, int factor) {
  if (factor < 1 || nominal < factor)
    throw config_error("effective_length requires 1 <= factor <= nominal");
  const int lo = (nominal / factor) * factor;
  const int hi = lo + factor;
  return (nominal - lo <= hi - nominal) ? lo : hi;
}

/// Draws batch_size signals with k uniformly-placed nonzeros and Gaussian
/// amplitudes, plus their spectra. Per signal the draw order is: support
/// indices (partial Fisher-Yates), then one amplitude per chosen index.
inline SignalBatch gen_sparse_batch(const SparseSignalConfig& cfg, int batch_size,
                                    RandomStream& rng) {
  validate(cfg);
  if (batch_size < 1) throw config_error("batch_size must be >= 1");
  SignalBatch out;
  out.z = Eigen::MatrixXd::Zero(batch_size, cfg.n);
  std::vector<int> pool(static_cast<size_t>(cfg.n));
  for (int b = 0; b < batch_size; ++b) {
    std::iota(pool.begin(), pool.end(), 0);
    for (int j = 0; j < cfg.k; ++j) {
      const int swap_at = j + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.n - j)));
      std::swap(pool[static_cast<size_t>(j)], pool[static_cast<size_t>(swap_at)]);
      out.z(b, pool[static_cast<size_t>(j)]) = rng.normal(cfg.amplitude_std);
    }
  }
  out.x = dft(out.z);
  return out;
}

struct TestSetHeader {
  int version = 1;
  int n = 0;
  int k = 0;
  int size = 0;
  std::uint64_t seed = 0;
};

constexpr const char* kTestSetMagic = "DPS-TESTSET";

inline void save_test_set(const SignalBatch& batch, const TestSetHeader& hdr,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw storage_error("cannot open '" + path + "' for writing");
  out << kTestSetMagic << " " << hdr.version << "\n";
  out << "n " << hdr.n << "\nk " << hdr.k << "\nsize " << hdr.size << "\nseed " << hdr.seed << "\n";
  for (Eigen::Index r = 0; r < batch.z.rows(); ++r) {
    for (Eigen::Index c = 0; c < batch.z.cols(); ++c) {
      if (c) out << ' ';
      out << fmt_double(batch.z(r, c));
    }
    out << '\n';
  }
  if (!out) throw storage_error("write failed for '" + path + "'");
}

/// Loads ground truth z and recomputes x; malformed files raise storage_error.
inline SignalBatch load_test_set(const std::string& path, TestSetHeader* hdr_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw storage_error("cannot open '" + path + "' for reading");
  LineReader rd(in, path);

  const std::string magic_line = rd.require();
  auto magic = split_ws(magic_line);
  if (magic.size() != 2 || magic[0] != kTestSetMagic) rd.fail("not a test-set file");
  TestSetHeader hdr;
  hdr.version = static_cast<int>(parse_int(magic[1]));
  if (hdr.version != 1) rd.fail("unsupported test-set version " + std::to_string(hdr.version));

  auto field = [&](const char* key) -> std::string {
    const std::string line = rd.require();
    auto kv = split_ws(line);
    if (kv.size() != 2 || kv[0] != key) rd.fail(std::string("expected '") + key + " <value>'");
    return std::string(kv[1]);
  };
  hdr.n = static_cast<int>(parse_int(field("n")));
  hdr.k = static_cast<int>(parse_int(field("k")));
  hdr.size = static_cast<int>(parse_int(field("size")));
  hdr.seed = parse_u64(field("seed"));
  if (hdr.n <= 0 || hdr.k <= 0 || hdr.size <= 0) rd.fail("invalid header values");

  SignalBatch batch;
  batch.z.resize(hdr.size, hdr.n);
  std::string line;
  for (int r = 0; r < hdr.size; ++r) {
    line = rd.require();
    auto vals = split_ws(line);
    if (static_cast<int>(vals.size()) != hdr.n) rd.fail("expected " + std::to_string(hdr.n) + " values per row");
    for (int c = 0; c < hdr.n; ++c) batch.z(r, c) = parse_double(vals[static_cast<size_t>(c)]);
  }
  batch.x = dft(batch.z);
  if (hdr_out) *hdr_out = hdr;
  return batch;
}

/// Draws a held-out evaluation set and persists it. Regeneration with the
/// same arguments produces a byte-identical file.
inline SignalBatch make_test_set(const SparseSignalConfig& cfg, int size, std::uint64_t seed,
                                 const std::string& path) {
  validate(cfg);
  RandomStream rng(seed, "data");
  SignalBatch batch = gen_sparse_batch(cfg, size, rng);
  TestSetHeader hdr{1, cfg.n, cfg.k, size, seed};
  save_test_set(batch, hdr, path);
  return batch;
}

}  // namespace dps
