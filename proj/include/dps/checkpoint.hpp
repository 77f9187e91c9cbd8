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
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dps/errors.hpp"
#include "dps/text_io.hpp"
#include "dps/training.hpp"

namespace dps {

constexpr const char* kCheckpointMagic = "DPS-CHECKPOINT";

namespace detail {

inline void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  out << "rows " << m.rows() << " cols " << m.cols() << "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      out << fmt_double(m(r, c));
    }
    out << '\n';
  }
}

inline Eigen::MatrixXd read_matrix(LineReader& rd) {
  const std::string shape_line = rd.require();
  auto dims = split_ws(shape_line);
  if (dims.size() != 4 || dims[0] != "rows" || dims[2] != "cols") rd.fail("expected 'rows R cols C'");
  const auto rows = parse_int(dims[1]);
  const auto cols = parse_int(dims[3]);
  if (rows < 0 || cols < 0) rd.fail("negative matrix shape");
  Eigen::MatrixXd m(rows, cols);
  for (long long r = 0; r < rows; ++r) {
    const std::string row_line = rd.require();
    auto vals = split_ws(row_line);
    if (static_cast<long long>(vals.size()) != cols) rd.fail("short matrix row");
    for (long long c = 0; c < cols; ++c) m(r, c) = parse_double(vals[static_cast<size_t>(c)]);
  }
  return m;
}

}  // namespace detail

/// Plain-text checkpoint. Every floating value is written in shortest
/// round-trip form, so save -> load -> save reproduces the file byte for
/// byte and the reloaded model is bit-identical.
inline void save_checkpoint(const RunArtifacts& art, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw storage_error("cannot open '" + path + "' for writing");
  const TrainConfig& c = art.cfg;
  out << kCheckpointMagic << " 1\n";
  out << "[meta]\n";
  out << "sampler " << to_string(c.sampler) << "\n";
  out << "recon " << to_string(c.recon) << "\n";
  out << "factor " << c.factor << "\n";
  out << "n_nominal " << c.n_nominal << "\n";
  out << "n " << art.n << "\n";
  out << "m " << art.m << "\n";
  out << "k " << c.k << "\n";
  out << "amplitude_std " << fmt_double(c.amplitude_std) << "\n";
  out << "n_iter " << c.n_iter << "\n";
  out << "batch " << c.batch << "\n";
  out << "lr_theta " << fmt_double(c.lr_theta) << "\n";
  out << "lr_phi " << fmt_double(c.lr_phi) << "\n";
  out << "l2_lambda " << fmt_double(c.l2_lambda) << "\n";
  out << "entropy_mu " << fmt_double(c.entropy_mu) << "\n";
  out << "adam_beta1 " << fmt_double(c.adam_beta1) << "\n";
  out << "adam_beta2 " << fmt_double(c.adam_beta2) << "\n";
  out << "adam_eps " << fmt_double(c.adam_eps) << "\n";
  out << "tau_init " << fmt_double(c.tau_init) << "\n";
  out << "tau_end " << fmt_double(c.tau_end) << "\n";
  out << "seed " << c.seed << "\n";
  out << "shrink_slope " << fmt_double(art.theta.shrink_slope) << "\n";
  out << "completed_iters " << art.completed_iters << "\n";
  out << "[pattern]\n";
  out << "count " << art.pattern.measurements() << "\n";
  for (int i = 0; i < art.pattern.measurements(); ++i) {
    if (i) out << ' ';
    out << art.pattern.indices[static_cast<size_t>(i)];
  }
  out << '\n';
  out << "[phi]\n";
  detail::write_matrix(out, art.phi.phi);
  out << "[theta]\n";
  for (int l = 0; l < 3; ++l) {
    out << "W" << (l + 1) << "\n";
    detail::write_matrix(out, art.theta.W[static_cast<size_t>(l)]);
  }
  for (int l = 0; l < 2; ++l) {
    out << "S" << (l + 2) << "\n";
    detail::write_matrix(out, art.theta.S[static_cast<size_t>(l)]);
  }
  out << "t\n";
  detail::write_matrix(out, Eigen::MatrixXd(art.theta.t.transpose()));
  out << "[history]\n";
  detail::write_matrix(out, art.history);
  if (!out) throw storage_error("write failed for '" + path + "'");
}

inline RunArtifacts load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw storage_error("cannot open '" + path + "' for reading");
  LineReader rd(in, path);

  const std::string magic_line = rd.require();
  auto magic = split_ws(magic_line);
  if (magic.size() != 2 || magic[0] != kCheckpointMagic) rd.fail("not a checkpoint file");
  if (parse_int(magic[1]) != 1) rd.fail("unsupported checkpoint version");
  if (rd.require() != "[meta]") rd.fail("expected [meta]");

  std::map<std::string, std::string> meta;
  std::string line;
  while (true) {
    line = rd.require();
    if (line == "[pattern]") break;
    auto kv = split_ws(line);
    if (kv.size() != 2) rd.fail("expected 'key value' in [meta]");
    meta[std::string(kv[0])] = std::string(kv[1]);
  }
  auto need = [&](const char* key) -> const std::string& {
    auto it = meta.find(key);
    if (it == meta.end()) throw storage_error(path + ": missing meta key '" + key + "'");
    return it->second;
  };

  RunArtifacts art;
  TrainConfig& c = art.cfg;
  c.sampler = parse_sampler(need("sampler"));
  c.recon = parse_recon(need("recon"));
  c.factor = static_cast<int>(parse_int(need("factor")));
  c.n_nominal = static_cast<int>(parse_int(need("n_nominal")));
  art.n = static_cast<int>(parse_int(need("n")));
  art.m = static_cast<int>(parse_int(need("m")));
  c.k = static_cast<int>(parse_int(need("k")));
  c.amplitude_std = parse_double(need("amplitude_std"));
  c.n_iter = static_cast<int>(parse_int(need("n_iter")));
  c.batch = static_cast<int>(parse_int(need("batch")));
  c.lr_theta = parse_double(need("lr_theta"));
  c.lr_phi = parse_double(need("lr_phi"));
  c.l2_lambda = parse_double(need("l2_lambda"));
  c.entropy_mu = parse_double(need("entropy_mu"));
  c.adam_beta1 = parse_double(need("adam_beta1"));
  c.adam_beta2 = parse_double(need("adam_beta2"));
  c.adam_eps = parse_double(need("adam_eps"));
  c.tau_init = parse_double(need("tau_init"));
  c.tau_end = parse_double(need("tau_end"));
  c.seed = parse_u64(need("seed"));
  art.theta.shrink_slope = parse_double(need("shrink_slope"));
  art.completed_iters = static_cast<int>(parse_int(need("completed_iters")));

  const std::string count_text = rd.require();
  auto count_line = split_ws(count_text);
  if (count_line.size() != 2 || count_line[0] != "count") rd.fail("expected 'count M'");
  const auto pat_count = parse_int(count_line[1]);
  art.pattern.signal_length = art.n;
  if (pat_count > 0) {
    const std::string index_text = rd.require();
    auto vals = split_ws(index_text);
    if (static_cast<long long>(vals.size()) != pat_count) rd.fail("short pattern row");
    art.pattern.indices.reserve(static_cast<size_t>(pat_count));
    for (auto v : vals) art.pattern.indices.push_back(static_cast<int>(parse_int(v)));
  } else {
    rd.require();  // the empty index line
  }

  auto expect = [&](const char* tag) {
    line = rd.require();
    if (line != tag) rd.fail(std::string("expected '") + tag + "', got '" + line + "'");
  };
  expect("[phi]");
  art.phi.phi = detail::read_matrix(rd);
  expect("[theta]");
  for (int l = 0; l < 3; ++l) {
    expect(("W" + std::to_string(l + 1)).c_str());
    art.theta.W[static_cast<size_t>(l)] = detail::read_matrix(rd);
  }
  for (int l = 0; l < 2; ++l) {
    expect(("S" + std::to_string(l + 2)).c_str());
    art.theta.S[static_cast<size_t>(l)] = detail::read_matrix(rd);
  }
  expect("t");
  art.theta.t = detail::read_matrix(rd).transpose();
  expect("[history]");
  art.history = detail::read_matrix(rd);

  if (art.phi.phi.rows() != art.m || art.phi.phi.cols() != art.n)
    throw storage_error(path + ": logits shape disagrees with meta");
  art.pattern.validate();
  art.theta.validate();
  return art;
}

/// FNV-1a over a file's bytes; handy for determinism checks.
inline std::uint64_t file_hash(const std::string& path) { return fnv1a64(read_file(path)); }

}  // namespace dps
