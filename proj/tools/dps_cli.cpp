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

// Experiment driver: data generation, training, evaluation, benchmarking,
// and exports, glued together by reproducible run manifests.
//
// Exit codes: 0 success, 1 check failure, 2 usage error, 3 divergence.

#include "dps/dps.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string command_echo(int argc, char** argv) {
  std::string out;
  for (int i = 0; i < argc; ++i) {
    if (i) out += ' ';
    out += argv[i];
  }
  return out;
}

/// Pinned run provenance, written before any long computation starts.
void write_manifest(const fs::path& path, const std::string& command,
                    const std::string& config_path, std::uint64_t seed) {
  nlohmann::json j;
  j["tool"] = "dps";
  j["version"] = dps::kVersion;
  j["command"] = command;
  j["created_utc"] = utc_now();
  j["seed"] = seed;
  if (config_path.empty()) {
    j["config_file"] = nullptr;
    j["config_hash"] = nullptr;
  } else {
    j["config_file"] = config_path;
    j["config_hash"] = hex64(dps::fnv1a64(dps::read_file(config_path)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw dps::storage_error("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) throw dps::storage_error("write failed for '" + path.string() + "'");
}

void write_history_csv(const dps::RunArtifacts& art, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw dps::storage_error("cannot open '" + path + "' for writing");
  out << "iteration,total,mse,entropy\n";
  for (Eigen::Index r = 0; r < art.history.rows(); ++r)
    out << (r + 1) << ',' << dps::fmt_double(art.history(r, 0)) << ','
        << dps::fmt_double(art.history(r, 1)) << ',' << dps::fmt_double(art.history(r, 2))
        << '\n';
  if (!out) throw dps::storage_error("write failed for '" + path + "'");
}

void print_pattern(const dps::SamplingPattern& pat) {
  std::cout << "pattern (" << pat.measurements() << " of " << pat.signal_length << "):";
  for (int idx : pat.indices) std::cout << ' ' << idx;
  std::cout << "\n";
}

void require_flag(const std::string& value, const char* flag) {
  if (value.empty()) throw dps::config_error(std::string(flag) + " is required");
}

/// Applies plain key=value config entries to a subcommand's options.
/// Explicit command-line flags win; unknown keys are usage errors.
void apply_config_file(CLI::App* sub, const std::string& path) {
  if (path.empty()) return;
  std::istringstream in(dps::read_file(path));
  const auto trim = [](const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
  };
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string body = trim(line);
    if (body.empty() || body[0] == '#') continue;
    const auto at = [&] { return path + ":" + std::to_string(lineno) + ": "; };
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw dps::config_error(at() + "expected key=value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw dps::config_error(at() + "empty config key");
    if (key == "config") throw dps::config_error(at() + "config files cannot nest");
    CLI::Option* opt = nullptr;
    try {
      opt = sub->get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw dps::config_error(at() + "unknown config key '" + key + "'");
    }
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

/// "auto" keeps learned runs on their greedy pattern and baseline runs on
/// their stored fixed pattern.
dps::PatternMode resolve_mode_flag(const std::string& mode, const dps::RunArtifacts& art) {
  if (mode == "auto")
    return art.cfg.sampler == dps::SamplerKind::dps ? dps::PatternMode::map
                                                    : dps::PatternMode::fixed;
  return dps::parse_pattern_mode(mode);
}

// --- gen-test ----------------------------------------------------------------

struct GenTestOpts {
  int n = 128, k = 5, size = 1000;
  std::uint64_t seed = 1;
  std::string out, config;
};

int cmd_gen_test(const GenTestOpts& o, const std::string& command) {
  require_flag(o.out, "--out");
  const dps::SparseSignalConfig cfg{o.n, o.k, 1.0, o.seed};
  dps::make_test_set(cfg, o.size, o.seed, o.out);
  write_manifest(o.out + ".manifest.json", command, o.config, o.seed);
  std::cout << "wrote " << o.out << " (n=" << o.n << " k=" << o.k << " size=" << o.size
            << " seed=" << o.seed << ")\n";
  return 0;
}

// --- train ---------------------------------------------------------------------

struct TrainOpts {
  std::string sampler = "dps", recon = "lista", profile = "full";
  std::string out, config;
  int factor = 4, n = 128, k = 5, batch = 16, iters = 0;
  std::uint64_t seed = 1;
  double lr_theta = 1e-3, lr_phi = 5e-3, l2_lambda = 0.0, entropy_mu = 1e-8;
  double tau_init = 5.0, tau_end = 0.5, amplitude_std = 1.0;
};

int cmd_train(const TrainOpts& o, bool iters_given, const std::string& command) {
  require_flag(o.out, "--out");
  dps::TrainConfig cfg;
  cfg.sampler = dps::parse_sampler(o.sampler);
  cfg.recon = dps::parse_recon(o.recon);
  cfg.factor = o.factor;
  cfg.n_nominal = o.n;
  cfg.k = o.k;
  cfg.batch = o.batch;
  cfg.seed = o.seed;
  cfg.lr_theta = o.lr_theta;
  cfg.lr_phi = o.lr_phi;
  cfg.l2_lambda = o.l2_lambda;
  cfg.entropy_mu = o.entropy_mu;
  cfg.tau_init = o.tau_init;
  cfg.tau_end = o.tau_end;
  cfg.amplitude_std = o.amplitude_std;
  cfg.n_iter = iters_given ? o.iters : (o.profile == "desk" ? 20000 : 96000);
  dps::validate(cfg);

  const int n_eff = dps::effective_length(cfg.n_nominal, cfg.factor);
  if (n_eff != cfg.n_nominal)
    std::cout << "signal length adjusted to the nearest factor multiple: " << cfg.n_nominal
              << " -> " << n_eff << "\n";
  std::cout << "training sampler=" << o.sampler << " recon=" << o.recon
            << " factor=" << cfg.factor << " n=" << n_eff << " m=" << n_eff / cfg.factor
            << " iters=" << cfg.n_iter << " seed=" << cfg.seed << "\n";

  fs::create_directories(o.out);
  write_manifest(fs::path(o.out) / "manifest.json", command, o.config, o.seed);

  const int stride = std::max(1, cfg.n_iter / 10);
  const auto progress = [&](const dps::TrainProgress& p) {
    if (p.iteration == 1 || p.iteration % stride == 0 || p.iteration == cfg.n_iter)
      std::cout << "iter " << p.iteration << "/" << cfg.n_iter << " total "
                << dps::fmt_double(p.total) << " mse " << dps::fmt_double(p.mse) << " entropy "
                << dps::fmt_double(p.entropy) << " tau " << dps::fmt_double(p.tau) << "\n";
  };
  const auto persist = [&](const dps::RunArtifacts& art) {
    dps::save_checkpoint(art, (fs::path(o.out) / "checkpoint.txt").string());
    write_history_csv(art, (fs::path(o.out) / "history.csv").string());
  };

  try {
    const dps::RunArtifacts art = dps::train(cfg, progress);
    persist(art);
    print_pattern(art.pattern);
    std::cout << "saved " << (fs::path(o.out) / "checkpoint.txt").string() << "\n";
    return 0;
  } catch (const dps::train_divergence& e) {
    persist(e.partial);
    std::cerr << "training diverged: " << e.what() << " (partial checkpoint saved after "
              << e.partial.completed_iters << " iterations)\n";
    return 3;
  }
}

// --- eval ----------------------------------------------------------------------

struct EvalOpts {
  std::string checkpoint, test, mode = "auto", recon, report, summary, config;
  std::uint64_t pattern_seed = 1;
  int ista_iters = 300;
  double ista_threshold = 0.1, ista_step = 1.0;
};

void append_summary_row(const std::string& path, const std::string& sampler,
                        const std::string& recon, int factor, const dps::EvalReport& rep) {
  const bool fresh = !fs::exists(path);
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw dps::storage_error("cannot open '" + path + "' for appending");
  if (fresh) out << "sampler,recon,factor,mean_mse,baseline_mse,seconds\n";
  out << sampler << ',' << recon << ',' << factor << ',' << dps::fmt_double(rep.mean_mse) << ','
      << dps::fmt_double(rep.baseline_mse) << ',' << dps::fmt_double(rep.seconds) << '\n';
  if (!out) throw dps::storage_error("write failed for '" + path + "'");
}

int cmd_eval(const EvalOpts& o) {
  require_flag(o.checkpoint, "--checkpoint");
  require_flag(o.test, "--test");
  const dps::RunArtifacts art = dps::load_checkpoint(o.checkpoint);
  const dps::SignalBatch test = dps::load_test_set(o.test);
  dps::EvalOptions opts;
  if (!o.recon.empty()) opts.recon = dps::parse_recon(o.recon);
  opts.ista = dps::IstaConfig{o.ista_iters, o.ista_step, o.ista_threshold};
  opts.pattern_seed = o.pattern_seed;
  const dps::PatternMode mode = resolve_mode_flag(o.mode, art);
  const dps::EvalReport rep = dps::evaluate(art, test, mode, opts);
  const std::string recon_name = dps::to_string(opts.recon.value_or(art.cfg.recon));

  std::cout << "sampler " << dps::to_string(art.cfg.sampler) << " recon " << recon_name
            << " factor " << art.cfg.factor << " pattern-mode " << dps::to_string(mode) << "\n";
  print_pattern(rep.pattern);
  std::cout << "mean_mse " << dps::fmt_double(rep.mean_mse) << " baseline_mse "
            << dps::fmt_double(rep.baseline_mse) << " seconds " << dps::fmt_double(rep.seconds)
            << "\n";

  if (!o.report.empty()) {
    std::ofstream out(o.report, std::ios::binary);
    if (!out) throw dps::storage_error("cannot open '" + o.report + "' for writing");
    out << "signal_id,mse\n";
    for (int i = 0; i < rep.per_signal.size(); ++i)
      out << i << ',' << dps::fmt_double(rep.per_signal(i)) << '\n';
    if (!out) throw dps::storage_error("write failed for '" + o.report + "'");
  }
  if (!o.summary.empty())
    append_summary_row(o.summary, dps::to_string(art.cfg.sampler), recon_name, art.cfg.factor,
                       rep);
  return 0;
}

// --- bench ---------------------------------------------------------------------

struct BenchOpts {
  std::string checkpoint, test, out, config;
  int reps = 5, ista_iters = 300;
  double ista_threshold = 0.1, ista_step = 1.0;
};

int cmd_bench(const BenchOpts& o) {
  require_flag(o.checkpoint, "--checkpoint");
  require_flag(o.test, "--test");
  const dps::RunArtifacts art = dps::load_checkpoint(o.checkpoint);
  const dps::SignalBatch test = dps::load_test_set(o.test);
  const dps::IstaConfig ista_cfg{o.ista_iters, o.ista_step, o.ista_threshold};
  const dps::TimingReport rep = dps::timing_benchmark(art, ista_cfg, test, o.reps);
  std::cout << "signals " << rep.signals << " reps " << rep.reps << "\n";
  std::cout << "lista_seconds " << dps::fmt_double(rep.lista_seconds) << " ista_seconds "
            << dps::fmt_double(rep.ista_seconds) << " speedup " << dps::fmt_double(rep.speedup)
            << "\n";
  if (!o.out.empty()) {
    std::ofstream out(o.out, std::ios::binary);
    if (!out) throw dps::storage_error("cannot open '" + o.out + "' for writing");
    out << "lista_seconds,ista_seconds,speedup\n";
    out << dps::fmt_double(rep.lista_seconds) << ',' << dps::fmt_double(rep.ista_seconds) << ','
        << dps::fmt_double(rep.speedup) << '\n';
    if (!out) throw dps::storage_error("write failed for '" + o.out + "'");
  }
  return 0;
}

// --- pattern -------------------------------------------------------------------

struct PatternOpts {
  std::string checkpoint, mode = "auto", out, svg, config;
  std::uint64_t pattern_seed = 1;
};

int cmd_pattern(const PatternOpts& o) {
  require_flag(o.checkpoint, "--checkpoint");
  const dps::RunArtifacts art = dps::load_checkpoint(o.checkpoint);
  const dps::SamplingPattern pat =
      dps::resolve_pattern(art, resolve_mode_flag(o.mode, art), o.pattern_seed);
  print_pattern(pat);
  if (!o.out.empty()) {
    std::ofstream out(o.out, std::ios::binary);
    if (!out) throw dps::storage_error("cannot open '" + o.out + "' for writing");
    out << "m,index\n";
    for (int m = 0; m < pat.measurements(); ++m)
      out << m << ',' << pat.indices[static_cast<size_t>(m)] << '\n';
    if (!out) throw dps::storage_error("write failed for '" + o.out + "'");
  }
  if (!o.svg.empty()) dps::write_pattern_strip_svg(pat, o.svg);
  return 0;
}

// --- export --------------------------------------------------------------------

struct ExportOpts {
  std::string checkpoint, out, heatmap, summary, plot, config;
};

/// Reads the eval summary CSV and turns each sampler+recon pair into one
/// mse-versus-factor series.
std::vector<dps::PlotSeries> summary_series(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw dps::storage_error("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line)) throw dps::storage_error(path + ": empty summary");
  std::map<std::string, dps::PlotSeries> by_label;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    size_t start = 0;
    while (start <= line.size()) {
      const size_t comma = line.find(',', start);
      const size_t end = comma == std::string::npos ? line.size() : comma;
      cells.push_back(line.substr(start, end - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != 6) throw dps::storage_error(path + ": expected 6 summary columns");
    const std::string label = cells[0] + "+" + cells[1];
    auto& s = by_label[label];
    s.label = label;
    s.x.push_back(static_cast<double>(dps::parse_int(cells[2])));
    s.y.push_back(dps::parse_double(cells[3]));
  }
  std::vector<dps::PlotSeries> out;
  for (auto& [label, s] : by_label) {
    std::vector<size_t> order(s.x.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return s.x[a] < s.x[b]; });
    dps::PlotSeries sorted;
    sorted.label = s.label;
    for (size_t i : order) {
      sorted.x.push_back(s.x[i]);
      sorted.y.push_back(s.y[i]);
    }
    out.push_back(std::move(sorted));
  }
  return out;
}

int cmd_export(const ExportOpts& o) {
  if (o.out.empty() && o.heatmap.empty() && o.plot.empty())
    throw dps::config_error("nothing to export: pass --out, --heatmap, or --plot");
  if ((!o.out.empty() || !o.heatmap.empty()) && o.checkpoint.empty())
    throw dps::config_error("distribution exports need --checkpoint");
  if (!o.plot.empty() && o.summary.empty())
    throw dps::config_error("--plot needs --summary");

  if (!o.checkpoint.empty() && (!o.out.empty() || !o.heatmap.empty())) {
    const dps::RunArtifacts art = dps::load_checkpoint(o.checkpoint);
    if (!o.out.empty()) {
      dps::export_distributions(art.phi, o.out);
      std::cout << "wrote " << o.out << "\n";
    }
    if (!o.heatmap.empty()) {
      dps::write_heatmap_svg(dps::row_distributions(art.phi), o.heatmap);
      std::cout << "wrote " << o.heatmap << "\n";
    }
  }
  if (!o.plot.empty()) {
    dps::write_lineplot_svg(summary_series(o.summary), o.plot);
    std::cout << "wrote " << o.plot << "\n";
  }
  return 0;
}

// --- gradcheck -----------------------------------------------------------------

struct GradCheckOpts {
  double epsilon = 1e-5;
  bool flip_entropy_sign = false;
  std::string config;
};

int cmd_gradcheck(const GradCheckOpts& o) {
  dps::GradCheckOptions opts;
  opts.epsilon = o.epsilon;
  opts.flip_entropy_gradient_sign = o.flip_entropy_sign;
  const dps::GradCheckReport rep = dps::grad_check_all(opts);
  constexpr double kThreshold = 1e-4;
  bool ok = true;
  for (const auto& b : rep.blocks) {
    const bool pass = b.max_rel_err < kThreshold;
    ok = ok && pass;
    std::cout << b.name << " " << dps::fmt_double(b.max_rel_err) << (pass ? " PASS" : " FAIL")
              << "\n";
  }
  std::cout << "gradcheck " << (ok ? "PASS" : "FAIL") << " worst "
            << dps::fmt_double(rep.worst()) << " threshold " << dps::fmt_double(kThreshold)
            << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"probabilistic sub-sampling + sparse recovery experiments", "dps"};
  app.set_version_flag("--version", dps::kVersion);
  app.require_subcommand(1);

  GenTestOpts gen;
  auto* cg = app.add_subcommand("gen-test", "generate a held-out sparse test set");
  cg->add_option("--n", gen.n, "signal length")->capture_default_str();
  cg->add_option("--k", gen.k, "nonzeros per signal")->capture_default_str();
  cg->add_option("--size", gen.size, "number of signals")->capture_default_str();
  cg->add_option("--seed", gen.seed, "data seed")->capture_default_str();
  cg->add_option("--out", gen.out, "output file (required)");
  cg->add_option("--config", gen.config, "key=value config file; flags win");

  TrainOpts tr;
  auto* ct = app.add_subcommand("train", "train sampling logits and estimator");
  ct->add_option("--sampler", tr.sampler, "dps|uniform|random")
      ->check(CLI::IsMember({"dps", "uniform", "random"}))
      ->capture_default_str();
  ct->add_option("--recon", tr.recon, "trainable estimator")
      ->check(CLI::IsMember({"lista"}))
      ->capture_default_str();
  ct->add_option("--factor", tr.factor, "sub-sampling factor")
      ->check(CLI::IsMember({2, 3, 4, 6, 8}))
      ->capture_default_str();
  ct->add_option("--n", tr.n, "nominal signal length")->capture_default_str();
  ct->add_option("--k", tr.k, "nonzeros per signal")->capture_default_str();
  ct->add_option("--batch", tr.batch, "mini-batch size")->capture_default_str();
  auto* iters_opt = ct->add_option("--iters", tr.iters, "iteration count (overrides profile)");
  ct->add_option("--profile", tr.profile, "full (96000 iters) or desk (20000)")
      ->check(CLI::IsMember({"full", "desk"}))
      ->capture_default_str();
  ct->add_option("--seed", tr.seed, "run seed")->capture_default_str();
  ct->add_option("--lr-theta", tr.lr_theta, "estimator learning rate")->capture_default_str();
  ct->add_option("--lr-phi", tr.lr_phi, "logits learning rate")->capture_default_str();
  ct->add_option("--l2-lambda", tr.l2_lambda, "estimator l2 penalty weight")
      ->capture_default_str();
  ct->add_option("--entropy-mu", tr.entropy_mu, "entropy penalty weight")->capture_default_str();
  ct->add_option("--tau-init", tr.tau_init, "initial relaxation temperature")
      ->capture_default_str();
  ct->add_option("--tau-end", tr.tau_end, "final relaxation temperature")->capture_default_str();
  ct->add_option("--amplitude-std", tr.amplitude_std, "signal amplitude scale")
      ->capture_default_str();
  ct->add_option("--out", tr.out, "run directory (required)");
  ct->add_option("--config", tr.config, "key=value config file; flags win");

  EvalOpts ev;
  auto* ce = app.add_subcommand("eval", "score a checkpoint on a test set");
  ce->add_option("--checkpoint", ev.checkpoint, "trained checkpoint (required)");
  ce->add_option("--test", ev.test, "test-set file (required)");
  ce->add_option("--pattern-mode", ev.mode, "auto|map|sample|fixed")
      ->check(CLI::IsMember({"auto", "map", "sample", "fixed"}))
      ->capture_default_str();
  ce->add_option("--pattern-seed", ev.pattern_seed, "seed for sample mode")
      ->capture_default_str();
  ce->add_option("--recon", ev.recon, "override reconstruction (lista|ista)")
      ->check(CLI::IsMember({"lista", "ista"}));
  ce->add_option("--ista-iters", ev.ista_iters, "ista iterations")->capture_default_str();
  ce->add_option("--ista-threshold", ev.ista_threshold, "ista threshold")->capture_default_str();
  ce->add_option("--ista-step", ev.ista_step, "ista step size")->capture_default_str();
  ce->add_option("--report", ev.report, "per-signal CSV output");
  ce->add_option("--summary", ev.summary, "summary CSV to append to");
  ce->add_option("--config", ev.config, "key=value config file; flags win");

  BenchOpts be;
  auto* cb = app.add_subcommand("bench", "time lista against ista");
  cb->add_option("--checkpoint", be.checkpoint, "trained checkpoint (required)");
  cb->add_option("--test", be.test, "test-set file (required)");
  cb->add_option("--reps", be.reps, "timing repetitions (median)")->capture_default_str();
  cb->add_option("--ista-iters", be.ista_iters, "ista iterations")->capture_default_str();
  cb->add_option("--ista-threshold", be.ista_threshold, "ista threshold")
      ->capture_default_str();
  cb->add_option("--ista-step", be.ista_step, "ista step size")->capture_default_str();
  cb->add_option("--out", be.out, "timing CSV output");
  cb->add_option("--config", be.config, "key=value config file; flags win");

  PatternOpts pa;
  auto* cp = app.add_subcommand("pattern", "export the sampling pattern of a run");
  cp->add_option("--checkpoint", pa.checkpoint, "trained checkpoint (required)");
  cp->add_option("--mode", pa.mode, "auto|map|sample|fixed")
      ->check(CLI::IsMember({"auto", "map", "sample", "fixed"}))
      ->capture_default_str();
  cp->add_option("--pattern-seed", pa.pattern_seed, "seed for sample mode")
      ->capture_default_str();
  cp->add_option("--out", pa.out, "pattern CSV output");
  cp->add_option("--svg", pa.svg, "pattern strip SVG output");
  cp->add_option("--config", pa.config, "key=value config file; flags win");

  ExportOpts ex;
  auto* cx = app.add_subcommand("export", "export distributions and plots");
  cx->add_option("--checkpoint", ex.checkpoint, "trained checkpoint");
  cx->add_option("--out", ex.out, "row-distribution CSV output");
  cx->add_option("--heatmap", ex.heatmap, "distribution heatmap SVG output");
  cx->add_option("--summary", ex.summary, "eval summary CSV input");
  cx->add_option("--plot", ex.plot, "mse-versus-factor line plot SVG output");
  cx->add_option("--config", ex.config, "key=value config file; flags win");

  GradCheckOpts gc;
  auto* cc = app.add_subcommand("gradcheck", "verify analytic gradients numerically");
  cc->add_option("--epsilon", gc.epsilon, "finite-difference step")->capture_default_str();
  cc->add_flag("--flip-entropy-grad-sign", gc.flip_entropy_sign)->group("");
  cc->add_option("--config", gc.config, "key=value config file; flags win");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const std::string command = command_echo(argc, argv);

  try {
    if (cg->parsed()) {
      apply_config_file(cg, gen.config);
      return cmd_gen_test(gen, command);
    }
    if (ct->parsed()) {
      apply_config_file(ct, tr.config);
      return cmd_train(tr, iters_opt->count() > 0, command);
    }
    if (ce->parsed()) {
      apply_config_file(ce, ev.config);
      return cmd_eval(ev);
    }
    if (cb->parsed()) {
      apply_config_file(cb, be.config);
      return cmd_bench(be);
    }
    if (cp->parsed()) {
      apply_config_file(cp, pa.config);
      return cmd_pattern(pa);
    }
    if (cx->parsed()) {
      apply_config_file(cx, ex.config);
      return cmd_export(ex);
    }
    if (cc->parsed()) {
      apply_config_file(cc, gc.config);
      return cmd_gradcheck(gc);
    }
    std::cerr << "error: no subcommand selected\n";
    return 2;
  } catch (const CLI::ParseError& e) {
    // Config-file values flow through the same option validators as flags.
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dps::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dps::storage_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dps::divergence_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
