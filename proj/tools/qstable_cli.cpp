// Copyright 2026 The qstable Authors.
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

// Command-line harness: variance curves, Monte Carlo MSE, threshold
// optimization, tail constants, MLE tables and compressed-sensing recovery.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qstable/qstable.hpp"

namespace {

using namespace qstable;

struct Common {
  std::uint64_t seed = 0;
  std::string out = "-";
  std::size_t replicates = 100000;
  unsigned threads = 1;
  std::string config;
};

/// Appends `--key=value` for each line of a key=value file whose key was not
/// given on the command line, so explicit flags take precedence.
std::vector<std::string> merge_config(const std::vector<std::string>& args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::vector<std::string> merged = args;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || key == "config") continue;
    const std::string flag = "--" + key;
    bool given = false;
    for (const auto& a : args) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) given = true;
    }
    if (!given) merged.push_back(flag + "=" + value);
  }
  return merged;
}

class Output {
 public:
  explicit Output(const std::string& path) {
    if (path != "-") {
      file_ = std::make_unique<std::ofstream>(path, std::ios::trunc);
      if (!*file_) throw std::runtime_error("cannot open " + path + " for writing");
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  void finish() {
    stream().flush();
    if (!stream()) throw std::runtime_error("write failed");
  }

 private:
  std::unique_ptr<std::ofstream> file_;
};

Alpha parse_alpha(const std::string& s) { return Alpha::parse(s); }

std::vector<double> resolve_etas(const std::vector<double>& etas, std::optional<double> ladder_eta,
                                 double ladder_t, std::size_t m) {
  if (!etas.empty()) return etas;
  if (ladder_eta) {
    const EtaVector v = EtaVector::ladder(*ladder_eta, ladder_t, m);
    return {v.values().begin(), v.values().end()};
  }
  throw usage_error("give either --etas or --eta-m (with --t and --m)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qstable: scale estimation for alpha-stable data from quantized observations"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--seed", common.seed, "base RNG seed");
  app.add_option("--out", common.out, "output path ('-' for stdout)");
  app.add_option("--replicates", common.replicates, "Monte Carlo replicates")->check(CLI::PositiveNumber);
  app.add_option("--threads", common.threads, "worker threads (0 = all cores)");
  app.add_option("--config", common.config, "key=value file; command-line flags take precedence");

  // variance-curve
  auto* vc = app.add_subcommand("variance-curve", "asymptotic variance coefficient along an eta grid");
  std::string vc_alpha = "0+";
  VarianceCurveConfig vcc;
  bool vc_linear = false;
  vc->add_option("--alpha", vc_alpha, "stability index (0+ or a value in (0, 2])");
  vc->add_option("--m", vcc.m, "number of thresholds");
  vc->add_option("--strategy", vcc.strategy, "ladder or sweep (m = 3)");
  vc->add_option("--eta-min", vcc.eta_min);
  vc->add_option("--eta-max", vcc.eta_max);
  vc->add_option("--points", vcc.points);
  vc->add_flag("--linear", vc_linear, "linear instead of log-spaced grid");
  vc->add_option("--t", vcc.ratios, "ladder ratios")->delimiter(',');
  vc->add_option("--eta1", vcc.eta1, "fixed eta_1 for the sweep strategy");
  vc->add_option("--eta3", vcc.eta3_values, "eta_3 values for the sweep strategy")->delimiter(',');

  // simulate-mse
  auto* sm = app.add_subcommand("simulate-mse", "empirical MSE of quantized estimators");
  std::string sm_gen = "0+", sm_est;
  std::vector<double> sm_etas;
  std::optional<double> sm_eta_m;
  double sm_t = 3.0;
  std::size_t sm_m = 3;
  std::string sm_table;
  std::size_t sm_table_T = 0;
  SimulateMseConfig smc;
  sm->add_option("--alpha-gen", sm_gen, "alpha used to generate data");
  sm->add_option("--alpha-est", sm_est, "alpha assumed by the estimator (default: --alpha-gen)");
  sm->add_option("--etas", sm_etas, "eta_1 >= ... >= eta_m")->delimiter(',');
  sm->add_option("--eta-m", sm_eta_m, "smallest eta of a ladder");
  sm->add_option("--t", sm_t, "ladder ratio");
  sm->add_option("--m", sm_m, "ladder size");
  sm->add_option("--lambda", smc.lambda, "true scale");
  sm->add_option("--n", smc.n_values, "sample sizes")->delimiter(',');
  sm->add_option("--table", sm_table, "MLE table file for the table estimator");
  sm->add_option("--table-T", sm_table_T, "build a table of this resolution instead of loading one");

  // optimize-thresholds
  auto* ot = app.add_subcommand("optimize-thresholds", "minimize the variance coefficient");
  std::string ot_alpha = "0+";
  std::size_t ot_m = 1;
  ot->add_option("--alpha", ot_alpha);
  ot->add_option("--m", ot_m, "1, 3 or 5");

  // tail-bounds
  auto* tb = app.add_subcommand("tail-bounds", "Chernoff tail constants of the 1-bit estimator");
  std::string tb_alpha = "0+";
  TailBoundsConfig tbc;
  tb->add_option("--alpha", tb_alpha);
  tb->add_option("--etas", tbc.etas)->delimiter(',');
  tb->add_option("--epsilons", tbc.epsilons)->delimiter(',');

  // build-table
  auto* bt = app.add_subcommand("build-table", "precompute a three-threshold MLE table (written to --out)");
  std::string bt_alpha = "1";
  std::vector<double> bt_etas;
  std::optional<double> bt_eta_m = 0.5;
  double bt_t = 3.0;
  std::size_t bt_T = 100;
  bt->add_option("--alpha", bt_alpha);
  bt->add_option("--etas", bt_etas, "eta_1 > eta_2 > eta_3 (only ratios matter)")->delimiter(',');
  bt->add_option("--eta-m", bt_eta_m, "smallest eta of a ladder");
  bt->add_option("--t", bt_t, "ladder ratio");
  bt->add_option("--T", bt_T, "grid resolution");

  // cs-recover
  auto* cs = app.add_subcommand("cs-recover", "one-scan 1-bit compressed sensing with estimated K");
  CsConfig csc;
  bool cs_no_full = false, cs_per_trial = false;
  std::optional<std::size_t> cs_trials;
  cs->add_option("--N", csc.N, "signal dimension");
  cs->add_option("--K", csc.K, "number of nonzeros");
  cs->add_option("--sigma", csc.sigma, "standard deviation of nonzeros");
  cs->add_option("--alpha", csc.alpha, "design alpha");
  cs->add_option("--trials", cs_trials, "trials (default 1000)");
  cs->add_option("--zeta", csc.zetas, "M = zeta K log(N/0.01)")->delimiter(',');
  cs->add_option("--n", csc.n_values, "samples for estimating K")->delimiter(',');
  cs->add_option("--eta", csc.etas, "eta values of the 1-bit K estimator")->delimiter(',');
  cs->add_option("--bits", csc.scheme_bits, "1 or 2 bits for the K estimator");
  cs->add_option("--quantiles", csc.quantiles)->delimiter(',');
  cs->add_flag("--no-full", cs_no_full, "skip the full-information K estimator");
  cs->add_flag("--per-trial", cs_per_trial, "also write one row per trial");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = merge_config(args);
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Error& e) {
    std::cerr << "qstable: error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "qstable: error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*vc) {
      vcc.alpha = parse_alpha(vc_alpha);
      vcc.log_grid = !vc_linear;
      const auto rows = variance_curve(vcc);
      Output out(common.out);
      write_variance_csv(out.stream(), rows, vcc.m);
      out.finish();
    } else if (*sm) {
      smc.alpha_gen = parse_alpha(sm_gen);
      smc.alpha_est = sm_est.empty() ? smc.alpha_gen : parse_alpha(sm_est);
      smc.etas = resolve_etas(sm_etas, sm_eta_m, sm_t, sm_m);
      smc.replicates = common.replicates;
      smc.seed = common.seed;
      smc.threads = common.threads;
      if (!sm_table.empty()) {
        smc.table = load_table(sm_table);
        if (smc.table->alpha != smc.alpha_est) throw usage_error("table alpha differs from --alpha-est");
      } else if (sm_table_T > 0) {
        const ThresholdScheme s(EtaVector(smc.etas).thresholds(1.0), smc.alpha_est);
        smc.table = build_table(s, sm_table_T, common.threads);
      }
      const auto rows = simulate_mse(smc);
      Output out(common.out);
      write_mse_csv(out.stream(), rows);
      out.finish();
    } else if (*ot) {
      const Alpha a = parse_alpha(ot_alpha);
      OptimizerOptions opt;
      opt.threads = common.threads;
      const ThresholdOptimum r = optimize_thresholds(a, ot_m, opt);
      if (common.out == "-") {
        std::cout << "alpha=" << a.to_string() << " m=" << ot_m << " etas=(";
        for (std::size_t k = 0; k < r.etas.size(); ++k) std::cout << (k ? ", " : "") << format_double(r.etas[k]);
        std::cout << ") V=" << format_double(r.variance) << (r.converged ? "" : " (not converged)") << '\n';
      } else {
        Output out(common.out);
        write_optimum_csv(out.stream(), a, r);
        out.finish();
      }
      if (!r.converged) std::cerr << "qstable: warning: optimizer did not converge; best iterate reported\n";
    } else if (*tb) {
      tbc.alpha = parse_alpha(tb_alpha);
      const auto rows = tail_bounds(tbc);
      Output out(common.out);
      write_tail_csv(out.stream(), rows);
      out.finish();
    } else if (*bt) {
      if (common.out == "-") throw usage_error("build-table needs --out PATH for the table file");
      const auto etas = resolve_etas(bt_etas, bt_etas.empty() ? bt_eta_m : std::nullopt, bt_t, 3);
      const ThresholdScheme s(EtaVector(etas).thresholds(1.0), parse_alpha(bt_alpha));
      const MleTable table = build_table(s, bt_T, common.threads);
      save_table(table, common.out);
      std::size_t sentinels = 0;
      for (double v : table.entries) sentinels += v == kTableSentinel;
      std::cerr << "wrote " << table.entries.size() << " cells (" << sentinels << " unsolved) to " << common.out
                << '\n';
    } else if (*cs) {
      csc.trials = cs_trials.value_or(1000);
      csc.include_full_info = !cs_no_full;
      csc.seed = common.seed;
      csc.threads = common.threads;
      const CsResult res = cs_experiment(csc);
      Output out(common.out);
      write_cs_csv(out.stream(), res, csc.quantiles, cs_per_trial);
      out.finish();
      std::size_t conflicts = 0;
      for (const auto& c : res.curves) conflicts += c.conflicts;
      if (conflicts > 0) std::cerr << "qstable: note: " << conflicts << " coordinates had Q+ > 0 and Q- > 0\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "qstable: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
