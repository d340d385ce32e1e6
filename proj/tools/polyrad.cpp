// polyrad: bounds, estimates and verification runs for polynomial-network
// classes. Exit codes: 0 ok, 2 config error, 3 verification failure.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>

#include "CLI11.hpp"

#include "polyrad/cli/commands.hpp"
#include "polyrad/cli/config.hpp"

namespace {

using namespace polyrad::cli;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> draws;
  std::optional<int> kmax;
  std::string out;
  bool append = false;
  bool break_rank1 = false;
};

RunConfig load(const Flags& f) {
  RunConfig cfg = f.config.empty() ? default_run_config() : load_run_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.draws) {
    if (*f.draws == 0) throw ConfigError("--draws must be >= 1");
    cfg.draws = *f.draws;
  }
  if (f.kmax) cfg.kmax = *f.kmax;
  if (!f.out.empty()) cfg.out = f.out;
  return cfg;
}

void emit_text(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open output file '" + path + "'");
  out << text;
}

void emit_csv(const CsvTable& t, const RunConfig& cfg, bool append) {
  if (cfg.out.empty()) {
    std::cout << t.text();
  } else {
    write_csv(t, cfg.out, append);
  }
}

int run(const std::string& command, const Flags& f) {
  const RunConfig cfg = load(f);
  if (command == "bound") {
    emit_text(cmd_bound(cfg), cfg.out);
  } else if (command == "estimate") {
    emit_csv(cmd_estimate(cfg), cfg, f.append);
  } else if (command == "verify") {
    const auto outcome = cmd_verify(cfg, f.break_rank1);
    emit_text(outcome.table, cfg.out);
    if (!outcome.passed) return kExitVerification;
  } else if (command == "sweep") {
    const auto rows = run_sweep(cfg);
    emit_csv(sweep_csv(rows), cfg, f.append);
    const auto problems = check_sweep(rows, cfg);
    for (const auto& p : problems) std::cerr << "sweep check failed: " << p << "\n";
    if (!problems.empty()) return kExitVerification;
  } else if (command == "curve") {
    emit_csv(cmd_curve(cfg.kmax), cfg, f.append);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rademacher-complexity bounds and estimates for polynomial networks"};
  app.require_subcommand(1);
  Flags flags;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON run configuration");
    sub->add_option("--seed", flags.seed, "master seed (overrides config)");
    sub->add_option("--out", flags.out, "output file (default stdout)");
  };

  auto* bound = app.add_subcommand("bound", "all closed-form bounds as JSON");
  add_common(bound);
  auto* est = app.add_subcommand("estimate", "empirical Rademacher estimate, one CSV row");
  add_common(est);
  est->add_option("--draws", flags.draws, "number of sign draws");
  est->add_flag("--append", flags.append, "append to --out, header only for a new file");
  auto* verify = app.add_subcommand("verify", "randomised inequality suites");
  add_common(verify);
  verify->add_flag("--break-rank1", flags.break_rank1, "negative control: corrupt the rank-1 construction");
  auto* sweep = app.add_subcommand("sweep", "bounds (and estimates) over a d x k x m grid");
  add_common(sweep);
  sweep->add_option("--draws", flags.draws, "number of sign draws per cell");
  sweep->add_flag("--append", flags.append, "append to --out");
  auto* curve = app.add_subcommand("curve", "feasibility threshold (1/k)^(1/(k-1))");
  add_common(curve);
  curve->add_option("--kmax", flags.kmax, "largest degree");
  curve->add_flag("--append", flags.append, "append to --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, flags);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
  } catch (const std::domain_error& e) {
    std::cerr << "constraint violation: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return kExitConfig;
}
