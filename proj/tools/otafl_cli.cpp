// Command-line front end for the over-the-air federated learning simulator.
//
//   otafl_cli [--config FILE] [--<key> VALUE ...] <command>
//
// `seed`, `rounds` and `out` must be set by the config file or a flag.
//
// Commands:
//   run          one simulation, per-round metrics as CSV
//   sweep        one summary row per value of --axis, aggregated over --seeds
//   bound-check  seed-averaged convergence bound check (quadratic task only)
//
// Exit codes: 0 success, 1 configuration error, 2 divergence, 3 I/O error.

#include <cstdint>
#include <exception>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "otafl/experiment.hpp"

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitDiverged = 2;
constexpr int kExitIo = 3;

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : otafl::split_list(text)) seeds.push_back(otafl::detail::parse_count("seeds", item));
  return seeds;
}

std::vector<std::size_t> parse_checkpoints(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : otafl::split_list(text)) {
    out.push_back(static_cast<std::size_t>(otafl::detail::parse_count("checkpoints", item)));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Over-the-air federated learning simulator with age-aware sparsification"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "key = value configuration file");

  std::map<std::string, std::string> flags;
  std::map<std::string, CLI::Option*> flag_opts;
  for (const auto& key : otafl::config_keys()) {
    auto* opt = app.add_option("--" + key, flags[key], "override config key '" + key + "'");
    flag_opts[key] = opt;
  }

  auto* run_cmd = app.add_subcommand("run", "run one simulation")->fallthrough();

  auto* sweep_cmd = app.add_subcommand("sweep", "sweep one config key over values and seeds")->fallthrough();
  std::string axis, values, seeds_text;
  std::size_t jobs = 1;
  sweep_cmd->add_option("--axis", axis, "config key to sweep")->required();
  sweep_cmd->add_option("--values", values, "comma-separated axis values")->required();
  sweep_cmd->add_option("--seeds", seeds_text, "comma-separated seeds (default: --seed)");
  sweep_cmd->add_option("--jobs", jobs, "runs executed concurrently")->check(CLI::PositiveNumber);

  auto* bound_cmd = app.add_subcommand("bound-check", "check the convergence bound on a quadratic task")->fallthrough();
  std::string checkpoints_text = "10,100,1000";
  std::size_t replicates = 20;
  bound_cmd->add_option("--checkpoints", checkpoints_text, "comma-separated horizons T")->capture_default_str();
  bound_cmd->add_option("--replicates", replicates, "seed replicates to average")->capture_default_str()->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    otafl::KeyValues kv;
    if (!config_path.empty()) kv = otafl::parse_config_file(config_path);
    for (const auto& [key, opt] : flag_opts) {
      if (opt->count() > 0) kv[key] = flags[key];
    }

    const auto config = otafl::resolve_config(kv);
    if (config.out.empty()) throw otafl::ConfigError("missing required config key 'out'");

    if (run_cmd->parsed()) {
      const auto outcome = otafl::run_single(config);
      if (outcome.result.aborted) {
        std::cerr << "otafl: run diverged: " << outcome.result.records.back().diagnostic << "\n";
        return kExitDiverged;
      }
      std::cerr << "otafl: wrote " << outcome.result.records.size() << " rounds to " << config.out << "\n";
      return 0;
    }

    if (sweep_cmd->parsed()) {
      const auto& base = config;
      otafl::SweepSpec spec{kv, axis, otafl::split_list(values),
                            seeds_text.empty() ? std::vector<std::uint64_t>{base.seed} : parse_seed_list(seeds_text),
                            jobs};
      const auto rows = otafl::run_sweep(spec);
      otafl::write_text(base.out, otafl::sweep_document(spec, base, rows));
      std::size_t aborted = 0;
      for (const auto& r : rows) aborted += r.aborted;
      std::cerr << "otafl: wrote " << rows.size() << " summary rows to " << base.out << "\n";
      return aborted > 0 ? kExitDiverged : 0;
    }

    if (bound_cmd->parsed()) {
      const auto report = otafl::run_bound_check(config, parse_checkpoints(checkpoints_text), replicates);
      otafl::write_text(config.out, otafl::bound_check_document(config, report));
      std::size_t failed = 0;
      for (const auto& r : report.rows) failed += !r.pass;
      std::cerr << "otafl: " << report.rows.size() - failed << "/" << report.rows.size()
                << " checkpoints within the bound; report in " << config.out << "\n";
      return 0;
    }
  } catch (const otafl::ConfigError& e) {
    std::cerr << "otafl: configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const otafl::IoError& e) {
    std::cerr << "otafl: I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "otafl: " << e.what() << "\n";
    return kExitDiverged;
  }
  return kExitConfig;
}
