#pragma once

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sse/commands.hpp"
#include "sse/config.hpp"

namespace sse {

/// Entry point of the sse_cli tool: check | run | bounds | impossible.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Attack-resilient state estimation with a bank of subset observers"};
  app.require_subcommand(1);

  std::string config_path;
  CommandOptions opt;
  std::string out_dir;
  int trials = 0;
  std::uint64_t seed = 0;
  int workers = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "YAML run configuration")->required();
    sub->add_option("--out", out_dir, "Output directory (overrides config)");
    sub->add_option("--trials", trials, "Number of trials (overrides config)");
    sub->add_option("--seed", seed, "Base seed (overrides config)");
    sub->add_option("--workers", workers, "Worker threads (overrides config)");
  };
  CLI::App* check = app.add_subcommand("check", "Report rho / 2 rho-detectability");
  CLI::App* run = app.add_subcommand("run", "Simulate trials with the bank and a naive baseline");
  CLI::App* bounds = app.add_subcommand("bounds", "Write the worst-case error bound reports");
  CLI::App* impossible =
      app.add_subcommand("impossible", "Emit two executions with equal measurements");
  for (CLI::App* sub : {check, run, bounds, impossible}) add_common(sub);
  run->add_flag("--timing", opt.timing, "Add wall-time columns to summary.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitParse;
  }

  return guarded(
      [&] {
        const CLI::App* sub = app.get_subcommands().front();
        if (sub->count("--out") > 0) opt.out = out_dir;
        if (sub->count("--trials") > 0) opt.trials = trials;
        if (sub->count("--seed") > 0) opt.seed = seed;
        if (sub->count("--workers") > 0) opt.workers = workers;
        const RunConfig cfg = internal::apply_overrides(load_config(config_path), opt);
        if (check->parsed()) return cmd_check(cfg, out);
        if (run->parsed()) return cmd_run(cfg, out, opt.timing);
        if (bounds->parsed()) return cmd_bounds(cfg, out);
        return cmd_impossible(cfg, out);
      },
      err);
}

}  // namespace sse
