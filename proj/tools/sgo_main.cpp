#include "sgo/bench.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  CLI::App app{"Structured-gradient optimization toolkit"};
  app.require_subcommand(1);

  std::string run_config;
  std::string run_output;
  CLI::App* run = app.add_subcommand("run", "Run one experiment config across its seeds");
  run->add_option("config", run_config, "Path to an experiment JSON config")->required();
  run->add_option("--output", run_output, "Output directory (overrides the config)");

  std::string verify_suite;
  std::uint64_t verify_seed = 0;
  CLI::App* verify = app.add_subcommand("verify", "Run a self-check suite and print a manifest");
  verify->add_option("suite", verify_suite, "One of: lemmas, kernels, bounds, equivalence")
      ->required();
  verify->add_option("--seed", verify_seed, "Seed for randomized checks");

  std::vector<std::string> compare_configs;
  std::string compare_output;
  CLI::App* compare =
      app.add_subcommand("compare", "Run several configs on one problem and align their curves");
  compare->add_option("configs", compare_configs, "Experiment JSON configs")
      ->required()
      ->expected(-2);
  compare->add_option("--output", compare_output, "Output directory");

  std::string sweep_config;
  std::string sweep_output;
  CLI::App* sweep = app.add_subcommand("sweep", "Grid-search optimizer scalars from one config");
  sweep->add_option("config", sweep_config, "Experiment JSON config with a 'sweep' section")
      ->required();
  sweep->add_option("--output", sweep_output, "Output directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems share the config-error exit code
  }

  if (run->parsed()) return sgo::cmd_run(run_config, run_output);
  if (verify->parsed()) return sgo::cmd_verify(verify_suite, verify_seed);
  if (compare->parsed()) return sgo::cmd_compare(compare_configs, compare_output);
  if (sweep->parsed()) return sgo::cmd_sweep(sweep_config, sweep_output);
  return 2;
}
