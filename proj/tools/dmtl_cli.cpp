#include <CLI11.hpp>

#include "dmtl/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Multi-task sub-network search on flow-restricted DAGs"};
  app.require_subcommand(1);

  dmtl::CommandOptions opts;
  std::string out_dir;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opts.config, "Flat JSON run configuration")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    cmd->add_option("--seed", seed, "Seed (overrides seed)");
    cmd->add_option("--jobs", opts.jobs, "Parallel workers for sweep cells")->check(CLI::PositiveNumber);
  };
  CLI::App* train = app.add_subcommand("train", "Warm-up, search, reduce and fine-tune one network");
  CLI::App* sweep = app.add_subcommand("sweep", "Run every (flow constant, seed) cell");
  CLI::App* compare = app.add_subcommand("compare-reducers", "Flow vs random vs threshold reduction over a sparsity grid");
  for (CLI::App* cmd : {train, sweep, compare}) add_common(cmd);
  CLI::App* analyze = app.add_subcommand("analyze", "Topology table and shared-edge overlay of a finished run");
  std::string run_dir;
  analyze->add_option("run_dir", run_dir, "Directory holding report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dmtl::kExitConfig;
  }
  if (!out_dir.empty()) opts.out = out_dir;
  for (CLI::App* cmd : {train, sweep, compare})
    if (cmd->count("--seed")) opts.seed = seed;

  if (*train) return dmtl::cmd_train(opts);
  if (*sweep) return dmtl::cmd_sweep(opts);
  if (*compare) return dmtl::cmd_compare_reducers(opts);
  return dmtl::cmd_analyze(run_dir);
}
