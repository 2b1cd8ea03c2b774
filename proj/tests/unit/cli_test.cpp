#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dmtl/commands.hpp"
#include "fixtures.hpp"

using namespace dmtl;
namespace fs = std::filesystem;

namespace {

const Json kSmall{{"warmup_iters", 40},     {"search_iters", 80},   {"finetune_iters", 60},
                  {"n_samples", 300},       {"n_states", 5},        {"flow_constant", 2},
                  {"state_dim", 6},         {"latent_dim", 6},      {"input_dim", 5},
                  {"generator_latent_dim", 5}, {"batch_size", 16},  {"log_every", 20},
                  {"sweep_flow_constants", {2, 3}}};

fs::path write_config(const fs::path& dir, Json j) {
  const fs::path p = dir / "config.json";
  write_json(p, j);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DMTL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split(const std::string& row) {
  std::vector<std::string> out;
  std::stringstream s(row);
  for (std::string c; std::getline(s, c, ',');) out.push_back(c);
  return out;
}

}  // namespace

TEST(Cli, TrainWritesEveryArtifact) {
  const fs::path dir = dmtl::testing::scratch_dir("cli_train");
  const fs::path cfg = write_config(dir, kSmall);
  ASSERT_EQ(run_cli("train --config " + cfg.string() + " --out " + (dir / "run").string()), kExitOk);
  for (const char* f : {"report.json", "metrics.csv", "cls0.dot", "reg1.dot", "trace_cls0.json", "trace_reg1.json",
                        "checkpoints/warmup.json", "checkpoints/search.json", "checkpoints/finetune.json"})
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;
  EXPECT_EQ(lines(read_text(dir / "run" / "metrics.csv")).at(0), "# schema=metrics version=1");
  const Json report = read_json(dir / "run" / "report.json");
  EXPECT_EQ(report.at("format"), "dmtl-report");
  EXPECT_EQ(report.at("results").size(), 2u);
}

TEST(Cli, TrainIsByteIdenticalAcrossRuns) {
  const fs::path dir = dmtl::testing::scratch_dir("cli_repeat");
  const fs::path cfg = write_config(dir, kSmall);
  ASSERT_EQ(run_cli("train --config " + cfg.string() + " --seed 4 --out " + (dir / "a").string()), kExitOk);
  ASSERT_EQ(run_cli("train --config " + cfg.string() + " --seed 4 --out " + (dir / "b").string()), kExitOk);
  EXPECT_EQ(read_text(dir / "a" / "report.json"), read_text(dir / "b" / "report.json"));
  EXPECT_EQ(read_text(dir / "a" / "cls0.dot"), read_text(dir / "b" / "cls0.dot"));
}

TEST(Cli, ConfigErrorsExitTwo) {
  const fs::path dir = dmtl::testing::scratch_dir("cli_bad");
  EXPECT_EQ(run_cli("train --config " + write_config(dir, Json{{"flw_constant", 3}}).string()), kExitConfig);
  EXPECT_EQ(run_cli("train --config " + write_config(dir, Json{{"n_states", -1}}).string()), kExitConfig);
  EXPECT_EQ(run_cli("train --config " + (dir / "missing.json").string()), kExitConfig);
  EXPECT_EQ(run_cli("train"), kExitConfig);
  EXPECT_EQ(run_cli("launch"), kExitConfig);
}

TEST(Cli, UnknownKeyMessageNamesTheKey) {
  const fs::path dir = dmtl::testing::scratch_dir("cli_msg");
  std::ostringstream out, err;
  const int code = cmd_train({write_config(dir, Json{{"flw_constant", 3}}), {}, {}, 1}, out, err);
  EXPECT_EQ(code, kExitConfig);
  EXPECT_NE(err.str().find("flw_constant"), std::string::npos);
}

TEST(Cli, AnalyzeMissingRunExitsThree) {
  const fs::path dir = dmtl::testing::scratch_dir("cli_analyze_missing");
  EXPECT_EQ(run_cli("analyze " + (dir / "nothing").string()), kExitRuntime);
}

TEST(Cli, SweepOneRowPerDistinctCell) {
  const fs::path dir = dmtl::testing::scratch_dir("cli_sweep");
  Json j = kSmall;
  j["n_states"] = 8;
  j["sweep_flow_constants"] = {3, 5, 7, 5};
  const fs::path cfg = write_config(dir, j);
  ASSERT_EQ(run_cli("sweep --config " + cfg.string() + " --jobs 2 --out " + (dir / "sw").string()), kExitOk);
  const auto rows = lines(read_text(dir / "sw" / "sweep.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], "# schema=sweep version=1");
  EXPECT_EQ(split(rows[1]).at(0), "M");
  std::vector<std::string> ms;
  for (std::size_t r = 2; r < rows.size(); ++r) {
    const auto cells = split(rows[r]);
    ms.push_back(cells.at(0));
    EXPECT_EQ(cells.at(2), "ok");
  }
  EXPECT_EQ(ms, (std::vector<std::string>{"3", "5", "7"}));
  EXPECT_TRUE(fs::exists(dir / "sw" / "cells" / "M5_seed0" / "report.json"));
}

TEST(Cli, CompareReducersGridTimesThree) {
  const fs::path dir = dmtl::testing::scratch_dir("cli_reducers");
  Json j = kSmall;
  j["sparsity_grid"] = {1.0, 0.4};
  const fs::path cfg = write_config(dir, j);
  ASSERT_EQ(run_cli("compare-reducers --config " + cfg.string() + " --out " + (dir / "cr").string()), kExitOk);
  const auto rows = lines(read_text(dir / "cr" / "reducers.csv"));
  ASSERT_EQ(rows.size(), 2u + 2 * 3);
  EXPECT_EQ(rows[1], "seed,tau,reducer,sparsity,degradation");
  std::set<std::string> reducers;
  for (std::size_t r = 2; r < rows.size(); ++r) {
    const auto cells = split(rows[r]);
    reducers.insert(cells.at(2));
    if (cells.at(1) == "1") {
      EXPECT_EQ(cells.at(4), "0") << rows[r];
    }
  }
  EXPECT_EQ(reducers, (std::set<std::string>{"flow", "random", "threshold"}));
}

TEST(Analyze, IdenticalMasksShareEveryEdge) {
  const Json mask{{"readin", {1, 0, 0, 0}}, {"readout", {0, 0, 0, 1}}, {"edges", {{1, 2}, {2, 4}, {1, 3}}}};
  Json report{{"format", "dmtl-report"}, {"version", kReportVersion}, {"plan", {{"n_states", 4}}}};
  for (const char* id : {"a", "b"})
    report["results"].push_back(
        Json{{"id", id}, {"topology", {{"D", 2}, {"W", 2}, {"S", 0.5}}}, {"mask", mask}});
  const RunAnalysis a = analyze_report(report);
  EXPECT_EQ(a.edge_counts, (std::vector<std::size_t>{3, 3}));
  EXPECT_EQ(a.shared.at({0, 1}), 3u);
  EXPECT_EQ(a.overlay[1][2], (std::vector<std::size_t>{0, 1}));
  std::ostringstream out;
  print_analysis(a, out);
  EXPECT_NE(out.str().find("a b 3"), std::string::npos);
  EXPECT_NE(out.str().find("AB"), std::string::npos);
}

TEST(Analyze, PrintsTrainedRun) {
  const fs::path dir = dmtl::testing::scratch_dir("cli_analyze");
  RunConfig c = config_from_json(kSmall);
  c.output_dir = (dir / "run").string();
  write_json(dir / "c.json", config_to_json(c));
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train({dir / "c.json", {}, {}, 1}, out, err), kExitOk) << err.str();
  std::ostringstream text;
  ASSERT_EQ(cmd_analyze(dir / "run", text, err), kExitOk) << err.str();
  EXPECT_EQ(text.str().rfind("task D W S\n", 0), 0u);
  EXPECT_NE(text.str().find("shared edges\ncls0 reg1 "), std::string::npos);
}
