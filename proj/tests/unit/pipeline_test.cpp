#include <numeric>

#include <gtest/gtest.h>

#include "dmtl/experiment.hpp"
#include "fixtures.hpp"

using namespace dmtl;
using dmtl::testing::tiny_data;
using dmtl::testing::tiny_plan;

namespace {

double mean_loss(const std::vector<MetricsRow>& rows, const std::string& stage, bool first_half) {
  std::vector<double> v;
  for (const MetricsRow& r : rows)
    if (r.stage == stage) v.push_back(r.loss.task_total);
  const std::size_t half = v.size() / 2;
  const auto begin = first_half ? v.begin() : v.begin() + static_cast<std::ptrdiff_t>(v.size() - half);
  return std::accumulate(begin, begin + static_cast<std::ptrdiff_t>(half), 0.0) / static_cast<double>(half);
}

double max_mass(const std::vector<GateSet>& gates) {
  double m = 0.0;
  for (const GateSet& g : gates) m = std::max(m, gate_mass(g));
  return m;
}

}  // namespace

TEST(TrainPlan, ValidationNamesTheProblem) {
  TrainPlan p = tiny_plan();
  p.lambda_sq = -1.0;
  EXPECT_THROW(p.validate(), ArgumentError);
  p = tiny_plan();
  p.flow_constant = p.n_states;
  EXPECT_THROW(p.validate(), ArgumentError);
  p = tiny_plan();
  p.search_iters = 0;
  EXPECT_THROW(p.validate(), ArgumentError);
  EXPECT_DOUBLE_EQ(tiny_plan().budget(10), 4.0);
  p = tiny_plan();
  p.kappa = 1.5;
  EXPECT_DOUBLE_EQ(p.budget(10), 1.5);
}

TEST(BatchSampler, DeterministicAndInRange) {
  BatchSampler a(10, 50, 3), b(10, 50, 3);
  const auto ra = a.next();
  EXPECT_EQ(ra, b.next());
  for (std::size_t r : ra) EXPECT_LT(r, 10u);
}

TEST(Experiment, WarmupKeepsGatesAtZeroAndLearns) {
  Experiment exp(tiny_plan(), tiny_data());
  const auto ckpt = exp.warmup_stage();
  EXPECT_EQ(exp.stage(), Stage::WarmedUp);
  for (const GateSet& g : exp.gates()) {
    for (double v : g.edges.value.data()) EXPECT_EQ(v, 0.0);
    for (double v : g.readin.value.data()) EXPECT_EQ(v, 0.0);
    for (double v : g.readout.value.data()) EXPECT_EQ(v, 0.0);
  }
  EXPECT_EQ(ckpt.stage, "warmup");
  EXPECT_EQ(ckpt.weights, exp.net().snapshot());
  EXPECT_LT(mean_loss(exp.metrics_log(), "warmup", false), mean_loss(exp.metrics_log(), "warmup", true));
}

TEST(Experiment, StagesMustRunInOrder) {
  Experiment exp(tiny_plan(), tiny_data());
  EXPECT_THROW(exp.search_stage(), StageError);
  EXPECT_THROW(exp.finalize(), StageError);
  EXPECT_THROW(exp.finetune_stage(), StageError);
  EXPECT_THROW(exp.refinalize(flow_reducer()), StageError);
  exp.warmup_stage();
  EXPECT_THROW(exp.warmup_stage(), StageError);
  EXPECT_THROW(exp.finetune_stage(), StageError);
}

TEST(Experiment, SearchMovesGatesAndLogsSqueeze) {
  Experiment exp(tiny_plan(), tiny_data());
  exp.warmup_stage();
  exp.search_stage();
  double moved = 0.0;
  for (const GateSet& g : exp.gates())
    for (double v : g.edges.value.data()) moved += std::abs(v);
  EXPECT_GT(moved, 0.0);
  bool saw_search = false;
  for (const MetricsRow& r : exp.metrics_log())
    if (r.stage == "search") {
      saw_search = true;
      EXPECT_EQ(r.loss.kappa, exp.budget());
      EXPECT_DOUBLE_EQ(r.loss.train, r.loss.task_total + r.loss.lambda_sq * r.loss.squeeze);
    }
  EXPECT_TRUE(saw_search);
}

TEST(Experiment, LargeSqueezeWeightEnforcesBudget) {
  TrainPlan p = tiny_plan();
  p.lambda_sq = 5.0;
  p.search_iters = 300;
  Experiment exp(p, tiny_data());
  exp.warmup_stage();
  exp.search_stage();
  EXPECT_LE(max_mass(exp.gates()), 1.05 * exp.budget());
}

TEST(Experiment, ZeroSqueezeWeightMatchesTaskOnlyObjective) {
  TrainPlan p = tiny_plan();
  p.lambda_sq = 0.0;
  Experiment exp(p, tiny_data());
  exp.warmup_stage();
  exp.search_stage();
  for (const MetricsRow& r : exp.metrics_log())
    if (r.stage == "search") {
      EXPECT_EQ(r.loss.train, r.loss.task_total);
    }
}

TEST(Experiment, FinalizeInstallsTrimmedConnectedMasks) {
  Experiment exp(tiny_plan(), tiny_data());
  exp.warmup_stage();
  exp.search_stage();
  const auto& traces = exp.finalize();
  ASSERT_EQ(traces.size(), 2u);
  for (const GateSet& g : exp.gates()) {
    EXPECT_EQ(g.mode, GateMode::Discrete);
    const SubGraph s = g.subgraph(exp.net().dag());
    EXPECT_TRUE(reachable(s));
    EXPECT_EQ(trim_to_flow(s).active_edges, s.active_edges);
  }
}

TEST(Experiment, FinetuneRewindsToWarmupAndKeepsMasks) {
  Experiment exp(tiny_plan(), tiny_data());
  const NetSnapshot warm = exp.warmup_stage().weights;
  exp.search_stage();
  exp.finalize();
  std::vector<SubGraph> masks;
  for (const GateSet& g : exp.gates()) masks.push_back(g.subgraph(exp.net().dag()));
  EXPECT_NE(exp.net().snapshot(), warm);
  exp.finetune_stage();
  for (std::size_t k = 0; k < masks.size(); ++k) {
    EXPECT_EQ(exp.gates()[k].edge_mask, masks[k].active_edges);
    EXPECT_EQ(exp.gates()[k].readin_mask, masks[k].active_readin);
    EXPECT_EQ(exp.gates()[k].readout_mask, masks[k].active_readout);
  }
  EXPECT_EQ(exp.stage(), Stage::FineTuned);
  for (const auto& row : exp.evaluate_val()) EXPECT_EQ(row.size(), 1u);
}

TEST(Experiment, RewoundWeightsEqualWarmupSnapshot) {
  TrainPlan p = tiny_plan();
  Experiment exp(p, tiny_data());
  const NetSnapshot warm = exp.warmup_stage().weights;
  exp.search_stage();
  exp.finalize();
  exp.net().restore(exp.warmup_checkpoint()->weights);
  EXPECT_EQ(exp.net().snapshot(), warm);
}

TEST(Experiment, RefinalizeStartsFromSearchedGates) {
  Experiment exp(tiny_plan(), tiny_data());
  exp.warmup_stage();
  exp.search_stage();
  exp.finalize();
  std::vector<std::vector<std::uint8_t>> first;
  for (const GateSet& g : exp.gates()) first.push_back(g.edge_mask);
  exp.finetune_stage();
  exp.refinalize(flow_reducer());
  EXPECT_EQ(exp.stage(), Stage::Finalized);
  for (std::size_t k = 0; k < first.size(); ++k) EXPECT_EQ(exp.gates()[k].edge_mask, first[k]);
}

TEST(RunExperiment, DeterministicUnderSeed) {
  const ExperimentReport a = run_experiment(tiny_plan(3), tiny_data(3), false);
  const ExperimentReport b = run_experiment(tiny_plan(3), tiny_data(3), false);
  ASSERT_EQ(a.task_reports.size(), b.task_reports.size());
  for (std::size_t k = 0; k < a.task_reports.size(); ++k) {
    EXPECT_EQ(a.task_reports[k].mask.active_edges, b.task_reports[k].mask.active_edges);
    EXPECT_EQ(a.task_reports[k].metrics, b.task_reports[k].metrics);
  }
  EXPECT_EQ(a.checkpoints.back().weights, b.checkpoints.back().weights);
}

TEST(RunExperiment, ReportsBaselinesAndDelta) {
  const ExperimentReport r = run_experiment(tiny_plan(), tiny_data());
  ASSERT_TRUE(r.baselines.has_value());
  ASSERT_TRUE(r.delta.has_value());
  EXPECT_EQ(r.baselines->single_ratio, 2.0);
  EXPECT_EQ(r.baselines->shared_ratio, 1.0);
  EXPECT_EQ(r.baselines->single_delta.mean, 0.0);
  EXPECT_EQ(r.checkpoints.size(), 3u);
  EXPECT_GT(r.search_params.ratio, r.final_params.ratio);
  for (std::size_t k = 0; k < r.task_reports.size(); ++k) EXPECT_EQ(r.task_reports[k].delta, r.delta->per_task[k]);
}
