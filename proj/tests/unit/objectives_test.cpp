#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dmtl/objectives.hpp"
#include "gradcheck.hpp"

using namespace dmtl;

namespace {

std::vector<GateSet> gates_with_logits(std::size_t k, std::size_t n_edges, double logit) {
  std::vector<GateSet> out;
  for (std::size_t t = 0; t < k; ++t) {
    out.emplace_back(4, n_edges, "t" + std::to_string(t));
    out.back().edges.value.fill(logit);
  }
  return out;
}

double squeeze_value(std::vector<GateSet>& gates, double budget) {
  Tape t;
  return squeeze_loss(t, gates, budget).value().item();
}

}  // namespace

TEST(Squeeze, ThirtyHalfGatesOverBudgetTen) {
  auto gates = gates_with_logits(1, 30, 0.0);
  EXPECT_DOUBLE_EQ(squeeze_value(gates, 10.0), 5.0);
}

TEST(Squeeze, ZeroBelowBudget) {
  auto gates = gates_with_logits(1, 30, -40.0);
  EXPECT_EQ(squeeze_value(gates, 10.0), 0.0);
}

TEST(Squeeze, SumsPerTaskHinges) {
  auto gates = gates_with_logits(3, 24, 0.0);  // mass 12 per task
  EXPECT_DOUBLE_EQ(squeeze_value(gates, 10.0), 6.0);
}

TEST(Squeeze, DefaultBudgetIsFortyPercent) {
  EXPECT_DOUBLE_EQ(default_budget(30), 12.0);
  EXPECT_DOUBLE_EQ(default_budget(5), 2.0);
}

TEST(Squeeze, OnlyEdgeGatesCount) {
  auto gates = gates_with_logits(1, 10, 0.0);
  const double before = squeeze_value(gates, 1.0);
  gates[0].readin.value.fill(30.0);
  gates[0].readout.value.fill(30.0);
  EXPECT_EQ(squeeze_value(gates, 1.0), before);
}

TEST(Squeeze, RejectsDiscreteGatesAndEmptySet) {
  auto gates = gates_with_logits(1, 3, 0.0);
  gates[0].install(SubGraph(RestrictedDag(4, 1)));
  Tape t;
  EXPECT_THROW(squeeze_loss(t, gates, 1.0), ArgumentError);
  std::vector<GateSet> none;
  EXPECT_THROW(squeeze_loss(t, none, 1.0), ArgumentError);
}

TEST(Squeeze, MonotoneInEveryLogit) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    auto gates = gates_with_logits(2, 12, 0.0);
    for (GateSet& g : gates)
      for (double& v : g.edges.value.data()) v = n(rng);
    const double base = squeeze_value(gates, 4.0);
    gates[rng() % 2].edges.value[rng() % 12] += 0.5;
    EXPECT_GE(squeeze_value(gates, 4.0), base);
  }
}

TEST(Squeeze, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  auto gates = gates_with_logits(2, 10, 0.0);
  for (GateSet& g : gates)
    for (double& v : g.edges.value.data()) v = n(rng) + 1.0;  // keeps each mass clear of the hinge
  const double err = dmtl::testing::gradient_error({&gates[0].edges, &gates[1].edges},
                                                   [&](Tape& t) { return squeeze_loss(t, gates, 3.0); });
  EXPECT_LT(err, 1e-6);
}

TEST(TrainLoss, TaskPlusWeightedSqueeze) {
  Tape t;
  const Var l = train_loss(t.constant(Tensor::scalar(1.0)), t.constant(Tensor::scalar(5.0)), 0.05);
  EXPECT_DOUBLE_EQ(l.value().item(), 1.25);
}

TEST(TrainLoss, ZeroWeightIsTaskLoss) {
  Tape t;
  const Var l = train_loss(t.constant(Tensor::scalar(0.7)), t.constant(Tensor::scalar(123.0)), 0.0);
  EXPECT_EQ(l.value().item(), 0.7);
}

TEST(TrainLoss, RejectsNegativeWeight) {
  Tape t;
  EXPECT_THROW(train_loss(t.constant(Tensor::scalar(1.0)), t.constant(Tensor::scalar(1.0)), -0.1), ArgumentError);
}

TEST(TaskLoss, UniformLogitsAndSumOfTasks) {
  const std::vector<TaskSpec> specs{TaskSpec::classification("a", 5), TaskSpec::regression("b", 2)};
  Tape t;
  const std::vector<Var> preds{t.constant(Tensor({4, 5}, 0.3)), t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}))};
  const std::vector<TaskTarget> targets{std::vector<int>{0, 1, 2, 3}, Tensor::matrix(2, 2, {1, 2, 3, 6})};
  std::vector<double> per_task;
  const Var total = task_loss(preds, targets, specs, &per_task);
  ASSERT_EQ(per_task.size(), 2u);
  EXPECT_NEAR(per_task[0], std::log(5.0), 1e-12);
  EXPECT_DOUBLE_EQ(per_task[1], 1.0);  // (0 + 0 + 0 + 4) / 4
  EXPECT_DOUBLE_EQ(total.value().item(), per_task[0] + per_task[1]);
}

TEST(TaskLoss, RejectsMismatchedTargets) {
  const std::vector<TaskSpec> specs{TaskSpec::classification("a", 3)};
  Tape t;
  const std::vector<Var> preds{t.constant(Tensor({2, 3}))};
  const std::vector<TaskTarget> wrong_kind{Tensor({2, 3})};
  EXPECT_THROW(task_loss(preds, wrong_kind, specs), ArgumentError);
  const std::vector<TaskTarget> none;
  EXPECT_THROW(task_loss(preds, none, specs), ArgumentError);
}
