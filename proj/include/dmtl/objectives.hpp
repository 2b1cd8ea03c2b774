#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dmtl/autodiff.hpp"
#include "dmtl/centralnet.hpp"
#include "dmtl/error.hpp"
#include "dmtl/task.hpp"

namespace dmtl {

/// Target of one task for one batch: class labels or a regression tensor.
using TaskTarget = std::variant<std::vector<int>, Tensor>;

struct LossBreakdown {
  std::vector<double> per_task;
  double task_total = 0.0;
  double squeeze = 0.0;
  double train = 0.0;
  double lambda_sq = 0.0;
  double kappa = 0.0;
};

/// Loss of a single task: cross-entropy for classification, mean squared error for regression.
inline Var single_task_loss(const Var& pred, const TaskTarget& target, const TaskSpec& spec) {
  if (spec.kind == TaskKind::Classification) {
    const auto* labels = std::get_if<std::vector<int>>(&target);
    if (!labels) throw ArgumentError("task " + spec.id + ": classification target must be labels");
    return ops::softmax_cross_entropy(pred, *labels);
  }
  const auto* values = std::get_if<Tensor>(&target);
  if (!values) throw ArgumentError("task " + spec.id + ": regression target must be a tensor");
  return ops::l2_loss(pred, *values);
}

/// Sum of per-task losses, with no task weighting.
inline Var task_loss(std::span<const Var> preds, std::span<const TaskTarget> targets,
                     std::span<const TaskSpec> specs, std::vector<double>* per_task = nullptr) {
  if (preds.size() != specs.size() || targets.size() != specs.size() || specs.empty()) {
    throw ArgumentError("task_loss: " + std::to_string(preds.size()) + " predictions, " +
                        std::to_string(targets.size()) + " targets, " + std::to_string(specs.size()) + " tasks");
  }
  Var total = single_task_loss(preds[0], targets[0], specs[0]);
  if (per_task) per_task->assign(1, total.value().item());
  for (std::size_t k = 1; k < specs.size(); ++k) {
    Var l = single_task_loss(preds[k], targets[k], specs[k]);
    if (per_task) per_task->push_back(l.value().item());
    total = ops::add(total, l);
  }
  return total;
}

/// Default squeeze budget: 0.4 of the DAG edge count.
inline double default_budget(std::size_t n_edges) { return 0.4 * static_cast<double>(n_edges); }

/// Sum over tasks of max(sum_e sigmoid(gamma_e) - budget, 0).
/// Only edge gates enter; read-in / read-out gates do not.
inline Var squeeze_loss(Tape& tape, std::span<GateSet> gates, double budget) {
  if (gates.empty()) throw ArgumentError("squeeze_loss: no gate sets");
  std::optional<Var> total;
  for (GateSet& g : gates) {
    if (g.mode != GateMode::Continuous) throw ArgumentError("squeeze_loss: gates must be continuous");
    const Var mass = ops::sum(ops::sigmoid(tape.param(g.edges)));
    const Var hinge = ops::relu(ops::add_scalar(mass, -budget));
    total = total ? ops::add(*total, hinge) : hinge;
  }
  return *total;
}

/// task + lambda_sq * squeeze
inline Var train_loss(const Var& task, const Var& squeeze, double lambda_sq) {
  if (lambda_sq < 0.0) throw ArgumentError("train_loss: lambda_sq must be non-negative");
  return ops::add(task, ops::scalar_mul(squeeze, lambda_sq));
}

}  // namespace dmtl
