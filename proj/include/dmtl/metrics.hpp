#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dmtl/centralnet.hpp"
#include "dmtl/dataset.hpp"
#include "dmtl/error.hpp"
#include "dmtl/graphtop.hpp"
#include "dmtl/task.hpp"

namespace dmtl {

/// metrics[k][j] is metric j of task k, ordered as TaskSpec::metrics().
using TaskMetrics = std::vector<std::vector<double>>;

inline std::vector<double> score_task(const Tensor& pred, const TaskTarget& target, const TaskSpec& spec) {
  const std::size_t n = pred.shape()[0];
  if (spec.kind == TaskKind::Classification) {
    const auto& labels = std::get<std::vector<int>>(target);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < n; ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < pred.shape()[1]; ++c)
        if (pred.at(r, c) > pred.at(r, best)) best = c;
      correct += static_cast<int>(best) == labels[r];
    }
    return {static_cast<double>(correct) / static_cast<double>(n)};
  }
  const auto& values = std::get<Tensor>(target);
  double abs_err = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) abs_err += std::abs(pred[i] - values[i]);
  return {abs_err / static_cast<double>(pred.size())};
}

/// Accuracy / mean absolute error of every task on a split.
inline TaskMetrics evaluate(CentralNet& net, std::vector<GateSet>& gates, const Split& split) {
  TaskMetrics out;
  for (std::size_t k = 0; k < net.n_tasks(); ++k) {
    const Tensor pred = predict_values(net, gates.at(k), k, split.inputs);
    out.push_back(score_task(pred, split.targets.at(k), net.tasks()[k]));
  }
  return out;
}

struct RelativePerformance {
  std::vector<double> per_task;  // percent
  double mean = 0.0;             // percent, averaged over tasks
};

/// Signed percentage improvement over a reference, averaged over each task's
/// metrics (lower-is-better metrics flip sign), then over tasks.
inline RelativePerformance relative_performance(const TaskMetrics& method, const TaskMetrics& reference,
                                                const std::vector<TaskSpec>& specs) {
  if (method.size() != specs.size() || reference.size() != specs.size() || specs.empty()) {
    throw ArgumentError("relative_performance: metric tables do not match the task list");
  }
  RelativePerformance rp;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto metric_specs = specs[k].metrics();
    if (method[k].size() != metric_specs.size() || reference[k].size() != metric_specs.size()) {
      throw ArgumentError("relative_performance: task " + specs[k].id + " has the wrong number of metrics");
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < metric_specs.size(); ++j) {
      if (reference[k][j] == 0.0) {
        throw ArgumentError("relative_performance: reference metric " + metric_specs[j].name + " of task " +
                            specs[k].id + " is zero");
      }
      const double sign = metric_specs[j].lower_is_better ? -1.0 : 1.0;
      acc += sign * (method[k][j] - reference[k][j]) / reference[k][j];
    }
    rp.per_task.push_back(100.0 * acc / static_cast<double>(metric_specs.size()));
  }
  double total = 0.0;
  for (double d : rp.per_task) total += d;
  rp.mean = total / static_cast<double>(rp.per_task.size());
  return rp;
}

/// Depth, width and sparsity of every task's discrete sub-network.
inline std::vector<TopologyReport> topology_report(const std::vector<GateSet>& gates, const RestrictedDag& dag) {
  std::vector<TopologyReport> out;
  for (const GateSet& g : gates) out.push_back(topology(g.subgraph(dag)));
  return out;
}

}  // namespace dmtl
