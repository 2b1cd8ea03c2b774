#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dmtl/centralnet.hpp"
#include "dmtl/dataset.hpp"
#include "dmtl/metrics.hpp"
#include "dmtl/pipeline.hpp"

namespace dmtl {

struct BaselineReport {
  TaskMetrics single;  // one independent chain network per task
  TaskMetrics shared;  // one chain shared by every task, separate heads
  double single_ratio = 0.0;
  double shared_ratio = 0.0;
  RelativePerformance single_delta;
  RelativePerformance shared_delta;
};

namespace detail {

inline std::vector<GateSet> chain_gates(const CentralNet& net) {
  std::vector<GateSet> gates = net.make_gates();
  for (GateSet& g : gates) g.install(chain_subgraph(net.dag()));
  return gates;
}

}  // namespace detail

/// Single-task and shared-bottom references, both trained for the fine-tune budget.
inline BaselineReport run_baselines(const SyntheticMtlDataset& data, const TrainPlan& plan) {
  plan.validate();
  // chain networks are identical for every M, so the references are too
  const RestrictedDag dag(plan.n_states, 1);
  const NetShape shape = NetShape::uniform(data.options.input_dim, plan.n_states, plan.state_dim, plan.latent_dim);
  const std::uint64_t train_seed = plan.seed * 3 + 3;
  BaselineReport r;

  std::size_t single_backbone = 0, reference = 0;
  for (std::size_t k = 0; k < data.tasks.size(); ++k) {
    const SyntheticMtlDataset sub = data.only_task(k);
    CentralNet net(dag, shape, sub.tasks, plan.seed);
    auto gates = detail::chain_gates(net);
    train_weights(net, gates, sub.train, plan.finetune_iters, plan.weight_lr, plan.batch_size, train_seed,
                  "single_task", plan.log_every);
    r.single.push_back(evaluate(net, gates, sub.val).at(0));
    const ParameterCount pc = count_parameters(net, gates);
    single_backbone += pc.backbone;
    reference = pc.reference;
  }
  r.single_ratio = static_cast<double>(single_backbone) / static_cast<double>(reference);

  CentralNet shared(dag, shape, data.tasks, plan.seed);
  auto gates = detail::chain_gates(shared);
  train_weights(shared, gates, data.train, plan.finetune_iters, plan.weight_lr, plan.batch_size, train_seed,
                "shared_bottom", plan.log_every);
  r.shared = evaluate(shared, gates, data.val);
  r.shared_ratio = count_parameters(shared, gates).ratio;

  r.single_delta = relative_performance(r.single, r.single, data.tasks);
  r.shared_delta = relative_performance(r.shared, r.single, data.tasks);
  return r;
}

struct TaskReport {
  std::string id;
  SubGraph mask;
  TopologyReport topology;
  double search_gate_mass = 0.0;  // sum of sigmoid edge gates after search
  std::vector<double> metrics;
  double delta = 0.0;
};

struct ExperimentReport {
  TrainPlan plan;
  std::vector<TaskSpec> tasks;
  std::size_t n_edges = 0;
  double budget = 0.0;
  std::vector<TaskReport> task_reports;
  ParameterCount search_params;  // whole searchable network, before reduction
  ParameterCount final_params;   // union of the discrete sub-networks
  std::optional<BaselineReport> baselines;
  std::optional<RelativePerformance> delta;  // against the single-task baseline
  std::vector<MetricsRow> metrics_log;
  std::vector<ReductionTrace> traces;
  std::vector<StageCheckpoint> checkpoints;
};

inline double gate_mass(const GateSet& g) {
  double total = 0.0;
  for (double v : gate_values(g).edges) total += v;
  return total;
}

/// Runs warm-up, search, flow-based reduction and fine-tuning, then scores the
/// result against the baselines.
inline ExperimentReport run_experiment(const TrainPlan& plan, const SyntheticMtlDataset& data,
                                       bool with_baselines = true, const Reducer& reducer = flow_reducer()) {
  Experiment exp(plan, data);
  ExperimentReport rep;
  rep.plan = plan;
  rep.tasks = data.tasks;
  rep.n_edges = exp.net().dag().n_edges();
  rep.budget = exp.budget();
  rep.search_params = search_space_parameters(exp.net());

  rep.checkpoints.push_back(exp.warmup_stage());
  rep.checkpoints.push_back(exp.search_stage());
  std::vector<double> masses;
  for (const GateSet& g : exp.gates()) masses.push_back(gate_mass(g));
  exp.finalize(reducer);
  rep.checkpoints.push_back(exp.finetune_stage());

  const TaskMetrics metrics = exp.evaluate_val();
  rep.final_params = count_parameters(exp.net(), exp.gates());
  rep.metrics_log = exp.metrics_log();
  rep.traces = exp.traces();
  for (std::size_t k = 0; k < data.tasks.size(); ++k) {
    TaskReport t;
    t.id = data.tasks[k].id;
    t.mask = exp.gates()[k].subgraph(exp.net().dag());
    // a task may exit straight from one state with no hidden edge
    if (t.mask.n_active_edges() > 0) t.topology = topology(t.mask);
    t.search_gate_mass = masses[k];
    t.metrics = metrics[k];
    rep.task_reports.push_back(std::move(t));
  }
  if (with_baselines) {
    rep.baselines = run_baselines(data, plan);
    rep.delta = relative_performance(metrics, rep.baselines->single, data.tasks);
    for (std::size_t k = 0; k < data.tasks.size(); ++k) rep.task_reports[k].delta = rep.delta->per_task[k];
  }
  return rep;
}

}  // namespace dmtl
