#pragma once

// Three-stage training: warm-up, search, reduction, rewind, fine-tune.
//
//   warm-up   gates frozen at logit 0, weights trained on the summed task loss
//   search    gates and weights trained jointly on task + lambda * squeeze,
//             each group with its own Adam state
//   finalize  sigmoid gates -> per-task reduction -> binary masks
//   fine-tune weights rewound to the warm-up snapshot, retrained with the
//             discrete forward; gates immutable

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dmtl/adam.hpp"
#include "dmtl/centralnet.hpp"
#include "dmtl/dataset.hpp"
#include "dmtl/error.hpp"
#include "dmtl/metrics.hpp"
#include "dmtl/objectives.hpp"
#include "dmtl/reduction.hpp"

namespace dmtl {

struct TrainPlan {
  std::size_t warmup_iters = 500;
  std::size_t search_iters = 1500;
  std::size_t finetune_iters = 2000;
  double weight_lr = 1e-3;
  double upper_lr = 1e-2;
  double lambda_sq = 0.05;
  std::optional<double> kappa;  // default: 0.4 * |E|
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t flow_constant = 3;
  std::size_t n_states = 8;
  std::size_t state_dim = 16;
  std::size_t latent_dim = 16;
  std::size_t log_every = 50;

  void validate() const {
    if (warmup_iters < 1 || search_iters < 1 || finetune_iters < 1) {
      throw ArgumentError("train plan: every stage needs at least one iteration");
    }
    if (!(weight_lr > 0.0) || !(upper_lr > 0.0)) throw ArgumentError("train plan: learning rates must be positive");
    if (lambda_sq < 0.0) throw ArgumentError("train plan: lambda_sq must be non-negative");
    if (kappa && *kappa < 0.0) throw ArgumentError("train plan: kappa must be non-negative");
    if (batch_size < 1) throw ArgumentError("train plan: batch size must be positive");
    if (state_dim < 1 || latent_dim < 1) throw ArgumentError("train plan: dimensions must be positive");
    if (log_every < 1) throw ArgumentError("train plan: log_every must be positive");
    RestrictedDag(n_states, flow_constant);  // range checks on N and M
  }

  double budget(std::size_t n_edges) const { return kappa.value_or(default_budget(n_edges)); }

  bool operator==(const TrainPlan&) const = default;
};

enum class Stage { Initialized, WarmedUp, Searched, Finalized, FineTuned };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::Initialized:
      return "initialized";
    case Stage::WarmedUp:
      return "warmup";
    case Stage::Searched:
      return "search";
    case Stage::Finalized:
      return "finalized";
    case Stage::FineTuned:
      return "finetune";
  }
  return "unknown";
}

struct StageCheckpoint {
  std::string stage;
  std::size_t iteration = 0;
  NetSnapshot weights;
  std::vector<GateSet> gates;
  LossBreakdown last_loss;
};

struct MetricsRow {
  std::string stage;
  std::size_t iteration = 0;
  LossBreakdown loss;
};

/// Per-task reducer: (dag, post-sigmoid gate values, task index) -> trace.
using Reducer = std::function<ReductionTrace(const RestrictedDag&, const GateValues&, std::size_t)>;

inline Reducer flow_reducer() {
  return [](const RestrictedDag& dag, const GateValues& v, std::size_t) { return flow_based_reduce(dag, v); };
}

/// Samples one batch per task and accumulates the summed task loss (plus the
/// squeeze term when `lambda_sq` is set) into the gradients of every trainable
/// Variable reachable from it.
class BatchSampler {
 public:
  BatchSampler(std::size_t n_rows, std::size_t batch, std::uint64_t seed) : dist_(0, n_rows - 1), batch_(batch), rng_(seed) {
    if (n_rows == 0) throw ArgumentError("batch sampler: empty split");
  }
  std::vector<std::size_t> next() {
    std::vector<std::size_t> rows(batch_);
    for (auto& r : rows) r = dist_(rng_);
    return rows;
  }

 private:
  std::uniform_int_distribution<std::size_t> dist_;
  std::size_t batch_;
  std::mt19937_64 rng_;
};

struct StepOptions {
  std::optional<double> lambda_sq;  // squeeze term on when set
  double kappa = 0.0;
};

inline LossBreakdown accumulate_gradients(CentralNet& net, std::vector<GateSet>& gates, const Split& split,
                                          BatchSampler& sampler, const StepOptions& opts) {
  Tape tape;
  std::vector<Var> preds;
  std::vector<TaskTarget> targets;
  for (std::size_t k = 0; k < net.n_tasks(); ++k) {
    const auto rows = sampler.next();
    const Var x = tape.constant(split.gather_inputs(rows));
    preds.push_back(predict(tape, net, gates[k], k, x));
    targets.push_back(split.gather_target(k, rows));
  }
  LossBreakdown lb;
  Var task = task_loss(preds, targets, net.tasks(), &lb.per_task);
  lb.task_total = task.value().item();
  Var total = task;
  if (opts.lambda_sq) {
    const Var sq = squeeze_loss(tape, gates, opts.kappa);
    total = train_loss(task, sq, *opts.lambda_sq);
    lb.squeeze = sq.value().item();
    lb.lambda_sq = *opts.lambda_sq;
    lb.kappa = opts.kappa;
  }
  lb.train = total.value().item();
  if (!std::isfinite(lb.train)) throw NumericError("non-finite loss");
  tape.backward(total);
  return lb;
}

/// Trains network weights only, on the summed task loss, with the gates as they are.
/// Returns the loss of each logged iteration.
inline std::vector<MetricsRow> train_weights(CentralNet& net, std::vector<GateSet>& gates, const Split& split,
                                             std::size_t iters, double lr, std::size_t batch, std::uint64_t seed,
                                             const std::string& stage, std::size_t log_every) {
  Adam opt(net.weight_variables(), {.learning_rate = lr});
  BatchSampler sampler(split.size(), batch, seed);
  std::vector<MetricsRow> log;
  for (std::size_t it = 0; it < iters; ++it) {
    opt.zero_grad();
    for (GateSet& g : gates)
      for (Variable* v : g.variables()) v->zero_grad();
    LossBreakdown lb;
    try {
      lb = accumulate_gradients(net, gates, split, sampler, {});
    } catch (const NumericError& e) {
      throw NumericError(stage + " stage, iteration " + std::to_string(it) + ": " + e.what());
    }
    opt.step();
    if (it % log_every == 0 || it + 1 == iters) log.push_back({stage, it, lb});
  }
  return log;
}

/// One multi-task search experiment: the network, the per-task gates and the stage machine.
class Experiment {
 public:
  Experiment(TrainPlan plan, SyntheticMtlDataset data) : plan_(std::move(plan)), data_(std::move(data)) {
    plan_.validate();
    RestrictedDag dag(plan_.n_states, plan_.flow_constant);
    net_ = CentralNet(dag, NetShape::uniform(data_.options.input_dim, plan_.n_states, plan_.state_dim, plan_.latent_dim),
                      data_.tasks, plan_.seed);
    gates_ = net_.make_gates();
  }

  // Optimizers hold pointers into net_ and gates_; keep the experiment in place.
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  const TrainPlan& plan() const noexcept { return plan_; }
  const SyntheticMtlDataset& data() const noexcept { return data_; }
  CentralNet& net() noexcept { return net_; }
  std::vector<GateSet>& gates() noexcept { return gates_; }
  Stage stage() const noexcept { return stage_; }
  const std::vector<MetricsRow>& metrics_log() const noexcept { return log_; }
  const std::vector<ReductionTrace>& traces() const noexcept { return traces_; }
  const std::optional<StageCheckpoint>& warmup_checkpoint() const noexcept { return warmup_ckpt_; }
  double budget() const { return plan_.budget(net_.dag().n_edges()); }

  StageCheckpoint warmup_stage() {
    require(Stage::Initialized, "warm-up");
    for (GateSet& g : gates_) {
      for (Variable* v : g.variables()) v->value.fill(0.0);
      g.set_trainable(false);
    }
    auto rows = train_weights(net_, gates_, data_.train, plan_.warmup_iters, plan_.weight_lr, plan_.batch_size,
                              plan_.seed * 3 + 1, "warmup", plan_.log_every);
    log_.insert(log_.end(), rows.begin(), rows.end());
    stage_ = Stage::WarmedUp;
    warmup_ckpt_ = checkpoint("warmup", plan_.warmup_iters);
    return *warmup_ckpt_;
  }

  StageCheckpoint search_stage() {
    require(Stage::WarmedUp, "search");
    std::vector<Variable*> upper;
    for (GateSet& g : gates_) {
      g.set_trainable(true);
      for (Variable* v : g.variables()) upper.push_back(v);
    }
    Adam weight_opt(net_.weight_variables(), {.learning_rate = plan_.weight_lr});
    Adam upper_opt(upper, {.learning_rate = plan_.upper_lr});
    BatchSampler sampler(data_.train.size(), plan_.batch_size, plan_.seed * 3 + 2);
    const StepOptions opts{plan_.lambda_sq, budget()};
    for (std::size_t it = 0; it < plan_.search_iters; ++it) {
      weight_opt.zero_grad();
      upper_opt.zero_grad();
      LossBreakdown lb;
      try {
        lb = accumulate_gradients(net_, gates_, data_.train, sampler, opts);
      } catch (const NumericError& e) {
        throw NumericError(std::string("search stage, iteration ") + std::to_string(it) + ": " + e.what());
      }
      weight_opt.step();
      upper_opt.step();
      if (it % plan_.log_every == 0 || it + 1 == plan_.search_iters) log_.push_back({"search", it, lb});
    }
    for (GateSet& g : gates_) g.set_trainable(false);
    stage_ = Stage::Searched;
    return checkpoint("search", plan_.search_iters);
  }

  /// Reduces every task's gates with `reducer`, trims edges off every
  /// source-to-sink path, and installs the binary masks.
  const std::vector<ReductionTrace>& finalize(const Reducer& reducer = flow_reducer()) {
    require(Stage::Searched, "finalize");
    search_gates_ = gates_;
    install(reducer);
    return traces_;
  }

  /// Re-runs reduction from the searched gates with a different reducer,
  /// discarding any previous masks and fine-tuning.
  const std::vector<ReductionTrace>& refinalize(const Reducer& reducer) {
    if (!search_gates_) throw StageError("refinalize: no search result to reduce");
    gates_ = *search_gates_;
    install(reducer);
    return traces_;
  }

  StageCheckpoint finetune_stage() {
    require(Stage::Finalized, "fine-tune");
    if (!warmup_ckpt_) throw StageError("fine-tune: no warm-up snapshot to rewind to");
    net_.restore(warmup_ckpt_->weights);
    for (GateSet& g : gates_) g.set_trainable(false);
    auto rows = train_weights(net_, gates_, data_.train, plan_.finetune_iters, plan_.weight_lr, plan_.batch_size,
                              plan_.seed * 3 + 3, "finetune", plan_.log_every);
    log_.insert(log_.end(), rows.begin(), rows.end());
    stage_ = Stage::FineTuned;
    return checkpoint("finetune", plan_.finetune_iters);
  }

  TaskMetrics evaluate_val() { return evaluate(net_, gates_, data_.val); }

  StageCheckpoint checkpoint(std::string stage, std::size_t iteration) const {
    StageCheckpoint c{std::move(stage), iteration, net_.snapshot(), gates_, {}};
    if (!log_.empty()) c.last_loss = log_.back().loss;
    return c;
  }

 private:
  void require(Stage expected, const char* what) const {
    if (stage_ != expected) {
      throw StageError(std::string(what) + " requires stage '" + to_string(expected) + "', current stage is '" +
                       to_string(stage_) + "'");
    }
  }

  void install(const Reducer& reducer) {
    traces_.clear();
    for (std::size_t k = 0; k < gates_.size(); ++k) {
      ReductionTrace t = reducer(net_.dag(), gate_values(gates_[k]), k);
      gates_[k].install(trim_to_flow(t.result));
      gates_[k].set_trainable(false);
      traces_.push_back(std::move(t));
    }
    stage_ = Stage::Finalized;
  }

  TrainPlan plan_;
  SyntheticMtlDataset data_;
  CentralNet net_;
  std::vector<GateSet> gates_;
  std::optional<std::vector<GateSet>> search_gates_;
  Stage stage_ = Stage::Initialized;
  std::vector<MetricsRow> log_;
  std::vector<ReductionTrace> traces_;
  std::optional<StageCheckpoint> warmup_ckpt_;
};

}  // namespace dmtl
