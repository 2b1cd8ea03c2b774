#pragma once

// Gated forward pass of the shared central network.
//
// Every task reads the same edge operators, read-in projections, read-out
// projections; what differs per task is its GateSet and its head. In
// Continuous mode the gates are sigmoids of learnable logits; in Discrete mode
// they are fixed binary masks and no sigmoid is applied.
//
// Each state j averages its incoming messages:
//   v_j = (r_j + sum_{(i,j)} g_ij * relu(affine_ij(v_i))) / In_j
// where r_j is the gated read-in message. The read-in counts as one incoming
// slot. See `in_degree` for how In_j is counted in each mode.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dmtl/autodiff.hpp"
#include "dmtl/error.hpp"
#include "dmtl/graphtop.hpp"
#include "dmtl/task.hpp"
#include "dmtl/tensor.hpp"

namespace dmtl {

struct Affine {
  Variable weight;  // [in, out]
  Variable bias;    // [out]

  std::size_t in_dim() const { return weight.value.shape()[0]; }
  std::size_t out_dim() const { return weight.value.shape()[1]; }
  std::size_t n_params() const { return weight.value.size() + bias.value.size(); }

  /// Glorot-uniform weights, zero bias.
  static Affine glorot(std::size_t in, std::size_t out, std::mt19937_64& rng, const std::string& tag) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor w({in, out});
    for (double& v : w.data()) v = dist(rng);
    return {Variable(std::move(w), tag + ".weight"), Variable(Tensor({out}), tag + ".bias")};
  }

  Var apply(Tape& tape, const Var& x) { return ops::affine(x, tape.param(weight), tape.param(bias)); }
};

struct NetShape {
  std::size_t input_dim = 8;
  std::vector<std::size_t> state_dims;  // d_1..d_N
  std::size_t latent_dim = 16;          // d_L, read-out aggregate width

  static NetShape uniform(std::size_t input_dim, std::size_t n_states, std::size_t state_dim, std::size_t latent_dim) {
    return {input_dim, std::vector<std::size_t>(n_states, state_dim), latent_dim};
  }
  bool operator==(const NetShape&) const = default;
};

enum class GateMode { Continuous, Discrete };

/// Normalizer convention for In_j.
///  Structural: 1 (read-in slot) + every DAG in-edge of j. Constant, gradient-free.
///  Active:     read-in mask + active in-edges of j (binary masks only).
enum class InConvention { Structural, Active };

/// One task's architecture parameters: read-in, read-out and edge logits, and
/// their binary counterparts once discretized.
class GateSet {
 public:
  GateSet() = default;
  GateSet(std::size_t n_states, std::size_t n_edges, const std::string& task_tag)
      : readin(Tensor({n_states}), task_tag + ".alpha"),
        readout(Tensor({n_states}), task_tag + ".beta"),
        edges(Tensor({n_edges}), task_tag + ".gamma"),
        readin_mask(n_states, 0),
        readout_mask(n_states, 0),
        edge_mask(n_edges, 0) {}

  Variable readin;   // alpha, one logit per state
  Variable readout;  // beta, one logit per state
  Variable edges;    // gamma, one logit per DAG edge
  GateMode mode = GateMode::Continuous;
  std::vector<std::uint8_t> readin_mask;
  std::vector<std::uint8_t> readout_mask;
  std::vector<std::uint8_t> edge_mask;

  std::size_t n_states() const { return readin.value.size(); }
  std::size_t n_edges() const { return edges.value.size(); }

  std::vector<Variable*> variables() { return {&readin, &readout, &edges}; }

  void set_trainable(bool on) {
    for (Variable* v : variables()) v->trainable = on;
  }

  /// Switches to Discrete mode with the masks of `g`.
  void install(const SubGraph& g) {
    if (g.active_edges.size() != n_edges() || g.active_readin.size() != n_states()) {
      throw ShapeError("gate install: sub-graph does not match gate dimensions");
    }
    readin_mask = g.active_readin;
    readout_mask = g.active_readout;
    edge_mask = g.active_edges;
    mode = GateMode::Discrete;
  }

  SubGraph subgraph(const RestrictedDag& dag) const {
    if (mode != GateMode::Discrete) throw ArgumentError("gate subgraph: gates are not discretized");
    SubGraph g(dag);
    g.active_edges = edge_mask;
    g.active_readin = readin_mask;
    g.active_readout = readout_mask;
    return g;
  }
};

/// Snapshot of every network weight (not gates), in weight_variables() order.
using NetSnapshot = std::vector<Tensor>;

class CentralNet {
 public:
  CentralNet() = default;

  CentralNet(RestrictedDag dag, NetShape shape, std::vector<TaskSpec> tasks, std::uint64_t seed)
      : dag_(std::move(dag)), shape_(std::move(shape)), tasks_(std::move(tasks)) {
    const std::size_t n = dag_.n_states();
    if (shape_.state_dims.size() != n) {
      throw ShapeError("central net: " + std::to_string(shape_.state_dims.size()) + " state dims for " +
                       std::to_string(n) + " states");
    }
    if (tasks_.empty()) throw ArgumentError("central net: at least one task required");
    std::mt19937_64 rng(seed);
    for (std::size_t e = 0; e < dag_.n_edges(); ++e) {
      const Edge& ed = dag_.edge(e);
      edges_.push_back(Affine::glorot(dim(ed.from), dim(ed.to), rng,
                                      "edge_" + std::to_string(ed.from) + "_" + std::to_string(ed.to)));
    }
    for (std::size_t s = 1; s <= n; ++s)
      readin_.push_back(Affine::glorot(shape_.input_dim, dim(s), rng, "readin_" + std::to_string(s)));
    for (std::size_t s = 1; s <= n; ++s)
      readout_.push_back(Affine::glorot(dim(s), shape_.latent_dim, rng, "readout_" + std::to_string(s)));
    for (const TaskSpec& t : tasks_)
      heads_.push_back(Affine::glorot(shape_.latent_dim, t.output_dim, rng, "head_" + t.id));
    in_edges_.resize(n + 1);
    for (std::size_t s = 1; s <= n; ++s) in_edges_[s] = dag_.in_edges(s);
  }

  const RestrictedDag& dag() const noexcept { return dag_; }
  const NetShape& shape() const noexcept { return shape_; }
  const std::vector<TaskSpec>& tasks() const noexcept { return tasks_; }
  std::size_t n_tasks() const noexcept { return tasks_.size(); }
  std::size_t dim(std::size_t state) const { return shape_.state_dims.at(state - 1); }
  const std::vector<std::size_t>& in_edges(std::size_t state) const { return in_edges_.at(state); }

  Affine& edge_op(std::size_t e) { return edges_.at(e); }
  const Affine& edge_op(std::size_t e) const { return edges_.at(e); }
  Affine& readin_proj(std::size_t state) { return readin_.at(state - 1); }
  const Affine& readin_proj(std::size_t state) const { return readin_.at(state - 1); }
  Affine& readout_proj(std::size_t state) { return readout_.at(state - 1); }
  const Affine& readout_proj(std::size_t state) const { return readout_.at(state - 1); }
  Affine& head(std::size_t task) { return heads_.at(task); }
  const Affine& head(std::size_t task) const { return heads_.at(task); }

  /// Fresh continuous gate sets with all logits at zero, one per task.
  std::vector<GateSet> make_gates() const {
    std::vector<GateSet> gates;
    for (const TaskSpec& t : tasks_) gates.emplace_back(dag_.n_states(), dag_.n_edges(), t.id);
    return gates;
  }

  std::vector<Variable*> weight_variables() {
    std::vector<Variable*> out;
    for_each_affine(*this, [&out](Affine& a) {
      out.push_back(&a.weight);
      out.push_back(&a.bias);
    });
    return out;
  }

  NetSnapshot snapshot() const {
    NetSnapshot snap;
    for_each_affine(*this, [&snap](const Affine& a) {
      snap.push_back(a.weight.value);
      snap.push_back(a.bias.value);
    });
    return snap;
  }

  void restore(const NetSnapshot& snap) {
    auto vars = weight_variables();
    if (snap.size() != vars.size()) throw ShapeError("restore: snapshot has wrong number of tensors");
    for (std::size_t i = 0; i < vars.size(); ++i) {
      if (snap[i].shape() != vars[i]->value.shape()) throw ShapeError("restore: shape mismatch for " + vars[i]->tag);
      vars[i]->value = snap[i];
    }
  }

 private:
  template <typename Self, typename Fn>
  static void for_each_affine(Self& self, Fn&& fn) {
    for (auto& a : self.edges_) fn(a);
    for (auto& a : self.readin_) fn(a);
    for (auto& a : self.readout_) fn(a);
    for (auto& a : self.heads_) fn(a);
  }

  RestrictedDag dag_;
  NetShape shape_;
  std::vector<TaskSpec> tasks_;
  std::vector<Affine> edges_;
  std::vector<Affine> readin_;
  std::vector<Affine> readout_;
  std::vector<Affine> heads_;
  std::vector<std::vector<std::size_t>> in_edges_;
};

struct ForwardOptions {
  /// Overrides the mode's default In convention (Structural for Continuous,
  /// Active for Discrete).
  std::optional<InConvention> in_convention;
};

inline InConvention default_convention(GateMode mode) {
  return mode == GateMode::Continuous ? InConvention::Structural : InConvention::Active;
}

/// In_j for state j (1-based). All In normalization goes through here.
inline double in_degree(const CentralNet& net, const GateSet& gates, std::size_t state, InConvention convention) {
  const auto& ins = net.in_edges(state);
  if (convention == InConvention::Structural) return 1.0 + static_cast<double>(ins.size());
  if (gates.mode != GateMode::Discrete) throw ArgumentError("in_degree: Active convention needs discrete gates");
  double count = gates.readin_mask.at(state - 1) ? 1.0 : 0.0;
  for (std::size_t e : ins) count += gates.edge_mask[e] ? 1.0 : 0.0;
  return count;
}

/// Gated read-in messages r_1..r_N (index s-1 for state s).
inline std::vector<Var> read_in(Tape& tape, CentralNet& net, GateSet& gates, const Var& input) {
  const std::size_t n = net.dag().n_states();
  if (input.value().rank() != 2 || input.value().shape()[1] != net.shape().input_dim) {
    throw ShapeError("read_in: input " + shape_str(input.shape()) + " but net expects width " +
                     std::to_string(net.shape().input_dim));
  }
  const std::size_t batch = input.value().shape()[0];
  std::vector<Var> reads;
  reads.reserve(n);
  if (gates.mode == GateMode::Continuous) {
    const Var alpha = ops::sigmoid(tape.param(gates.readin));
    for (std::size_t s = 1; s <= n; ++s)
      reads.push_back(ops::scale(net.readin_proj(s).apply(tape, input), ops::element(alpha, s - 1)));
  } else {
    for (std::size_t s = 1; s <= n; ++s) {
      if (gates.readin_mask[s - 1])
        reads.push_back(net.readin_proj(s).apply(tape, input));
      else
        reads.push_back(tape.constant(Tensor({batch, net.dim(s)})));
    }
  }
  return reads;
}

/// Hidden states v_1..v_N in topological order (index s-1 for state s).
inline std::vector<Var> forward_states(Tape& tape, CentralNet& net, GateSet& gates, const std::vector<Var>& reads,
                                       const ForwardOptions& options = {}) {
  const std::size_t n = net.dag().n_states();
  if (reads.size() != n) throw ShapeError("forward_states: expected one read-in message per state");
  const bool continuous = gates.mode == GateMode::Continuous;
  const InConvention convention = options.in_convention.value_or(default_convention(gates.mode));
  const std::size_t batch = reads.front().value().shape()[0];

  std::optional<Var> gamma;
  if (continuous) gamma = ops::sigmoid(tape.param(gates.edges));

  std::vector<Var> states;
  states.reserve(n);
  for (std::size_t j = 1; j <= n; ++j) {
    std::optional<Var> acc;
    if (continuous || gates.readin_mask[j - 1]) acc = reads[j - 1];
    for (std::size_t e : net.in_edges(j)) {
      if (!continuous && !gates.edge_mask[e]) continue;
      const std::size_t i = net.dag().edge(e).from;
      Var msg = ops::relu(net.edge_op(e).apply(tape, states[i - 1]));
      if (continuous) msg = ops::scale(msg, ops::element(*gamma, e));
      acc = acc ? ops::add(*acc, msg) : msg;
    }
    const double in = in_degree(net, gates, j, convention);
    if (in == 0.0 || !acc) {
      if (!continuous && gates.readout_mask[j - 1]) {
        throw ArgumentError("forward_states: state v" + std::to_string(j) +
                            " is read out but has no incoming contribution");
      }
      states.push_back(tape.constant(Tensor({batch, net.dim(j)})));
      continue;
    }
    states.push_back(ops::scalar_mul(*acc, 1.0 / in));
  }
  return states;
}

/// v_L = sum_i g_i * readout_proj_i(v_i), no normalization.
inline Var read_out(Tape& tape, CentralNet& net, GateSet& gates, const std::vector<Var>& states) {
  const std::size_t n = net.dag().n_states();
  if (states.size() != n) throw ShapeError("read_out: expected one state per DAG state");
  std::optional<Var> acc;
  if (gates.mode == GateMode::Continuous) {
    const Var beta = ops::sigmoid(tape.param(gates.readout));
    for (std::size_t s = 1; s <= n; ++s) {
      Var term = ops::scale(net.readout_proj(s).apply(tape, states[s - 1]), ops::element(beta, s - 1));
      acc = acc ? ops::add(*acc, term) : term;
    }
  } else {
    for (std::size_t s = 1; s <= n; ++s) {
      if (!gates.readout_mask[s - 1]) continue;
      Var term = net.readout_proj(s).apply(tape, states[s - 1]);
      acc = acc ? ops::add(*acc, term) : term;
    }
  }
  if (!acc) throw ArgumentError("read_out: no active read-out state");
  return *acc;
}

/// Task head output for task `task` (logits or regression values).
inline Var predict(Tape& tape, CentralNet& net, GateSet& gates, std::size_t task, const Var& input,
                   const ForwardOptions& options = {}) {
  if (task >= net.n_tasks()) throw ArgumentError("predict: task index out of range");
  const auto reads = read_in(tape, net, gates, input);
  const auto states = forward_states(tape, net, gates, reads, options);
  const Var latent = read_out(tape, net, gates, states);
  return net.head(task).apply(tape, latent);
}

/// Convenience forward without keeping the tape.
inline Tensor predict_values(CentralNet& net, GateSet& gates, std::size_t task, const Tensor& input,
                             const ForwardOptions& options = {}) {
  Tape tape;
  return predict(tape, net, gates, task, tape.constant(input), options).value();
}

struct ParameterCount {
  double ratio = 0.0;           // backbone / reference
  std::size_t backbone = 0;     // edges + projections in use
  std::size_t heads = 0;        // all task heads
  std::size_t raw = 0;          // backbone + heads
  std::size_t reference = 0;    // single full chain backbone
};

/// Backbone parameters of the chain v_1 -> ... -> v_N with read-in at v_1 and read-out at v_N.
inline std::size_t chain_backbone_parameters(const CentralNet& net) {
  const std::size_t n = net.dag().n_states();
  std::size_t total = net.readin_proj(1).n_params() + net.readout_proj(n).n_params();
  for (std::size_t s = 1; s < n; ++s) total += net.edge_op(net.dag().edge_index(s, s + 1)).n_params();
  return total;
}

namespace detail {

inline std::size_t heads_parameters(const CentralNet& net) {
  std::size_t total = 0;
  for (std::size_t k = 0; k < net.n_tasks(); ++k) total += net.head(k).n_params();
  return total;
}

inline ParameterCount finish_count(const CentralNet& net, std::size_t backbone) {
  ParameterCount c;
  c.backbone = backbone;
  c.heads = heads_parameters(net);
  c.raw = c.backbone + c.heads;
  c.reference = chain_backbone_parameters(net);
  c.ratio = static_cast<double>(c.backbone) / static_cast<double>(c.reference);
  return c;
}

}  // namespace detail

/// Parameters used by the union of all tasks' discrete sub-networks.
///
/// Shared edges and projections count once. The ratio compares backbone
/// parameters to one full chain backbone; heads are reported in `raw` but kept
/// out of the ratio since every method carries the same heads.
inline ParameterCount count_parameters(const CentralNet& net, const std::vector<GateSet>& gates) {
  const std::size_t n = net.dag().n_states();
  std::vector<std::uint8_t> edge_used(net.dag().n_edges(), 0), in_used(n, 0), out_used(n, 0);
  for (const GateSet& g : gates) {
    if (g.mode != GateMode::Discrete) throw ArgumentError("count_parameters: all gates must be discrete");
    for (std::size_t e = 0; e < edge_used.size(); ++e) edge_used[e] |= g.edge_mask[e];
    for (std::size_t s = 0; s < n; ++s) {
      in_used[s] |= g.readin_mask[s];
      out_used[s] |= g.readout_mask[s];
    }
  }
  std::size_t backbone = 0;
  for (std::size_t e = 0; e < edge_used.size(); ++e)
    if (edge_used[e]) backbone += net.edge_op(e).n_params();
  for (std::size_t s = 1; s <= n; ++s) {
    if (in_used[s - 1]) backbone += net.readin_proj(s).n_params();
    if (out_used[s - 1]) backbone += net.readout_proj(s).n_params();
  }
  return detail::finish_count(net, backbone);
}

/// Parameters of the whole searchable network (every edge and projection).
inline ParameterCount search_space_parameters(const CentralNet& net) {
  std::size_t backbone = 0;
  for (std::size_t e = 0; e < net.dag().n_edges(); ++e) backbone += net.edge_op(e).n_params();
  for (std::size_t s = 1; s <= net.dag().n_states(); ++s)
    backbone += net.readin_proj(s).n_params() + net.readout_proj(s).n_params();
  return detail::finish_count(net, backbone);
}

}  // namespace dmtl
