#pragma once

// Turning continuous gates into a binary sub-network.
//
// All reducers work on the augmented flow matrix Psi of size (N+2)x(N+2):
// row/column 0 is the source (read-in), rows/columns 1..N the hidden states and
// row/column N+1 the sink (read-out). Indices are the 1-based state numbers
// used everywhere else, so Psi(i, j) for 1 <= i < j <= N is the gate of edge
// (i, j).
//
// Anchors: a = first argmax of the read-in gates, b = max(a + 1, first argmax of
// the read-out gates), clamped to N. Only the window of states [a, b] keeps
// read-in / read-out connections; edges leaving states before a and edges
// entering states after b are zeroed.
//
// Flow-based reduction repeatedly zeroes the nonzero entry with the lowest flow
// score (ties broken by the lexicographically smallest (i, j)) and stops at the
// first removal that disconnects source from sink, returning the last
// connected matrix binarized.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dmtl/autodiff.hpp"
#include "dmtl/centralnet.hpp"
#include "dmtl/error.hpp"
#include "dmtl/graphtop.hpp"

namespace dmtl {

/// Post-sigmoid gate values of one task.
struct GateValues {
  std::vector<double> readin;   // per state
  std::vector<double> readout;  // per state
  std::vector<double> edges;    // per DAG edge
};

inline GateValues gate_values(const GateSet& gates) {
  auto sig = [](const Tensor& t) {
    std::vector<double> out(t.data());
    for (double& v : out) v = ops::detail::sigmoid(v);
    return out;
  };
  return {sig(gates.readin.value), sig(gates.readout.value), sig(gates.edges.value)};
}

class FlowMatrix {
 public:
  FlowMatrix() = default;
  explicit FlowMatrix(std::size_t n_states) : n_(n_states), psi_((n_states + 2) * (n_states + 2), 0.0) {}

  std::size_t n_states() const noexcept { return n_; }
  std::size_t dim() const noexcept { return n_ + 2; }
  std::size_t sink() const noexcept { return n_ + 1; }
  double& at(std::size_t i, std::size_t j) { return psi_[i * dim() + j]; }
  double at(std::size_t i, std::size_t j) const { return psi_[i * dim() + j]; }

  std::size_t anchor_in = 0;   // a, 1-based
  std::size_t anchor_out = 0;  // b, 1-based

  std::size_t nonzero_count() const {
    return static_cast<std::size_t>(std::count_if(psi_.begin(), psi_.end(), [](double v) { return v != 0.0; }));
  }

  /// Nonzero entries among hidden edges (rows and columns 1..N).
  std::size_t hidden_count() const {
    std::size_t c = 0;
    for (std::size_t i = 1; i <= n_; ++i)
      for (std::size_t j = 1; j <= n_; ++j) c += at(i, j) != 0.0;
    return c;
  }

  /// Depth-first search from source to sink over nonzero entries.
  bool reachable() const {
    std::vector<std::uint8_t> seen(dim(), 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      if (u == sink()) return true;
      for (std::size_t v = dim(); v-- > 0;)
        if (at(u, v) != 0.0 && !seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
    }
    return false;
  }

  bool operator==(const FlowMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> psi_;
};

namespace detail {

inline std::size_t first_argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

/// Row / column masses and nonzero counts of the current matrix.
struct FlowStats {
  std::vector<double> out_mass, in_mass;
  std::vector<std::size_t> out_count, in_count;

  explicit FlowStats(const FlowMatrix& m)
      : out_mass(m.dim(), 0.0), in_mass(m.dim(), 0.0), out_count(m.dim(), 0), in_count(m.dim(), 0) {
    for (std::size_t i = 0; i < m.dim(); ++i)
      for (std::size_t k = 0; k < m.dim(); ++k) {
        out_mass[i] += m.at(i, k);
        out_count[i] += m.at(i, k) != 0.0;
      }
    for (std::size_t j = 0; j < m.dim(); ++j)
      for (std::size_t k = 0; k < m.dim(); ++k) {
        in_mass[j] += m.at(k, j);
        in_count[j] += m.at(k, j) != 0.0;
      }
  }

  double score(const FlowMatrix& m, std::size_t i, std::size_t j) const {
    const double w = m.at(i, j);
    const double upstream =
        (in_count[i] > 0 && out_mass[i] > 0.0) ? (1.0 / static_cast<double>(in_count[i])) * (in_mass[i] / out_mass[i])
                                               : 0.0;
    const double downstream = (out_count[j] > 0 && in_mass[j] > 0.0)
                                  ? (1.0 / static_cast<double>(out_count[j])) * (out_mass[j] / in_mass[j])
                                  : 0.0;
    return w * (upstream + downstream);
  }
};

}  // namespace detail

/// Merges edge, read-in and read-out gate values into the anchored flow matrix.
inline FlowMatrix build_flow_matrix(const RestrictedDag& dag, const GateValues& values) {
  const std::size_t n = dag.n_states();
  if (n < 2) throw ArgumentError("build_flow_matrix: need at least 2 states");
  if (values.readin.size() != n || values.readout.size() != n || values.edges.size() != dag.n_edges()) {
    throw ShapeError("build_flow_matrix: gate values do not match the DAG");
  }
  FlowMatrix m(n);
  const std::size_t a = detail::first_argmax(values.readin) + 1;
  const std::size_t b = std::min(n, std::max(a + 1, detail::first_argmax(values.readout) + 1));
  m.anchor_in = a;
  m.anchor_out = b;
  for (std::size_t e = 0; e < dag.n_edges(); ++e) {
    const Edge& ed = dag.edge(e);
    if (ed.from < a || ed.to > b) continue;
    m.at(ed.from, ed.to) = values.edges[e];
  }
  for (std::size_t s = a; s <= b; ++s) {
    m.at(0, s) = values.readin[s - 1];
    m.at(s, n + 1) = values.readout[s - 1];
  }
  return m;
}

/// Information-flow score of entry (i, j):
///   psi_ij * ( (1/In_i) * in_mass_i / out_mass_i + (1/Out_j) * out_mass_j / in_mass_j )
/// In / Out count nonzero entries; a term with a zero count or zero mass contributes 0.
inline double flow_score(const FlowMatrix& m, std::size_t i, std::size_t j) {
  return detail::FlowStats(m).score(m, i, j);
}

/// Binarizes a flow matrix: every positive entry becomes an active edge / attachment.
inline SubGraph discretize(const FlowMatrix& m, const RestrictedDag& dag) {
  SubGraph g(dag);
  const std::size_t n = dag.n_states();
  for (std::size_t e = 0; e < dag.n_edges(); ++e) g.active_edges[e] = m.at(dag.edge(e).from, dag.edge(e).to) > 0.0;
  for (std::size_t s = 1; s <= n; ++s) {
    g.active_readin[s - 1] = m.at(0, s) > 0.0;
    g.active_readout[s - 1] = m.at(s, n + 1) > 0.0;
  }
  return g;
}

struct Removal {
  std::size_t from = 0;  // augmented index, 0 = source
  std::size_t to = 0;    // augmented index, N+1 = sink
  double score = 0.0;
  std::size_t active_after = 0;  // nonzero entries left in the flow matrix
  bool operator==(const Removal&) const = default;
};

enum class Termination {
  Disconnected,     // next removal would disconnect source from sink
  SparsityReached,  // hidden-edge sparsity reached the target
  TargetUnreachable // every remaining hidden edge is a bridge
};

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::Disconnected:
      return "disconnected";
    case Termination::SparsityReached:
      return "sparsity_reached";
    case Termination::TargetUnreachable:
      return "target_unreachable";
  }
  return "unknown";
}

struct ReductionTrace {
  std::string method;
  std::vector<Removal> removed;
  std::optional<Removal> rejected;  // the removal that would have disconnected the graph
  SubGraph result;
  Termination termination = Termination::Disconnected;
  bool target_unreachable = false;
  double final_sparsity = 0.0;
  std::size_t anchor_in = 0;
  std::size_t anchor_out = 0;
};

namespace detail {

inline double hidden_sparsity(const FlowMatrix& m, const RestrictedDag& dag) {
  return static_cast<double>(m.hidden_count()) / static_cast<double>(dag.n_edges());
}

inline ReductionTrace finish(std::string method, const FlowMatrix& m, const RestrictedDag& dag,
                             std::vector<Removal> removed, Termination why) {
  ReductionTrace t;
  t.method = std::move(method);
  t.removed = std::move(removed);
  t.result = discretize(m, dag);
  t.termination = why;
  t.target_unreachable = why == Termination::TargetUnreachable;
  t.final_sparsity = sparsity(t.result);
  t.anchor_in = m.anchor_in;
  t.anchor_out = m.anchor_out;
  return t;
}

inline ReductionTrace flow_reduce_impl(const RestrictedDag& dag, const GateValues& values,
                                       std::optional<double> target) {
  FlowMatrix m = build_flow_matrix(dag, values);
  if (!m.reachable()) throw ArgumentError("flow_based_reduce: source cannot reach sink before any removal");
  std::vector<Removal> removed;
  const std::string method = target ? "flow_sparsity" : "flow";
  while (true) {
    if (target && hidden_sparsity(m, dag) <= *target) {
      return finish(method, m, dag, std::move(removed), Termination::SparsityReached);
    }
    const FlowStats stats(m);
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < m.dim(); ++i)
      for (std::size_t j = 0; j < m.dim(); ++j) {
        if (m.at(i, j) == 0.0) continue;
        const double s = stats.score(m, i, j);
        if (s < best) {
          best = s;
          bi = i;
          bj = j;
        }
      }
    const double saved = m.at(bi, bj);
    m.at(bi, bj) = 0.0;
    if (m.reachable()) {
      removed.push_back({bi, bj, best, m.nonzero_count()});
      continue;
    }
    m.at(bi, bj) = saved;
    ReductionTrace t = finish(method, m, dag, std::move(removed), Termination::Disconnected);
    t.rejected = Removal{bi, bj, best, m.nonzero_count() - 1};
    return t;
  }
}

/// Removes hidden edges in the given order, skipping bridges, until the target is met.
inline ReductionTrace ordered_reduce(std::string method, const RestrictedDag& dag, const GateValues& values,
                                     double target, const std::vector<std::pair<std::size_t, std::size_t>>& order) {
  FlowMatrix m = build_flow_matrix(dag, values);
  if (!m.reachable()) throw ArgumentError(method + "_reduce: source cannot reach sink before any removal");
  std::vector<Removal> removed;
  for (const auto& [i, j] : order) {
    if (hidden_sparsity(m, dag) <= target) break;
    const double saved = m.at(i, j);
    m.at(i, j) = 0.0;
    if (!m.reachable()) {
      m.at(i, j) = saved;
      continue;
    }
    removed.push_back({i, j, saved, m.nonzero_count()});
  }
  const Termination why =
      hidden_sparsity(m, dag) <= target ? Termination::SparsityReached : Termination::TargetUnreachable;
  return finish(std::move(method), m, dag, std::move(removed), why);
}

inline std::vector<std::pair<std::size_t, std::size_t>> hidden_entries(const FlowMatrix& m) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 1; i <= m.n_states(); ++i)
    for (std::size_t j = 1; j <= m.n_states(); ++j)
      if (m.at(i, j) != 0.0) out.emplace_back(i, j);
  return out;
}

inline void check_target(double target) {
  if (!(target > 0.0 && target <= 1.0)) throw ArgumentError("target sparsity must lie in (0, 1]");
}

}  // namespace detail

/// Flow-based reduction run until the next removal would disconnect the graph.
inline ReductionTrace flow_based_reduce(const RestrictedDag& dag, const GateValues& values) {
  return detail::flow_reduce_impl(dag, values, std::nullopt);
}

/// Flow-based reduction that additionally stops once hidden-edge sparsity <= target.
inline ReductionTrace reduce_to_sparsity(const RestrictedDag& dag, const GateValues& values, double target) {
  detail::check_target(target);
  return detail::flow_reduce_impl(dag, values, target);
}

/// Removes hidden edges in ascending gate value (ties lexicographic) until sparsity <= target.
inline ReductionTrace threshold_reduce(const RestrictedDag& dag, const GateValues& values, double target) {
  detail::check_target(target);
  const FlowMatrix m = build_flow_matrix(dag, values);
  auto order = detail::hidden_entries(m);
  std::stable_sort(order.begin(), order.end(),
                   [&m](const auto& x, const auto& y) { return m.at(x.first, x.second) < m.at(y.first, y.second); });
  return detail::ordered_reduce("threshold", dag, values, target, order);
}

/// Removes hidden edges in a seeded uniformly random order until sparsity <= target.
inline ReductionTrace random_reduce(const RestrictedDag& dag, const GateValues& values, double target,
                                    std::uint64_t seed) {
  detail::check_target(target);
  auto order = detail::hidden_entries(build_flow_matrix(dag, values));
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return detail::ordered_reduce("random", dag, values, target, order);
}

}  // namespace dmtl
