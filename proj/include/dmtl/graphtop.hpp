#pragma once

// Flow-restricted DAG over hidden states v_1..v_N and the topology measures
// used to describe task sub-networks.
//
// State indices are 1-based. Index 0 is the virtual source (the input state)
// and index N+1 the virtual sink (read-out aggregate); edges only ever connect
// real states, while read-in / read-out flags attach states to source / sink.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dmtl/error.hpp"

namespace dmtl {

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  auto operator<=>(const Edge&) const = default;
};

class RestrictedDag {
 public:
  RestrictedDag() = default;

  /// Builds the edge set {(i,j) : i < j, j - i <= flow_constant}.
  RestrictedDag(std::size_t n_states, std::size_t flow_constant) : n_states_(n_states), flow_constant_(flow_constant) {
    if (n_states < 2) throw ArgumentError("restricted dag: need at least 2 states, got " + std::to_string(n_states));
    if (flow_constant < 1 || flow_constant > n_states - 1) {
      throw ArgumentError("restricted dag: flow constant " + std::to_string(flow_constant) + " outside [1, " +
                          std::to_string(n_states - 1) + "]");
    }
    for (std::size_t i = 1; i <= n_states; ++i)
      for (std::size_t j = i + 1; j <= std::min(n_states, i + flow_constant); ++j) edges_.push_back({i, j});
    index_.assign((n_states + 1) * (n_states + 1), npos);
    for (std::size_t e = 0; e < edges_.size(); ++e) index_[edges_[e].from * (n_states_ + 1) + edges_[e].to] = e;
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::size_t n_states() const noexcept { return n_states_; }
  std::size_t flow_constant() const noexcept { return flow_constant_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::size_t n_edges() const noexcept { return edges_.size(); }
  const Edge& edge(std::size_t e) const { return edges_.at(e); }

  /// Position of (i,j) in edges(), or npos when the pair is not an edge.
  std::size_t edge_index(std::size_t from, std::size_t to) const {
    if (from > n_states_ || to > n_states_) return npos;
    return index_[from * (n_states_ + 1) + to];
  }

  /// Edge ids entering / leaving a state, in ascending order.
  std::vector<std::size_t> in_edges(std::size_t state) const {
    std::vector<std::size_t> out;
    for (std::size_t e = 0; e < edges_.size(); ++e)
      if (edges_[e].to == state) out.push_back(e);
    return out;
  }
  std::vector<std::size_t> out_edges(std::size_t state) const {
    std::vector<std::size_t> out;
    for (std::size_t e = 0; e < edges_.size(); ++e)
      if (edges_[e].from == state) out.push_back(e);
    return out;
  }

  bool operator==(const RestrictedDag& o) const {
    return n_states_ == o.n_states_ && flow_constant_ == o.flow_constant_;
  }

 private:
  std::size_t n_states_ = 0;
  std::size_t flow_constant_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> index_;
};

/// Closed-form edge count of the restricted DAG.
constexpr std::size_t restricted_edge_count(std::size_t n_states, std::size_t flow_constant) {
  return flow_constant * n_states - flow_constant * (flow_constant + 1) / 2;
}

/// A task's selection of edges and read-in / read-out attachments on a parent DAG.
struct SubGraph {
  RestrictedDag parent;
  std::vector<std::uint8_t> active_edges;    // one flag per parent edge
  std::vector<std::uint8_t> active_readin;   // index s-1 for state s
  std::vector<std::uint8_t> active_readout;  // index s-1 for state s

  SubGraph() = default;
  explicit SubGraph(RestrictedDag dag, bool all_active = false)
      : parent(std::move(dag)),
        active_edges(parent.n_edges(), all_active ? 1 : 0),
        active_readin(parent.n_states(), all_active ? 1 : 0),
        active_readout(parent.n_states(), all_active ? 1 : 0) {}

  std::size_t n_active_edges() const {
    return static_cast<std::size_t>(std::count(active_edges.begin(), active_edges.end(), std::uint8_t{1}));
  }

  void set_edge(std::size_t from, std::size_t to, bool on) {
    const auto e = parent.edge_index(from, to);
    if (e == RestrictedDag::npos) {
      throw ArgumentError("subgraph: (" + std::to_string(from) + "," + std::to_string(to) + ") is not a DAG edge");
    }
    active_edges[e] = on ? 1 : 0;
  }
};

/// Sub-graph with only the chain v_1 -> v_2 -> ... -> v_N, read-in at v_1 and read-out at v_N.
inline SubGraph chain_subgraph(const RestrictedDag& dag) {
  SubGraph g(dag);
  for (std::size_t s = 1; s < dag.n_states(); ++s) g.set_edge(s, s + 1, true);
  g.active_readin[0] = 1;
  g.active_readout[dag.n_states() - 1] = 1;
  return g;
}

struct TopologyReport {
  std::size_t depth = 0;
  std::size_t width = 0;
  double sparsity = 0.0;
  bool operator==(const TopologyReport&) const = default;
};

/// Longest edge-count path over active edges (DP in topological order).
inline std::size_t depth(const SubGraph& g) {
  if (g.n_active_edges() == 0) throw ArgumentError("depth: sub-graph has no active edges");
  const std::size_t n = g.parent.n_states();
  std::vector<std::size_t> longest(n + 1, 0);  // longest path ending at each state
  std::size_t best = 0;
  // Parent edges are sorted by (from, to), so every edge into `from` was relaxed earlier.
  for (std::size_t e = 0; e < g.parent.n_edges(); ++e) {
    if (!g.active_edges[e]) continue;
    const Edge& ed = g.parent.edge(e);
    longest[ed.to] = std::max(longest[ed.to], longest[ed.from] + 1);
    best = std::max(best, longest[ed.to]);
  }
  return best;
}

inline std::size_t width(const SubGraph& g) {
  if (g.n_active_edges() == 0) throw ArgumentError("width: sub-graph has no active edges");
  std::vector<std::size_t> out(g.parent.n_states() + 1, 0);
  for (std::size_t e = 0; e < g.parent.n_edges(); ++e)
    if (g.active_edges[e]) ++out[g.parent.edge(e).from];
  return *std::max_element(out.begin(), out.end());
}

inline double sparsity(const SubGraph& g) {
  if (g.parent.n_edges() == 0) throw ArgumentError("sparsity: parent graph has no edges");
  return static_cast<double>(g.n_active_edges()) / static_cast<double>(g.parent.n_edges());
}

inline TopologyReport topology(const SubGraph& g) { return {depth(g), width(g), sparsity(g)}; }

/// Source / sink endpoints: 0 is the virtual source, N+1 the virtual sink.
inline std::size_t virtual_source() { return 0; }
inline std::size_t virtual_sink(const RestrictedDag& dag) { return dag.n_states() + 1; }

/// True iff a directed path from `source` to `sink` exists over active edges
/// (with read-in / read-out flags wiring the virtual endpoints).
inline bool reachable(const SubGraph& g, std::size_t source, std::size_t sink) {
  const std::size_t n = g.parent.n_states();
  if (source > n + 1 || sink > n + 1) throw ArgumentError("reachable: endpoint out of range");
  std::vector<std::vector<std::size_t>> adj(n + 2);
  for (std::size_t s = 1; s <= n; ++s) {
    if (g.active_readin[s - 1]) adj[0].push_back(s);
    if (g.active_readout[s - 1]) adj[s].push_back(n + 1);
  }
  for (std::size_t e = 0; e < g.parent.n_edges(); ++e)
    if (g.active_edges[e]) adj[g.parent.edge(e).from].push_back(g.parent.edge(e).to);

  std::vector<std::uint8_t> seen(n + 2, 0);
  std::vector<std::size_t> stack{source};
  seen[source] = 1;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    if (u == sink) return true;
    for (std::size_t v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        stack.push_back(v);
      }
  }
  return false;
}

inline bool reachable(const SubGraph& g) { return reachable(g, virtual_source(), virtual_sink(g.parent)); }

/// Drops every edge and read-in / read-out flag that is not on some source -> sink path.
inline SubGraph trim_to_flow(const SubGraph& g) {
  const std::size_t n = g.parent.n_states();
  // forward reachability from source
  std::vector<std::uint8_t> from_src(n + 2, 0), to_sink(n + 2, 0);
  from_src[0] = 1;
  for (std::size_t s = 1; s <= n; ++s)
    if (g.active_readin[s - 1]) from_src[s] = 1;
  for (std::size_t e = 0; e < g.parent.n_edges(); ++e)
    if (g.active_edges[e] && from_src[g.parent.edge(e).from]) from_src[g.parent.edge(e).to] = 1;
  // backward reachability to sink
  for (std::size_t s = 1; s <= n; ++s)
    if (g.active_readout[s - 1]) to_sink[s] = 1;
  for (std::size_t e = g.parent.n_edges(); e-- > 0;)
    if (g.active_edges[e] && to_sink[g.parent.edge(e).to]) to_sink[g.parent.edge(e).from] = 1;

  SubGraph out = g;
  for (std::size_t e = 0; e < g.parent.n_edges(); ++e) {
    const Edge& ed = g.parent.edge(e);
    out.active_edges[e] = g.active_edges[e] && from_src[ed.from] && to_sink[ed.to];
  }
  for (std::size_t s = 1; s <= n; ++s) {
    out.active_readin[s - 1] = g.active_readin[s - 1] && to_sink[s];
    out.active_readout[s - 1] = g.active_readout[s - 1] && from_src[s];
  }
  return out;
}

struct SubgraphExtrema {
  std::size_t min_depth = 0;
  std::size_t max_width = 0;
  bool exhaustive = false;  // true when every edge subset was visited
};

namespace detail {

inline bool connects_first_to_last(const RestrictedDag& dag, const std::vector<std::uint8_t>& active) {
  std::vector<std::uint8_t> reach(dag.n_states() + 1, 0);
  reach[1] = 1;
  for (std::size_t e = 0; e < dag.n_edges(); ++e)
    if (active[e] && reach[dag.edge(e).from]) reach[dag.edge(e).to] = 1;
  return reach[dag.n_states()] != 0;
}

inline void enumerate_paths(const RestrictedDag& dag, std::size_t at, std::size_t len, std::size_t& best) {
  if (at == dag.n_states()) {
    best = std::min(best, len);
    return;
  }
  for (std::size_t e : dag.out_edges(at)) enumerate_paths(dag, dag.edge(e).to, len + 1, best);
}

}  // namespace detail

/// Largest edge count for which enumerate_subgraph_extrema visits every edge subset.
inline constexpr std::size_t kExhaustiveEdgeLimit = 24;

/// Minimum depth and maximum width over all sub-graphs of the restricted DAG that
/// connect v_1 to v_N (read-in / read-out attachments excluded).
///
/// Up to kExhaustiveEdgeLimit edges every subset is visited. Beyond that the
/// search uses that depth and width are both monotone under edge inclusion:
/// minimum depth is attained by some simple v_1 -> v_N path (all paths are
/// enumerated), and maximum width is found by trying every out-edge subset of
/// every state with the remaining edges left on.
inline SubgraphExtrema enumerate_subgraph_extrema(std::size_t n_states, std::size_t flow_constant) {
  if (n_states > 12) throw ArgumentError("enumerate_subgraph_extrema: n_states " + std::to_string(n_states) + " > 12");
  const RestrictedDag dag(n_states, flow_constant);
  const std::size_t m = dag.n_edges();
  SubgraphExtrema out;
  out.min_depth = static_cast<std::size_t>(-1);

  if (m <= kExhaustiveEdgeLimit) {
    out.exhaustive = true;
    const auto& edges = dag.edges();
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << m); ++mask) {
      std::array<std::uint8_t, 13> reach{};
      std::array<std::size_t, 13> longest{};
      std::array<std::size_t, 13> outdeg{};
      reach[1] = 1;
      std::size_t d = 0;
      for (std::size_t e = 0; e < m; ++e) {
        if (!((mask >> e) & 1U)) continue;
        const Edge& ed = edges[e];
        reach[ed.to] |= reach[ed.from];
        longest[ed.to] = std::max(longest[ed.to], longest[ed.from] + 1);
        d = std::max(d, longest[ed.to]);
        ++outdeg[ed.from];
      }
      if (!reach[n_states]) continue;
      out.min_depth = std::min(out.min_depth, d);
      out.max_width = std::max(out.max_width, *std::max_element(outdeg.begin(), outdeg.end()));
    }
    return out;
  }

  detail::enumerate_paths(dag, 1, 0, out.min_depth);
  SubGraph g(dag, true);
  for (std::size_t s = 1; s < n_states; ++s) {
    const auto outs = dag.out_edges(s);
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << outs.size()); ++mask) {
      std::fill(g.active_edges.begin(), g.active_edges.end(), 1);
      std::size_t degree = 0;
      for (std::size_t k = 0; k < outs.size(); ++k) {
        g.active_edges[outs[k]] = (mask >> k) & 1U;
        degree += (mask >> k) & 1U;
      }
      if (detail::connects_first_to_last(dag, g.active_edges)) out.max_width = std::max(out.max_width, degree);
    }
  }
  return out;
}

/// Graphviz digraph of a sub-graph. Read-in / read-out appear as edges from
/// node `in` and into node `out`; hidden edges follow in lexicographic order.
inline std::string export_dot(const SubGraph& g, const std::string& task_label) {
  const std::size_t n = g.parent.n_states();
  std::ostringstream os;
  os << "digraph \"" << task_label << "\" {\n";
  os << "  rankdir=LR;\n";
  os << "  in [shape=box, label=\"read-in\"];\n";
  for (std::size_t s = 1; s <= n; ++s) os << "  v" << s << ";\n";
  os << "  out [shape=box, label=\"read-out\"];\n";
  for (std::size_t s = 1; s <= n; ++s)
    if (g.active_readin[s - 1]) os << "  in -> v" << s << ";\n";
  for (std::size_t e = 0; e < g.parent.n_edges(); ++e)
    if (g.active_edges[e]) os << "  v" << g.parent.edge(e).from << " -> v" << g.parent.edge(e).to << ";\n";
  for (std::size_t s = 1; s <= n; ++s)
    if (g.active_readout[s - 1]) os << "  v" << s << " -> out;\n";
  os << "}\n";
  return os.str();
}

}  // namespace dmtl
