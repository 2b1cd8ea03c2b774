#pragma once

// Straight-line re-implementation of flow-based reduction used as a test
// oracle. Dense (N+2)x(N+2) matrix, recursive DFS, no shared code with the
// library beyond the gate containers.

#include <cstddef>
#include <utility>
#include <vector>

namespace dmtl::testing {

struct NaiveResult {
  std::vector<std::pair<std::size_t, std::size_t>> removed;
  std::vector<int> readin, readout;      // per state, index s-1
  std::vector<std::vector<int>> hidden;  // hidden[i][j], 1-based states
  std::size_t a = 0, b = 0;
};

inline bool naive_dfs(const std::vector<std::vector<double>>& psi, std::size_t u, std::vector<int>& seen) {
  if (u == psi.size() - 1) return true;
  seen[u] = 1;
  for (std::size_t v = 0; v < psi.size(); ++v)
    if (psi[u][v] != 0.0 && !seen[v] && naive_dfs(psi, v, seen)) return true;
  return false;
}

inline bool naive_reachable(const std::vector<std::vector<double>>& psi) {
  std::vector<int> seen(psi.size(), 0);
  return naive_dfs(psi, 0, seen);
}

/// gamma[i][j] for 1 <= i < j <= n holds the edge gate (0 where no edge).
inline NaiveResult naive_flow_reduce(std::size_t n, const std::vector<double>& A, const std::vector<double>& B,
                                     const std::vector<std::vector<double>>& gamma) {
  NaiveResult r;
  std::size_t a = 1, bb = 1;
  for (std::size_t s = 1; s <= n; ++s) {
    if (A[s - 1] > A[a - 1]) a = s;
    if (B[s - 1] > B[bb - 1]) bb = s;
  }
  std::size_t b = bb < a + 1 ? a + 1 : bb;
  if (b > n) b = n;
  r.a = a;
  r.b = b;

  std::vector<std::vector<double>> psi(n + 2, std::vector<double>(n + 2, 0.0));
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= n; ++j)
      if (i >= a && j <= b) psi[i][j] = gamma[i][j];
  for (std::size_t s = a; s <= b; ++s) {
    psi[0][s] = A[s - 1];
    psi[s][n + 1] = B[s - 1];
  }

  const std::size_t d = n + 2;
  while (true) {
    double best = 0.0;
    std::size_t bi = d, bj = d;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        if (psi[i][j] == 0.0) continue;
        double in_i = 0.0, out_i = 0.0, cnt_in_i = 0.0;
        double in_j = 0.0, out_j = 0.0, cnt_out_j = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          in_i += psi[k][i];
          out_i += psi[i][k];
          if (psi[k][i] != 0.0) cnt_in_i += 1.0;
          in_j += psi[k][j];
          out_j += psi[j][k];
          if (psi[j][k] != 0.0) cnt_out_j += 1.0;
        }
        double first = 0.0, second = 0.0;
        if (cnt_in_i != 0.0 && out_i != 0.0) first = (1.0 / cnt_in_i) * (in_i / out_i);
        if (cnt_out_j != 0.0 && in_j != 0.0) second = (1.0 / cnt_out_j) * (out_j / in_j);
        const double score = psi[i][j] * (first + second);
        if (bi == d || score < best) {
          best = score;
          bi = i;
          bj = j;
        }
      }
    }
    const double saved = psi[bi][bj];
    psi[bi][bj] = 0.0;
    if (!naive_reachable(psi)) {
      psi[bi][bj] = saved;
      break;
    }
    r.removed.emplace_back(bi, bj);
  }

  r.readin.assign(n, 0);
  r.readout.assign(n, 0);
  r.hidden.assign(n + 1, std::vector<int>(n + 1, 0));
  for (std::size_t s = 1; s <= n; ++s) {
    r.readin[s - 1] = psi[0][s] > 0.0;
    r.readout[s - 1] = psi[s][n + 1] > 0.0;
  }
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= n; ++j) r.hidden[i][j] = psi[i][j] > 0.0;
  return r;
}

}  // namespace dmtl::testing
