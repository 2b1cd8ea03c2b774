#pragma once

// The four CLI verbs as library functions returning process exit codes.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dmtl/config.hpp"
#include "dmtl/error.hpp"
#include "dmtl/experiment.hpp"
#include "dmtl/serialize.hpp"

namespace dmtl {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
};

namespace detail {

inline RunConfig resolve_config(const CommandOptions& o) {
  RunConfig c = load_config(o.config);
  if (o.out) c.output_dir = o.out->string();
  if (o.seed) c.plan.seed = *o.seed;
  return c;
}

/// Maps exceptions onto exit codes.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

/// A net with the report's layout, used to name tensors when writing checkpoints.
inline CentralNet layout_net(const ExperimentReport& r, std::size_t input_dim) {
  const TrainPlan& p = r.plan;
  return CentralNet(RestrictedDag(p.n_states, p.flow_constant),
                    NetShape::uniform(input_dim, p.n_states, p.state_dim, p.latent_dim), r.tasks, 0);
}

inline void write_run(const std::filesystem::path& dir, const ExperimentReport& r, std::size_t input_dim) {
  std::filesystem::create_directories(dir);
  write_json(dir / "report.json", report_to_json(r));
  write_text(dir / "metrics.csv", metrics_csv(r.metrics_log, r.tasks));
  for (std::size_t k = 0; k < r.tasks.size(); ++k) {
    const std::string& id = r.tasks[k].id;
    write_text(dir / (id + ".dot"), export_dot(r.task_reports[k].mask, id));
    write_json(dir / ("trace_" + id + ".json"), trace_to_json(r.traces[k], id));
  }
  const CentralNet net = layout_net(r, input_dim);
  for (const StageCheckpoint& c : r.checkpoints)
    write_json(dir / "checkpoints" / (c.stage + ".json"), checkpoint_to_json(net, c));
}

inline ExperimentReport run_configured(const RunConfig& c) {
  const std::uint64_t seed = c.plan.seed;
  return run_experiment(c.plan, make_dataset(c), true, make_reducer(c.reduction, c.target_sparsity, seed));
}

/// Runs `n` independent jobs on up to `jobs` threads; each job owns its slot.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

inline std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

}  // namespace detail

// ---- train -----------------------------------------------------------------

inline int cmd_train(const CommandOptions& o, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const RunConfig c = detail::resolve_config(o);
    const ExperimentReport r = detail::run_configured(c);
    detail::write_run(c.output_dir, r, c.input_dim);
    out << "train: " << r.tasks.size() << " tasks, |E|=" << r.n_edges << ", wrote " << c.output_dir << "\n";
    for (const TaskReport& t : r.task_reports)
      out << "  " << t.id << ": edges=" << t.mask.n_active_edges() << " delta=" << detail::fixed(t.delta, 2) << "\n";
    if (r.delta) out << "  mean delta=" << detail::fixed(r.delta->mean, 2) << "\n";
    return kExitOk;
  });
}

// ---- sweep -----------------------------------------------------------------

struct SweepCell {
  std::size_t flow_constant = 0;
  std::uint64_t seed = 0;
  std::optional<ExperimentReport> report;
  std::string error;
};

/// Unique (M, seed) pairs in first-seen order.
inline std::vector<std::pair<std::size_t, std::uint64_t>> sweep_cells(const RunConfig& c) {
  std::vector<std::pair<std::size_t, std::uint64_t>> cells;
  for (std::size_t m : c.sweep_flow_constants)
    for (std::uint64_t s : c.sweep_seeds)
      if (std::find(cells.begin(), cells.end(), std::pair{m, s}) == cells.end()) cells.emplace_back(m, s);
  return cells;
}

inline std::string sweep_csv(const std::vector<SweepCell>& cells, const std::vector<TaskSpec>& tasks) {
  std::vector<std::string> cols{"M", "seed", "status", "delta_T", "search_param_ratio", "param_ratio"};
  for (const TaskSpec& t : tasks)
    for (const char* m : {"_D", "_W", "_S"}) cols.push_back(t.id + m);
  CsvWriter w("sweep", 1, cols);
  for (const SweepCell& cell : cells) {
    std::vector<std::string> row{std::to_string(cell.flow_constant), std::to_string(cell.seed)};
    if (!cell.report) {
      row.push_back("failed");
      row.resize(cols.size());
      w.row(row);
      continue;
    }
    const ExperimentReport& r = *cell.report;
    row.push_back("ok");
    row.push_back(r.delta ? csv_number(r.delta->mean) : "");
    row.push_back(csv_number(r.search_params.ratio));
    row.push_back(csv_number(r.final_params.ratio));
    for (const TaskReport& t : r.task_reports) {
      const bool has = t.mask.n_active_edges() > 0;
      row.push_back(has ? std::to_string(t.topology.depth) : "0");
      row.push_back(has ? std::to_string(t.topology.width) : "0");
      row.push_back(csv_number(has ? t.topology.sparsity : 0.0));
    }
    w.row(row);
  }
  return w.str();
}

inline std::vector<SweepCell> run_sweep(const RunConfig& c, std::size_t jobs, const std::filesystem::path* out_dir,
                                        std::ostream& err) {
  std::vector<SweepCell> cells;
  for (const auto& [m, s] : sweep_cells(c)) cells.push_back({m, s, std::nullopt, {}});
  std::mutex err_mu;
  detail::parallel_for(cells.size(), jobs, [&](std::size_t i) {
    SweepCell& cell = cells[i];
    RunConfig cc = c;
    cc.plan.flow_constant = cell.flow_constant;
    cc.plan.seed = cell.seed;
    const std::string name = "M" + std::to_string(cell.flow_constant) + "_seed" + std::to_string(cell.seed);
    try {
      cell.report = detail::run_configured(cc);
      if (out_dir) detail::write_run(*out_dir / "cells" / name, *cell.report, cc.input_dim);
    } catch (const std::exception& e) {
      cell.error = e.what();
      std::lock_guard lock(err_mu);
      err << "sweep cell " << name << " failed: " << e.what() << "\n";
    }
  });
  return cells;
}

inline int cmd_sweep(const CommandOptions& o, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const RunConfig c = detail::resolve_config(o);
    if (c.sweep_flow_constants.empty()) throw ConfigError("config key 'sweep_flow_constants': must not be empty");
    if (c.sweep_seeds.empty()) throw ConfigError("config key 'sweep_seeds': must not be empty");
    const std::filesystem::path dir = c.output_dir;
    const auto cells = run_sweep(c, o.jobs, &dir, err);
    write_text(dir / "sweep.csv", sweep_csv(cells, task_specs(c)));
    const auto failed = std::count_if(cells.begin(), cells.end(), [](const SweepCell& s) { return !s.report; });
    out << "sweep: " << cells.size() << " cells, " << failed << " failed, wrote " << (dir / "sweep.csv").string() << "\n";
    return failed == static_cast<long>(cells.size()) ? kExitRuntime : kExitOk;
  });
}

// ---- compare-reducers ------------------------------------------------------

struct ReducerRow {
  std::uint64_t seed = 0;
  double tau = 0.0;
  std::string reducer;
  double sparsity = 0.0;     // mean final hidden-edge sparsity over tasks
  double degradation = 0.0;  // percent, positive = worse than the reference
  TaskMetrics metrics;
};

inline const std::vector<ReductionMode>& compared_reducers() {
  static const std::vector<ReductionMode> modes{ReductionMode::Sparsity, ReductionMode::Random, ReductionMode::Threshold};
  return modes;
}

inline std::string reducer_label(ReductionMode m) { return m == ReductionMode::Sparsity ? "flow" : to_string(m); }

/// One seed of the reducer comparison: a single search, then every reducer at
/// every sparsity, each fine-tuned from the warm-up rewind point. The
/// reference is the fine-tuned tau = 1.0 network, which no reducer prunes.
inline std::vector<ReducerRow> compare_reducers_for_seed(const RunConfig& c, std::uint64_t seed) {
  RunConfig cc = c;
  cc.plan.seed = seed;
  const SyntheticMtlDataset data = make_dataset(cc);
  Experiment exp(cc.plan, data);
  exp.warmup_stage();
  exp.search_stage();
  exp.finalize(make_reducer(ReductionMode::Sparsity, 1.0, seed));
  exp.finetune_stage();
  const TaskMetrics reference = exp.evaluate_val();

  std::vector<ReducerRow> rows;
  for (double tau : c.sparsity_grid) {
    for (ReductionMode mode : compared_reducers()) {
      const auto& traces = exp.refinalize(make_reducer(mode, tau, seed));
      double sparsity = 0.0;
      for (const ReductionTrace& t : traces) sparsity += t.final_sparsity;
      exp.finetune_stage();
      ReducerRow row{seed, tau, reducer_label(mode), sparsity / static_cast<double>(traces.size()), 0.0,
                     exp.evaluate_val()};
      row.degradation = 0.0 - relative_performance(row.metrics, reference, data.tasks).mean;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::string reducers_csv(const std::vector<ReducerRow>& rows) {
  CsvWriter w("reducers", 1, {"seed", "tau", "reducer", "sparsity", "degradation"});
  for (const ReducerRow& r : rows)
    w.row({std::to_string(r.seed), csv_number(r.tau), r.reducer, csv_number(r.sparsity), csv_number(r.degradation)});
  return w.str();
}

inline int cmd_compare_reducers(const CommandOptions& o, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const RunConfig c = detail::resolve_config(o);
    if (c.sparsity_grid.empty()) throw ConfigError("config key 'sparsity_grid': must not be empty");
    if (c.sweep_seeds.empty()) throw ConfigError("config key 'sweep_seeds': must not be empty");
    std::vector<std::vector<ReducerRow>> per_seed(c.sweep_seeds.size());
    detail::parallel_for(per_seed.size(), o.jobs,
                         [&](std::size_t i) { per_seed[i] = compare_reducers_for_seed(c, c.sweep_seeds[i]); });
    std::vector<ReducerRow> rows;
    for (auto& v : per_seed) rows.insert(rows.end(), v.begin(), v.end());
    const std::filesystem::path dir = c.output_dir;
    write_text(dir / "reducers.csv", reducers_csv(rows));
    out << "compare-reducers: " << rows.size() << " rows, wrote " << (dir / "reducers.csv").string() << "\n";
    return kExitOk;
  });
}

// ---- analyze ---------------------------------------------------------------

struct RunAnalysis {
  std::vector<std::string> tasks;
  std::vector<std::optional<TopologyReport>> topology;
  std::size_t n_states = 0;
  // overlay[i][j]: indices of the tasks using edge (i, j), 1-based states
  std::vector<std::vector<std::vector<std::size_t>>> overlay;
  std::vector<std::size_t> edge_counts;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> shared;  // task pair -> shared edges
};

inline RunAnalysis analyze_report(const Json& report) {
  detail::expect_format(report, "dmtl-report", kReportVersion);
  RunAnalysis a;
  a.n_states = report.at("plan").at("n_states").get<std::size_t>();
  a.overlay.assign(a.n_states + 1, std::vector<std::vector<std::size_t>>(a.n_states + 1));
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> edges;
  for (const auto& t : report.at("results")) {
    const std::size_t k = a.tasks.size();
    a.tasks.push_back(t.at("id").get<std::string>());
    const Json& topo = t.at("topology");
    if (topo.is_null()) a.topology.emplace_back();
    else a.topology.push_back(TopologyReport{topo.at("D").get<std::size_t>(), topo.at("W").get<std::size_t>(),
                                             topo.at("S").get<double>()});
    edges.emplace_back();
    for (const auto& e : t.at("mask").at("edges")) {
      const auto i = e.at(0).get<std::size_t>(), j = e.at(1).get<std::size_t>();
      if (i < 1 || j > a.n_states || i >= j) throw ArgumentError("report: edge out of range");
      a.overlay[i][j].push_back(k);
      edges.back().emplace_back(i, j);
    }
    a.edge_counts.push_back(edges.back().size());
  }
  for (std::size_t p = 0; p < a.tasks.size(); ++p)
    for (std::size_t q = p + 1; q < a.tasks.size(); ++q) {
      std::size_t n = 0;
      for (const auto& e : edges[p]) n += std::count(edges[q].begin(), edges[q].end(), e);
      a.shared[{p, q}] = n;
    }
  return a;
}

inline std::string task_letter(std::size_t k) { return std::string(1, static_cast<char>('A' + k % 26)); }

inline void print_analysis(const RunAnalysis& a, std::ostream& out) {
  out << "task D W S\n";
  for (std::size_t k = 0; k < a.tasks.size(); ++k) {
    out << a.tasks[k];
    if (a.topology[k]) out << " " << a.topology[k]->depth << " " << a.topology[k]->width << " " << detail::fixed(a.topology[k]->sparsity, 4);
    else out << " - - -";
    out << "\n";
  }
  out << "\nadjacency (row = from, column = to)";
  for (std::size_t k = 0; k < a.tasks.size(); ++k) out << (k ? ", " : ": ") << task_letter(k) << "=" << a.tasks[k];
  out << "\n";
  const std::size_t cell = std::max<std::size_t>(2, a.tasks.size()) + 1;
  out << std::setw(4) << "";
  for (std::size_t j = 1; j <= a.n_states; ++j) out << std::setw(static_cast<int>(cell)) << ("v" + std::to_string(j));
  out << "\n";
  for (std::size_t i = 1; i <= a.n_states; ++i) {
    out << std::setw(4) << ("v" + std::to_string(i));
    for (std::size_t j = 1; j <= a.n_states; ++j) {
      std::string label;
      for (std::size_t k : a.overlay[i][j]) label += task_letter(k);
      out << std::setw(static_cast<int>(cell)) << (label.empty() ? "." : label);
    }
    out << "\n";
  }
  out << "\nshared edges\n";
  for (const auto& [pair, n] : a.shared)
    out << a.tasks[pair.first] << " " << a.tasks[pair.second] << " " << n << "\n";
}

inline int cmd_analyze(const std::filesystem::path& run_dir, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const auto path = run_dir / "report.json";
    if (!std::filesystem::exists(path)) throw Error("analyze: " + path.string() + " not found");
    print_analysis(analyze_report(read_json(path)), out);
    return kExitOk;
  });
}

}  // namespace dmtl
