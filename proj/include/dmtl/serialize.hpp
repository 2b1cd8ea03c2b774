#pragma once

// JSON and CSV encodings of checkpoints, traces, datasets and reports.
//
// Every document carries a "format" name and integer "version". Nothing
// time-dependent is written, so identical runs give identical bytes.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmtl/centralnet.hpp"
#include "dmtl/dataset.hpp"
#include "dmtl/error.hpp"
#include "dmtl/experiment.hpp"
#include "dmtl/pipeline.hpp"
#include "dmtl/reduction.hpp"

namespace dmtl {

using Json = nlohmann::ordered_json;

inline constexpr int kCheckpointVersion = 1;
inline constexpr int kTraceVersion = 1;
inline constexpr int kReportVersion = 1;
inline constexpr int kDatasetVersion = 1;

namespace detail {

inline void expect_format(const Json& j, const char* format, int version) {
  if (!j.is_object() || j.value("format", std::string{}) != format) {
    throw ArgumentError(std::string("expected a '") + format + "' document");
  }
  const int v = j.at("version").get<int>();
  if (v != version) {
    throw ArgumentError(std::string(format) + ": unsupported version " + std::to_string(v) + " (reader supports " +
                        std::to_string(version) + ")");
  }
}

inline std::vector<int> mask_to_json(const std::vector<std::uint8_t>& m) { return {m.begin(), m.end()}; }

inline std::vector<std::uint8_t> mask_from_json(const Json& j, std::size_t n, const char* what) {
  std::vector<std::uint8_t> out;
  for (const auto& v : j) {
    const int b = v.get<int>();
    if (b != 0 && b != 1) throw ArgumentError(std::string(what) + ": mask entries must be 0 or 1");
    out.push_back(static_cast<std::uint8_t>(b));
  }
  if (out.size() != n) throw ShapeError(std::string(what) + ": mask has wrong length");
  return out;
}

}  // namespace detail

// ---- tensors, tasks, shapes ------------------------------------------------

inline Json to_json(const Tensor& t) { return Json{{"shape", t.shape()}, {"data", t.data()}}; }

inline Tensor tensor_from_json(const Json& j) {
  return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

inline Json to_json(const TaskSpec& t) {
  return Json{{"id", t.id}, {"kind", to_string(t.kind)}, {"output_dim", t.output_dim}, {"complexity", t.complexity}};
}

inline TaskSpec task_from_json(const Json& j) {
  return {j.at("id").get<std::string>(), task_kind_from_string(j.at("kind").get<std::string>()),
          j.at("output_dim").get<std::size_t>(), j.at("complexity").get<std::size_t>()};
}

inline Json to_json(const std::vector<TaskSpec>& tasks) {
  Json a = Json::array();
  for (const TaskSpec& t : tasks) a.push_back(to_json(t));
  return a;
}

inline std::vector<TaskSpec> tasks_from_json(const Json& j) {
  std::vector<TaskSpec> out;
  for (const auto& t : j) out.push_back(task_from_json(t));
  return out;
}

inline Json to_json(const NetShape& s) {
  return Json{{"input_dim", s.input_dim}, {"state_dims", s.state_dims}, {"latent_dim", s.latent_dim}};
}

inline NetShape shape_from_json(const Json& j) {
  return {j.at("input_dim").get<std::size_t>(), j.at("state_dims").get<std::vector<std::size_t>>(),
          j.at("latent_dim").get<std::size_t>()};
}

inline Json to_json(const TrainPlan& p) {
  Json j{{"warmup_iters", p.warmup_iters},   {"search_iters", p.search_iters}, {"finetune_iters", p.finetune_iters},
         {"weight_lr", p.weight_lr},         {"upper_lr", p.upper_lr},         {"lambda_sq", p.lambda_sq},
         {"kappa", nullptr},                 {"batch_size", p.batch_size},     {"seed", p.seed},
         {"flow_constant", p.flow_constant}, {"n_states", p.n_states},         {"state_dim", p.state_dim},
         {"latent_dim", p.latent_dim},       {"log_every", p.log_every}};
  if (p.kappa) j["kappa"] = *p.kappa;
  return j;
}

inline Json to_json(const LossBreakdown& lb) {
  return Json{{"per_task", lb.per_task}, {"task_total", lb.task_total}, {"squeeze", lb.squeeze},
              {"train", lb.train},       {"lambda_sq", lb.lambda_sq},   {"kappa", lb.kappa}};
}

inline Json to_json(const SubGraph& g) {
  Json edges = Json::array();
  for (std::size_t e = 0; e < g.parent.n_edges(); ++e)
    if (g.active_edges[e]) edges.push_back({g.parent.edge(e).from, g.parent.edge(e).to});
  return Json{{"readin", detail::mask_to_json(g.active_readin)},
              {"readout", detail::mask_to_json(g.active_readout)},
              {"edges", edges}};
}

inline Json to_json(const TopologyReport& t) {
  return Json{{"D", t.depth}, {"W", t.width}, {"S", t.sparsity}};
}

// ---- checkpoints -----------------------------------------------------------

inline Json to_json(const GateSet& g, const std::string& task) {
  return Json{{"task", task},
              {"mode", g.mode == GateMode::Discrete ? "discrete" : "continuous"},
              {"alpha", g.readin.value.data()},
              {"beta", g.readout.value.data()},
              {"gamma", g.edges.value.data()},
              {"readin_mask", detail::mask_to_json(g.readin_mask)},
              {"readout_mask", detail::mask_to_json(g.readout_mask)},
              {"edge_mask", detail::mask_to_json(g.edge_mask)}};
}

inline GateSet gates_from_json(const Json& j, std::size_t n_states, std::size_t n_edges) {
  const std::string task = j.at("task").get<std::string>();
  GateSet g(n_states, n_edges, task);
  auto load = [&](Variable& v, const char* key, std::size_t n) {
    auto data = j.at(key).get<std::vector<double>>();
    if (data.size() != n) throw ShapeError("checkpoint: gate '" + std::string(key) + "' of task " + task + " has wrong length");
    v.value = Tensor({n}, std::move(data));
  };
  load(g.readin, "alpha", n_states);
  load(g.readout, "beta", n_states);
  load(g.edges, "gamma", n_edges);
  g.readin_mask = detail::mask_from_json(j.at("readin_mask"), n_states, "checkpoint readin_mask");
  g.readout_mask = detail::mask_from_json(j.at("readout_mask"), n_states, "checkpoint readout_mask");
  g.edge_mask = detail::mask_from_json(j.at("edge_mask"), n_edges, "checkpoint edge_mask");
  const std::string mode = j.at("mode").get<std::string>();
  if (mode != "discrete" && mode != "continuous") throw ArgumentError("checkpoint: unknown gate mode '" + mode + "'");
  g.mode = mode == "discrete" ? GateMode::Discrete : GateMode::Continuous;
  g.set_trainable(false);
  return g;
}

/// Complete state of a network and its gates at the end of a stage.
inline Json checkpoint_to_json(const CentralNet& net, const StageCheckpoint& c) {
  Json weights = Json::array();
  CentralNet copy = net;
  copy.restore(c.weights);
  for (Variable* v : copy.weight_variables()) {
    Json w = to_json(v->value);
    w["tag"] = v->tag;
    weights.push_back(std::move(w));
  }
  Json gates = Json::array();
  for (std::size_t k = 0; k < c.gates.size(); ++k) gates.push_back(to_json(c.gates[k], net.tasks()[k].id));
  return Json{{"format", "dmtl-checkpoint"},
              {"version", kCheckpointVersion},
              {"stage", c.stage},
              {"iteration", c.iteration},
              {"n_states", net.dag().n_states()},
              {"flow_constant", net.dag().flow_constant()},
              {"shape", to_json(net.shape())},
              {"tasks", to_json(net.tasks())},
              {"last_loss", to_json(c.last_loss)},
              {"weights", weights},
              {"gates", gates}};
}

struct LoadedCheckpoint {
  std::string stage;
  std::size_t iteration = 0;
  CentralNet net;
  std::vector<GateSet> gates;
};

inline LoadedCheckpoint checkpoint_from_json(const Json& j) {
  detail::expect_format(j, "dmtl-checkpoint", kCheckpointVersion);
  LoadedCheckpoint out;
  out.stage = j.at("stage").get<std::string>();
  out.iteration = j.at("iteration").get<std::size_t>();
  const RestrictedDag dag(j.at("n_states").get<std::size_t>(), j.at("flow_constant").get<std::size_t>());
  out.net = CentralNet(dag, shape_from_json(j.at("shape")), tasks_from_json(j.at("tasks")), 0);
  auto vars = out.net.weight_variables();
  const Json& weights = j.at("weights");
  if (weights.size() != vars.size()) throw ShapeError("checkpoint: wrong number of weight tensors");
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const std::string tag = weights[i].at("tag").get<std::string>();
    if (tag != vars[i]->tag) throw ArgumentError("checkpoint: expected tensor '" + vars[i]->tag + "', found '" + tag + "'");
    Tensor t = tensor_from_json(weights[i]);
    if (t.shape() != vars[i]->value.shape()) throw ShapeError("checkpoint: shape mismatch for " + tag);
    vars[i]->value = std::move(t);
  }
  for (const auto& g : j.at("gates")) out.gates.push_back(gates_from_json(g, dag.n_states(), dag.n_edges()));
  if (out.gates.size() != out.net.n_tasks()) throw ArgumentError("checkpoint: one gate set per task required");
  return out;
}

// ---- reduction traces ------------------------------------------------------

inline Json to_json(const Removal& r) {
  return Json{{"from", r.from}, {"to", r.to}, {"score", r.score}, {"active_after", r.active_after}};
}

inline Json trace_to_json(const ReductionTrace& t, const std::string& task) {
  Json removed = Json::array();
  for (const Removal& r : t.removed) removed.push_back(to_json(r));
  return Json{{"format", "dmtl-trace"},
              {"version", kTraceVersion},
              {"task", task},
              {"method", t.method},
              {"anchor_in", t.anchor_in},
              {"anchor_out", t.anchor_out},
              {"removed", removed},
              {"rejected", t.rejected ? to_json(*t.rejected) : Json(nullptr)},
              {"termination", to_string(t.termination)},
              {"target_unreachable", t.target_unreachable},
              {"final_sparsity", t.final_sparsity},
              {"result", to_json(t.result)}};
}

// ---- datasets --------------------------------------------------------------

inline Json to_json(const Split& s) {
  Json targets = Json::array();
  for (const TaskTarget& t : s.targets) {
    if (const auto* labels = std::get_if<std::vector<int>>(&t)) targets.push_back(Json{{"labels", *labels}});
    else targets.push_back(Json{{"values", to_json(std::get<Tensor>(t))}});
  }
  return Json{{"inputs", to_json(s.inputs)}, {"targets", targets}};
}

inline Split split_from_json(const Json& j) {
  Split s{tensor_from_json(j.at("inputs")), {}};
  for (const auto& t : j.at("targets")) {
    if (t.contains("labels")) s.targets.emplace_back(t.at("labels").get<std::vector<int>>());
    else s.targets.emplace_back(tensor_from_json(t.at("values")));
  }
  return s;
}

inline Json dataset_to_json(const SyntheticMtlDataset& d) {
  return Json{{"format", "dmtl-dataset"},
              {"version", kDatasetVersion},
              {"seed", d.seed},
              {"options",
               {{"input_dim", d.options.input_dim},
                {"latent_dim", d.options.latent_dim},
                {"val_fraction", d.options.val_fraction},
                {"gain", d.options.gain}}},
              {"tasks", to_json(d.tasks)},
              {"train", to_json(d.train)},
              {"val", to_json(d.val)}};
}

inline SyntheticMtlDataset dataset_from_json(const Json& j) {
  detail::expect_format(j, "dmtl-dataset", kDatasetVersion);
  SyntheticMtlDataset d;
  d.seed = j.at("seed").get<std::uint64_t>();
  const Json& o = j.at("options");
  d.options = {o.at("input_dim").get<std::size_t>(), o.at("latent_dim").get<std::size_t>(),
               o.at("val_fraction").get<double>(), o.at("gain").get<double>()};
  d.tasks = tasks_from_json(j.at("tasks"));
  d.train = split_from_json(j.at("train"));
  d.val = split_from_json(j.at("val"));
  if (d.train.targets.size() != d.tasks.size() || d.val.targets.size() != d.tasks.size()) {
    throw ArgumentError("dataset: one target per task required");
  }
  return d;
}

// ---- reports ---------------------------------------------------------------

inline Json to_json(const ParameterCount& p) {
  return Json{{"ratio", p.ratio}, {"backbone", p.backbone}, {"heads", p.heads}, {"raw", p.raw}, {"reference", p.reference}};
}

inline Json to_json(const RelativePerformance& r) { return Json{{"per_task", r.per_task}, {"mean", r.mean}}; }

inline Json report_to_json(const ExperimentReport& r) {
  Json tasks = Json::array();
  for (std::size_t k = 0; k < r.task_reports.size(); ++k) {
    const TaskReport& t = r.task_reports[k];
    Json metrics = Json::object();
    const auto specs = r.tasks[k].metrics();
    for (std::size_t m = 0; m < specs.size(); ++m) metrics[specs[m].name] = t.metrics.at(m);
    tasks.push_back(Json{{"id", t.id},
                         {"kind", to_string(r.tasks[k].kind)},
                         {"topology", t.mask.n_active_edges() > 0 ? to_json(t.topology) : Json(nullptr)},
                         {"active_edges", t.mask.n_active_edges()},
                         {"search_gate_mass", t.search_gate_mass},
                         {"metrics", metrics},
                         {"delta", r.delta ? Json(t.delta) : Json(nullptr)},
                         {"mask", to_json(t.mask)}});
  }
  Json j{{"format", "dmtl-report"},
         {"version", kReportVersion},
         {"plan", to_json(r.plan)},
         {"tasks", to_json(r.tasks)},
         {"n_edges", r.n_edges},
         {"budget", r.budget},
         {"search_params", to_json(r.search_params)},
         {"final_params", to_json(r.final_params)},
         {"results", tasks},
         {"delta", r.delta ? to_json(*r.delta) : Json(nullptr)},
         {"baselines", nullptr}};
  if (r.baselines) {
    const BaselineReport& b = *r.baselines;
    j["baselines"] = Json{{"single", b.single},
                          {"shared", b.shared},
                          {"single_ratio", b.single_ratio},
                          {"shared_ratio", b.shared_ratio},
                          {"single_delta", to_json(b.single_delta)},
                          {"shared_delta", to_json(b.shared_delta)}};
  }
  return j;
}

// ---- files -----------------------------------------------------------------

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ArgumentError(path.string() + ": " + e.what());
  }
}

// ---- CSV -------------------------------------------------------------------

inline std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

/// CSV text whose first row names the schema and its version.
class CsvWriter {
 public:
  CsvWriter(const std::string& schema, int version, const std::vector<std::string>& columns) {
    out_ << "# schema=" << schema << " version=" << version << "\n";
    row(columns);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

  std::string str() const { return out_.str(); }

 private:
  std::ostringstream out_;
};

inline std::string metrics_csv(const std::vector<MetricsRow>& log, const std::vector<TaskSpec>& tasks) {
  std::vector<std::string> cols{"stage", "iteration", "task_total", "squeeze", "train", "lambda_sq", "kappa"};
  for (const TaskSpec& t : tasks) cols.push_back("loss_" + t.id);
  CsvWriter w("metrics", 1, cols);
  for (const MetricsRow& r : log) {
    std::vector<std::string> cells{r.stage,
                                   std::to_string(r.iteration),
                                   csv_number(r.loss.task_total),
                                   csv_number(r.loss.squeeze),
                                   csv_number(r.loss.train),
                                   csv_number(r.loss.lambda_sq),
                                   csv_number(r.loss.kappa)};
    for (double l : r.loss.per_task) cells.push_back(csv_number(l));
    w.row(cells);
  }
  return w.str();
}

}  // namespace dmtl
