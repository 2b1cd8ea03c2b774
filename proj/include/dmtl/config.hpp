#pragma once

// Run configuration: one flat JSON object. Every key has a default; unknown
// keys and ill-typed values raise ConfigError naming the key.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "dmtl/dataset.hpp"
#include "dmtl/error.hpp"
#include "dmtl/pipeline.hpp"
#include "dmtl/reduction.hpp"
#include "dmtl/serialize.hpp"

namespace dmtl {

enum class ReductionMode { Flow, Random, Threshold, Sparsity };

inline const char* to_string(ReductionMode m) {
  switch (m) {
    case ReductionMode::Flow:
      return "flow";
    case ReductionMode::Random:
      return "random";
    case ReductionMode::Threshold:
      return "threshold";
    case ReductionMode::Sparsity:
      return "sparsity";
  }
  return "unknown";
}

inline ReductionMode reduction_mode_from_string(const std::string& s) {
  if (s == "flow") return ReductionMode::Flow;
  if (s == "random") return ReductionMode::Random;
  if (s == "threshold") return ReductionMode::Threshold;
  if (s == "sparsity") return ReductionMode::Sparsity;
  throw ConfigError("reduction: unknown mode '" + s + "' (flow, random, threshold, sparsity)");
}

struct RunConfig {
  TrainPlan plan;

  std::string scenario = "heterogeneous";  // or "homogeneous"
  std::size_t n_samples = 2000;
  std::size_t input_dim = 8;
  std::size_t generator_latent_dim = 8;
  double val_fraction = 0.2;

  // heterogeneous scenario: one entry per task
  std::vector<std::string> task_kinds{"classification", "regression"};
  std::vector<std::size_t> task_dims{4, 1};  // classes or regression outputs
  std::vector<std::size_t> task_depths{1, 3};

  // homogeneous scenario
  std::size_t n_tasks = 3;
  std::size_t n_classes = 4;

  ReductionMode reduction = ReductionMode::Flow;
  double target_sparsity = 0.3;  // random / threshold / sparsity modes

  std::string output_dir = "runs/default";
  std::vector<std::size_t> sweep_flow_constants{2, 3, 5, 7};
  std::vector<std::uint64_t> sweep_seeds{0};
  std::vector<double> sparsity_grid{1.0, 0.8, 0.6, 0.4, 0.2};

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

struct ConfigField {
  const char* key;
  std::function<void(RunConfig&, const Json&)> read;
  std::function<Json(const RunConfig&)> write;
};

template <typename T>
struct is_vector : std::false_type {};
template <typename T>
struct is_vector<std::vector<T>> : std::true_type {};

// nlohmann converts -1 or 2.5 to an unsigned integer silently; reject both.
template <typename T>
bool strictly_typed(const Json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v.is_boolean();
  } else if constexpr (std::is_integral_v<T>) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  } else if constexpr (std::is_floating_point_v<T>) {
    return v.is_number();
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v.is_string();
  } else if constexpr (is_vector<T>::value) {
    return v.is_array() && std::all_of(v.begin(), v.end(), [](const Json& e) { return strictly_typed<typename T::value_type>(e); });
  } else {
    return true;
  }
}

template <typename T>
T get_checked(const Json& v, const char* key) {
  if (!strictly_typed<T>(v)) throw ConfigError(std::string("config key '") + key + "': invalid value " + v.dump());
  return v.get<T>();
}

template <typename T, typename Get>
ConfigField field(const char* key, Get get) {
  return {key, [key, get](RunConfig& c, const Json& v) { get(c) = get_checked<T>(v, key); },
          [get](const RunConfig& c) { return Json(get(c)); }};
}

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      field<std::size_t>("warmup_iters", [](auto& c) -> auto& { return c.plan.warmup_iters; }),
      field<std::size_t>("search_iters", [](auto& c) -> auto& { return c.plan.search_iters; }),
      field<std::size_t>("finetune_iters", [](auto& c) -> auto& { return c.plan.finetune_iters; }),
      field<double>("weight_lr", [](auto& c) -> auto& { return c.plan.weight_lr; }),
      field<double>("upper_lr", [](auto& c) -> auto& { return c.plan.upper_lr; }),
      field<double>("lambda_sq", [](auto& c) -> auto& { return c.plan.lambda_sq; }),
      {"kappa",
       [](RunConfig& c, const Json& v) {
         if (v.is_null()) c.plan.kappa.reset();
         else c.plan.kappa = get_checked<double>(v, "kappa");
       },
       [](const RunConfig& c) { return c.plan.kappa ? Json(*c.plan.kappa) : Json(nullptr); }},
      field<std::size_t>("batch_size", [](auto& c) -> auto& { return c.plan.batch_size; }),
      field<std::uint64_t>("seed", [](auto& c) -> auto& { return c.plan.seed; }),
      field<std::size_t>("flow_constant", [](auto& c) -> auto& { return c.plan.flow_constant; }),
      field<std::size_t>("n_states", [](auto& c) -> auto& { return c.plan.n_states; }),
      field<std::size_t>("state_dim", [](auto& c) -> auto& { return c.plan.state_dim; }),
      field<std::size_t>("latent_dim", [](auto& c) -> auto& { return c.plan.latent_dim; }),
      field<std::size_t>("log_every", [](auto& c) -> auto& { return c.plan.log_every; }),
      field<std::string>("scenario", [](auto& c) -> auto& { return c.scenario; }),
      field<std::size_t>("n_samples", [](auto& c) -> auto& { return c.n_samples; }),
      field<std::size_t>("input_dim", [](auto& c) -> auto& { return c.input_dim; }),
      field<std::size_t>("generator_latent_dim", [](auto& c) -> auto& { return c.generator_latent_dim; }),
      field<double>("val_fraction", [](auto& c) -> auto& { return c.val_fraction; }),
      field<std::vector<std::string>>("task_kinds", [](auto& c) -> auto& { return c.task_kinds; }),
      field<std::vector<std::size_t>>("task_dims", [](auto& c) -> auto& { return c.task_dims; }),
      field<std::vector<std::size_t>>("task_depths", [](auto& c) -> auto& { return c.task_depths; }),
      field<std::size_t>("n_tasks", [](auto& c) -> auto& { return c.n_tasks; }),
      field<std::size_t>("n_classes", [](auto& c) -> auto& { return c.n_classes; }),
      {"reduction",
       [](RunConfig& c, const Json& v) { c.reduction = reduction_mode_from_string(get_checked<std::string>(v, "reduction")); },
       [](const RunConfig& c) { return Json(to_string(c.reduction)); }},
      field<double>("target_sparsity", [](auto& c) -> auto& { return c.target_sparsity; }),
      field<std::string>("output_dir", [](auto& c) -> auto& { return c.output_dir; }),
      field<std::vector<std::size_t>>("sweep_flow_constants", [](auto& c) -> auto& { return c.sweep_flow_constants; }),
      field<std::vector<std::uint64_t>>("sweep_seeds", [](auto& c) -> auto& { return c.sweep_seeds; }),
      field<std::vector<double>>("sparsity_grid", [](auto& c) -> auto& { return c.sparsity_grid; }),
  };
  return fields;
}

inline void require(bool ok, const char* key, const std::string& msg) {
  if (!ok) throw ConfigError(std::string("config key '") + key + "': " + msg);
}

}  // namespace detail

/// Checks every field, naming the first offending key.
inline void validate(const RunConfig& c) {
  using detail::require;
  const TrainPlan& p = c.plan;
  require(p.warmup_iters >= 1, "warmup_iters", "must be >= 1");
  require(p.search_iters >= 1, "search_iters", "must be >= 1");
  require(p.finetune_iters >= 1, "finetune_iters", "must be >= 1");
  require(p.weight_lr > 0.0, "weight_lr", "must be > 0");
  require(p.upper_lr > 0.0, "upper_lr", "must be > 0");
  require(p.lambda_sq >= 0.0, "lambda_sq", "must be >= 0");
  require(!p.kappa || *p.kappa >= 0.0, "kappa", "must be >= 0 or null");
  require(p.batch_size >= 1, "batch_size", "must be >= 1");
  require(p.n_states >= 2, "n_states", "must be >= 2");
  require(p.flow_constant >= 1 && p.flow_constant < p.n_states, "flow_constant", "must lie in [1, n_states - 1]");
  require(p.state_dim >= 1, "state_dim", "must be >= 1");
  require(p.latent_dim >= 1, "latent_dim", "must be >= 1");
  require(p.log_every >= 1, "log_every", "must be >= 1");
  require(c.scenario == "heterogeneous" || c.scenario == "homogeneous", "scenario",
          "must be 'heterogeneous' or 'homogeneous'");
  require(c.n_samples >= 20, "n_samples", "must be >= 20");
  require(c.input_dim >= 1, "input_dim", "must be >= 1");
  require(c.generator_latent_dim >= 1, "generator_latent_dim", "must be >= 1");
  require(c.val_fraction > 0.0 && c.val_fraction < 1.0, "val_fraction", "must lie in (0, 1)");
  if (c.scenario == "heterogeneous") {
    require(!c.task_kinds.empty(), "task_kinds", "needs at least one task");
    require(c.task_dims.size() == c.task_kinds.size(), "task_dims", "needs one entry per task kind");
    require(c.task_depths.size() == c.task_kinds.size(), "task_depths", "needs one entry per task kind");
    for (std::size_t k = 0; k < c.task_kinds.size(); ++k) {
      const std::string& kind = c.task_kinds[k];
      require(kind == "classification" || kind == "regression", "task_kinds", "unknown kind '" + kind + "'");
      if (kind == "classification") {
        require(c.task_dims[k] >= 2 && c.task_dims[k] <= c.n_samples / 10, "task_dims",
                "class count must lie in [2, n_samples / 10]");
      } else {
        require(c.task_dims[k] >= 1, "task_dims", "regression outputs must be >= 1");
      }
    }
  } else {
    require(c.n_tasks >= 2, "n_tasks", "homogeneous scenario needs at least 2 tasks");
    require(c.n_classes >= 2 && c.n_classes <= c.n_samples / 10, "n_classes", "must lie in [2, n_samples / 10]");
  }
  require(c.target_sparsity > 0.0 && c.target_sparsity <= 1.0, "target_sparsity", "must lie in (0, 1]");
  require(!c.output_dir.empty(), "output_dir", "must not be empty");
  for (std::size_t m : c.sweep_flow_constants)
    require(m >= 1 && m < p.n_states, "sweep_flow_constants", "entries must lie in [1, n_states - 1]");
  for (double t : c.sparsity_grid) require(t > 0.0 && t <= 1.0, "sparsity_grid", "entries must lie in (0, 1]");
}

inline RunConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  const auto& fields = detail::config_fields();
  for (const auto& [key, value] : j.items()) {
    auto it = std::find_if(fields.begin(), fields.end(), [&key](const auto& f) { return key == f.key; });
    if (it == fields.end()) throw ConfigError("unknown config key '" + key + "'");
    it->read(c, value);
  }
  validate(c);
  return c;
}

inline Json config_to_json(const RunConfig& c) {
  Json j = Json::object();
  for (const auto& f : detail::config_fields()) j[f.key] = f.write(c);
  return j;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

inline std::vector<TaskSpec> task_specs(const RunConfig& c) {
  std::vector<TaskSpec> specs;
  if (c.scenario == "homogeneous") {
    for (std::size_t k = 0; k < c.n_tasks; ++k) specs.push_back(TaskSpec::classification("cls" + std::to_string(k), c.n_classes));
    return specs;
  }
  for (std::size_t k = 0; k < c.task_kinds.size(); ++k) {
    const std::string id = (c.task_kinds[k] == "classification" ? "cls" : "reg") + std::to_string(k);
    specs.push_back(c.task_kinds[k] == "classification" ? TaskSpec::classification(id, c.task_dims[k], c.task_depths[k])
                                                        : TaskSpec::regression(id, c.task_dims[k], c.task_depths[k]));
  }
  return specs;
}

/// The dataset a config describes, generated from the config seed.
inline SyntheticMtlDataset make_dataset(const RunConfig& c) {
  const GeneratorOptions opt{c.input_dim, c.generator_latent_dim, c.val_fraction, GeneratorOptions{}.gain};
  return gen_heterogeneous(c.plan.seed, task_specs(c), c.n_samples, opt);
}

/// Reducer for `mode` at sparsity `target`; random reduction draws its order
/// from `seed` and the task index.
inline Reducer make_reducer(ReductionMode mode, double target, std::uint64_t seed) {
  switch (mode) {
    case ReductionMode::Flow:
      return flow_reducer();
    case ReductionMode::Sparsity:
      return [target](const RestrictedDag& dag, const GateValues& v, std::size_t) { return reduce_to_sparsity(dag, v, target); };
    case ReductionMode::Threshold:
      return [target](const RestrictedDag& dag, const GateValues& v, std::size_t) { return threshold_reduce(dag, v, target); };
    case ReductionMode::Random:
      return [target, seed](const RestrictedDag& dag, const GateValues& v, std::size_t k) {
        return random_reduce(dag, v, target, seed * 1000003 + k);
      };
  }
  throw ArgumentError("make_reducer: unknown mode");
}

}  // namespace dmtl
