#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dmtl/error.hpp"

namespace dmtl {

enum class TaskKind { Classification, Regression };

inline const char* to_string(TaskKind kind) {
  return kind == TaskKind::Classification ? "classification" : "regression";
}

inline TaskKind task_kind_from_string(const std::string& s) {
  if (s == "classification") return TaskKind::Classification;
  if (s == "regression") return TaskKind::Regression;
  throw ConfigError("unknown task kind '" + s + "'");
}

struct MetricSpec {
  std::string name;
  bool lower_is_better = false;  // l_j in the relative-performance formula
  bool operator==(const MetricSpec&) const = default;
};

/// One task of the multi-task problem. Classification tasks use softmax
/// cross-entropy and report accuracy; regression tasks use mean squared error
/// and report mean absolute error.
struct TaskSpec {
  std::string id;
  TaskKind kind = TaskKind::Classification;
  std::size_t output_dim = 2;  // classes or regression dims
  std::size_t complexity = 1;  // depth of the synthetic generating composition

  std::vector<MetricSpec> metrics() const {
    if (kind == TaskKind::Classification) return {{"accuracy", false}};
    return {{"mae", true}};
  }

  static TaskSpec classification(std::string id, std::size_t classes, std::size_t complexity = 1) {
    if (classes < 2) throw ArgumentError("classification task needs at least 2 classes");
    return {std::move(id), TaskKind::Classification, classes, complexity};
  }
  static TaskSpec regression(std::string id, std::size_t dims = 1, std::size_t complexity = 1) {
    if (dims < 1) throw ArgumentError("regression task needs at least 1 output");
    return {std::move(id), TaskKind::Regression, dims, complexity};
  }

  bool operator==(const TaskSpec&) const = default;
};

}  // namespace dmtl
