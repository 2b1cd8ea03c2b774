#pragma once

// Synthetic multi-task data.
//
// Inputs x ~ N(0, I) are mapped to a shared latent z = tanh(x W_shared). Each
// task composes `complexity` random layers h <- tanh(gain * h W_l) on top of z
// and then reads out either a class (quantile bins of a random projection, so
// classes are balanced) or standardized regression targets. Raising a task's
// complexity makes its target a more tangled function of the input.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dmtl/error.hpp"
#include "dmtl/objectives.hpp"
#include "dmtl/task.hpp"
#include "dmtl/tensor.hpp"

namespace dmtl {

struct GeneratorOptions {
  std::size_t input_dim = 8;
  std::size_t latent_dim = 8;
  double val_fraction = 0.2;
  double gain = 2.0;
};

struct Split {
  Tensor inputs;                     // [n, input_dim]
  std::vector<TaskTarget> targets;   // one per task

  std::size_t size() const { return inputs.shape()[0]; }

  /// Rows `rows` of the inputs.
  Tensor gather_inputs(std::span<const std::size_t> rows) const {
    const std::size_t d = inputs.shape()[1];
    Tensor out({rows.size(), d});
    for (std::size_t r = 0; r < rows.size(); ++r)
      std::copy_n(&inputs.data()[rows[r] * d], d, &out.data()[r * d]);
    return out;
  }

  /// Rows `rows` of task `task`'s target.
  TaskTarget gather_target(std::size_t task, std::span<const std::size_t> rows) const {
    const TaskTarget& t = targets.at(task);
    if (const auto* labels = std::get_if<std::vector<int>>(&t)) {
      std::vector<int> out;
      out.reserve(rows.size());
      for (std::size_t r : rows) out.push_back((*labels)[r]);
      return out;
    }
    const Tensor& values = std::get<Tensor>(t);
    const std::size_t d = values.shape()[1];
    Tensor out({rows.size(), d});
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(&values.data()[rows[r] * d], d, &out.data()[r * d]);
    return out;
  }
};

struct SyntheticMtlDataset {
  std::uint64_t seed = 0;
  GeneratorOptions options;
  std::vector<TaskSpec> tasks;
  Split train;
  Split val;

  /// The same samples restricted to one task.
  SyntheticMtlDataset only_task(std::size_t k) const {
    SyntheticMtlDataset d;
    d.seed = seed;
    d.options = options;
    d.tasks = {tasks.at(k)};
    d.train = {train.inputs, {train.targets.at(k)}};
    d.val = {val.inputs, {val.targets.at(k)}};
    return d;
  }
};

namespace detail {

inline Tensor gaussian_matrix(std::size_t rows, std::size_t cols, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor m({rows, cols});
  for (double& v : m.data()) v = scale * dist(rng);
  return m;
}

/// tanh(gain * x W), row by row.
inline Tensor tanh_layer(const Tensor& x, const Tensor& w, double gain) {
  const std::size_t n = x.shape()[0], in = w.shape()[0], out = w.shape()[1];
  Tensor y({n, out});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < out; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += x.at(r, k) * w.at(k, c);
      y.at(r, c) = std::tanh(gain * acc);
    }
  return y;
}

inline TaskTarget make_target(const Tensor& shared, const TaskSpec& spec, const GeneratorOptions& opt,
                              std::mt19937_64& rng) {
  const std::size_t n = shared.shape()[0];
  const std::size_t latent = shared.shape()[1];
  Tensor h = shared;
  for (std::size_t l = 0; l < spec.complexity; ++l)
    h = tanh_layer(h, gaussian_matrix(latent, latent, 1.0 / std::sqrt(static_cast<double>(latent)), rng), opt.gain);

  if (spec.kind == TaskKind::Classification) {
    const Tensor w = gaussian_matrix(latent, 1, 1.0, rng);
    std::vector<double> score(n, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t k = 0; k < latent; ++k) score[r] += h.at(r, k) * w[k];
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&score](std::size_t a, std::size_t b) { return score[a] < score[b]; });
    std::vector<int> labels(n, 0);
    for (std::size_t rank = 0; rank < n; ++rank)
      labels[order[rank]] = static_cast<int>(rank * spec.output_dim / n);
    return labels;
  }

  const Tensor w = gaussian_matrix(latent, spec.output_dim, 1.0, rng);
  Tensor y({n, spec.output_dim});
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < spec.output_dim; ++c) {
      double acc = 0.0;
      for (std::size_t k = 0; k < latent; ++k) acc += h.at(r, k) * w.at(k, c);
      y.at(r, c) = acc;
    }
  for (std::size_t c = 0; c < spec.output_dim; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += y.at(r, c);
    mean /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) sq += (y.at(r, c) - mean) * (y.at(r, c) - mean);
    const double sd = std::sqrt(sq / static_cast<double>(n));
    for (std::size_t r = 0; r < n; ++r) y.at(r, c) = sd > 0.0 ? (y.at(r, c) - mean) / sd : 0.0;
  }
  return y;
}

inline Split slice(const Tensor& inputs, const std::vector<TaskTarget>& targets, std::size_t begin, std::size_t end) {
  std::vector<std::size_t> rows(end - begin);
  std::iota(rows.begin(), rows.end(), begin);
  const Split full{inputs, targets};
  Split s{full.gather_inputs(rows), {}};
  for (std::size_t k = 0; k < targets.size(); ++k) s.targets.push_back(full.gather_target(k, rows));
  return s;
}

}  // namespace detail

/// Dataset for an arbitrary list of tasks over shared latents.
inline SyntheticMtlDataset gen_heterogeneous(std::uint64_t seed, std::vector<TaskSpec> specs, std::size_t n_samples,
                                             const GeneratorOptions& options = {}) {
  if (specs.empty()) throw ArgumentError("dataset: at least one task required");
  if (n_samples < 20) throw ArgumentError("dataset: need at least 20 samples, got " + std::to_string(n_samples));
  if (options.input_dim == 0 || options.latent_dim == 0) throw ArgumentError("dataset: dimensions must be positive");
  if (!(options.val_fraction > 0.0 && options.val_fraction < 1.0)) {
    throw ArgumentError("dataset: validation fraction must lie in (0, 1)");
  }
  for (const TaskSpec& t : specs) {
    if (t.kind == TaskKind::Classification && (t.output_dim < 2 || t.output_dim > n_samples / 10)) {
      throw ArgumentError("dataset: task " + t.id + " has a degenerate class count");
    }
    if (t.output_dim == 0) throw ArgumentError("dataset: task " + t.id + " has no outputs");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor x({n_samples, options.input_dim});
  for (double& v : x.data()) v = normal(rng);
  const Tensor shared = detail::tanh_layer(
      x, detail::gaussian_matrix(options.input_dim, options.latent_dim, 1.0 / std::sqrt(double(options.input_dim)), rng),
      1.0);
  std::vector<TaskTarget> targets;
  for (const TaskSpec& t : specs) targets.push_back(detail::make_target(shared, t, options, rng));

  const auto n_val = static_cast<std::size_t>(std::round(options.val_fraction * static_cast<double>(n_samples)));
  const std::size_t n_train = n_samples - n_val;
  SyntheticMtlDataset d;
  d.seed = seed;
  d.options = options;
  d.tasks = std::move(specs);
  d.train = detail::slice(x, targets, 0, n_train);
  d.val = detail::slice(x, targets, n_train, n_samples);
  return d;
}

/// K classification tasks, each a different labeling of the same latents.
inline SyntheticMtlDataset gen_homogeneous(std::uint64_t seed, std::size_t n_tasks, std::size_t n_classes,
                                           std::size_t n_samples, const GeneratorOptions& options = {}) {
  if (n_tasks < 2) throw ArgumentError("homogeneous dataset: need at least 2 tasks");
  std::vector<TaskSpec> specs;
  for (std::size_t k = 0; k < n_tasks; ++k) specs.push_back(TaskSpec::classification("cls" + std::to_string(k), n_classes));
  return gen_heterogeneous(seed, std::move(specs), n_samples, options);
}

}  // namespace dmtl
