#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "dmtl/dataset.hpp"
#include "dmtl/pipeline.hpp"
#include "dmtl/reduction.hpp"

namespace dmtl::testing {

/// A plan small enough for unit tests (a second or so end to end).
inline TrainPlan tiny_plan(std::uint64_t seed = 0) {
  TrainPlan p;
  p.warmup_iters = 60;
  p.search_iters = 120;
  p.finetune_iters = 80;
  p.n_states = 5;
  p.flow_constant = 2;
  p.state_dim = 6;
  p.latent_dim = 6;
  p.batch_size = 16;
  p.log_every = 20;
  p.seed = seed;
  return p;
}

inline SyntheticMtlDataset tiny_data(std::uint64_t seed = 0) {
  return gen_heterogeneous(seed, {TaskSpec::classification("cls0", 3, 1), TaskSpec::regression("reg1", 1, 2)}, 300,
                           {.input_dim = 5, .latent_dim = 5});
}

/// Random post-sigmoid gate values for `dag`, optionally quantized to force ties.
inline GateValues random_gate_values(const RestrictedDag& dag, std::mt19937_64& rng, bool quantized = false) {
  std::uniform_real_distribution<double> u(0.02, 0.98);
  auto draw = [&] {
    const double v = u(rng);
    return quantized ? std::round(v * 4.0) / 4.0 * 0.9 + 0.05 : v;
  };
  GateValues g;
  for (std::size_t s = 0; s < dag.n_states(); ++s) {
    g.readin.push_back(draw());
    g.readout.push_back(draw());
  }
  for (std::size_t e = 0; e < dag.n_edges(); ++e) g.edges.push_back(draw());
  return g;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dmtl_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace dmtl::testing
