#pragma once

#include <array>
#include <string>
#include <vector>

#include "pcedtr/engine.hpp"
#include "pcedtr/simgen.hpp"

namespace pcedtr {

struct ReplicateConfig {
  ScenarioSpec scenario;  // scenario.seed is the base seed
  int reps = 20;
  ChainConfig chain;
  std::vector<double> levels{1.0, 0.75, 0.5, 0.25};
  double mcb_level = 0.95;
  bool maximize = true;
  int threads = 0;  // 0 = hardware concurrency
};

struct RepOutcome {
  bool ok = false;
  std::string error;
  std::array<double, 6> seq_est{}, seq_truth{}, seq_sd{};
  // indexed [level][edtr-1]
  std::vector<std::array<double, 4>> edtr_est, edtr_truth, edtr_sd;
  std::vector<std::array<bool, 4>> edtr_in_best;
};

struct ReplicateResult {
  ReplicateConfig cfg;
  std::vector<RepOutcome> reps;
  int failures = 0;

  // aggregates over successful reps
  std::array<double, 6> seq_bias{}, seq_rep_sd{}, seq_post_sd{};
  std::vector<std::array<double, 4>> edtr_bias, edtr_rep_sd, edtr_post_sd;
  std::vector<std::array<double, 4>> mcb_inclusion_pct;
};

// derived per-rep seed
std::uint64_t rep_seed(std::uint64_t base, int rep, int salt);

RepOutcome run_one_rep(const ReplicateConfig& cfg, int rep);
ReplicateResult replicate(const ReplicateConfig& cfg);

}  // namespace pcedtr
