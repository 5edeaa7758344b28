#pragma once

#include "plmc/model.hpp"

#include <cstdint>
#include <vector>

namespace plmc {

struct TrainConfig {
  double lr_max = 1e-2;
  double lr_min = 1e-3;
  int max_iters = 5000;
  double plateau_delta = 1e-4;  // loss units
  int patience = 300;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
  /// Learning rate at step t, decaying geometrically from lr_max to lr_min
  /// over max_iters steps.
  double learning_rate(int t) const;
};

struct FitReport {
  int n_iters = 0;
  double wall_time = 0.0;  // seconds
  double initial_loss = 0.0;
  double final_loss = 0.0;  // best loss seen; the model holds its parameters
  std::vector<double> loss_trace;
  bool stopped_early = false;
  int retries = 0;  // steps retried with a halved learning rate
};

/// Maximizes log p(Y) with AdamW. The model is left at the best parameters
/// encountered. Throws TrainingAborted when a step cannot be made finite.
FitReport fit(LmcModel& model, const Dataset& data, const TrainConfig& config,
              const InferenceOptions& opts = {});

}  // namespace plmc
