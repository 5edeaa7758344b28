#pragma once

#include "plmc/training.hpp"

#include <string>

namespace plmc {

inline constexpr const char* kCheckpointFormat = "plmc-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  LmcModel model;
  TrainConfig config;
  FitReport report;
};

/// JSON document holding the model parameters, training config and trace.
std::string checkpoint_to_string(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_string(const std::string& text, const std::string& source = "checkpoint");

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace plmc
