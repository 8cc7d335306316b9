#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "dentalx/config.hpp"
#include "dentalx/model.hpp"

namespace dentalx {

inline constexpr const char* kCheckpointVersion = "dentalx-checkpoint-1";

// Everything needed to continue an interrupted run bit-for-bit.
struct TrainingState {
  TrainConfig train;
  long step = 0;
  int epoch = 0;
  std::string sampler_state;
  std::string optimizer_state;  // serialized torch::optim archive
};

struct Checkpoint {
  ModelConfig config;
  std::optional<TrainMode> mode;
  DentalXModel model{nullptr};
  std::optional<TrainingState> state;
};

// Single pickle archive: {"version", "config" (JSON text), "mode", "params",
// "buffers" (keyed by group-qualified names), optional "train_state"}.
void save_checkpoint(const std::filesystem::path& path, DentalXModel& model, std::optional<TrainMode> mode = std::nullopt,
                     const TrainingState* state = nullptr);

// Checks the version string and, when `expected` is given, that the stored
// model config matches it before any parameter array is read.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace dentalx
