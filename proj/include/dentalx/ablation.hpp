#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dentalx/config.hpp"
#include "dentalx/dataset.hpp"

namespace dentalx {

inline constexpr std::array<TrainMode, 4> kAblationModes{TrainMode::kDetOnly, TrainMode::kSegOnly,
                                                         TrainMode::kJointNoContext, TrainMode::kJointContext};

struct AblationRow {
  TrainMode mode = TrainMode::kJointContext;
  // Detection columns are empty for seg-only, segmentation columns for det-only.
  std::optional<double> ap50, ap75, ap5095, miou, mdice, macc;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  const AblationRow& row(TrainMode mode) const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

struct AblationSettings {
  ModelConfig model;
  TrainConfig train;
  InferenceConfig inference;
  std::filesystem::path out_dir;  // per-mode checkpoints and logs when set
  std::function<void(TrainMode, long step, double loss)> on_step;
};

// Trains every mode from the same seeds and evaluates each on `test`.
AblationTable run_ablation(const Corpus& train, const Corpus& test, const AblationSettings& settings);

// Cell-wise median across repeated tables (same row order).
AblationTable median_table(std::span<const AblationTable> tables);

}  // namespace dentalx
