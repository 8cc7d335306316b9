#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "json.hpp"

namespace dentalx {

struct ModelConfig {
  int num_disease_classes = 20;
  int num_anatomy_classes = 6;  // C_s, named classes only; background is added internally
  int input_height = 256;
  int input_width = 256;
  int input_channels = 1;       // 1 = grayscale, 3 = replicated grayscale
  std::array<int, 3> pyramid_channels{256, 512, 1024};
  std::array<int, 3> strides{8, 16, 32};
  double width_multiplier = 1.0;
  double depth_multiplier = 1.0 / 3.0;
  int head_channels = 256;
  int head_depth = 3;  // 3x3 blocks per decoupled branch
  int sce_channels = 256;
  int sce_depth = 3;
  bool use_context = true;
  std::uint64_t seed = 0;

  void validate() const;

  int scaled(int channels) const;
  int pyramid_width(int level) const { return scaled(pyramid_channels[static_cast<std::size_t>(level)]); }
  int head_width() const { return scaled(head_channels); }
  int sce_width() const { return scaled(sce_channels); }
  int seg_channels() const { return num_anatomy_classes + 1; }
  int context_channels() const { return use_context ? seg_channels() : 0; }
  int blocks_per_stage() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Table-3 settings.
enum class TrainMode { kDetOnly, kSegOnly, kJointNoContext, kJointContext };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);
bool trains_detection(TrainMode mode);
bool trains_segmentation(TrainMode mode);

enum class Assigner { kCenterPrior, kSimOTA };
enum class OverlapLoss { kJaccard, kDice };

struct TrainConfig {
  double initial_lr = 0.001;
  int epochs = 30;
  int batch_size = 8;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  bool hflip = false;
  Assigner assigner = Assigner::kCenterPrior;
  double center_radius = 2.5;
  OverlapLoss overlap_loss = OverlapLoss::kJaccard;
  long max_steps = 0;  // 0 = run every epoch
  int checkpoint_every = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct InferenceConfig {
  double score_threshold = 0.01;
  double nms_iou = 0.65;

  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  InferenceConfig inference;
  TrainMode mode = TrainMode::kJointContext;
  std::string train_manifest;
  std::string test_manifest;
  std::string out_dir = "runs/default";

  void validate() const;
  // Model settings implied by the mode (context channel on/off).
  ModelConfig effective_model() const;

  // Flat "section.key" view used by the config file and --set overrides.
  void set(const std::string& key, const std::string& value);
  std::string to_text() const;
};

// Parses TOML-style text: [section] headers, key = value lines, # comments.
// Keys are returned as "section.key".
std::map<std::string, std::string> parse_config_text(const std::string& text);

RunConfig load_run_config(const std::string& path);

}  // namespace dentalx
