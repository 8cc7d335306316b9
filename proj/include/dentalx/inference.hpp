#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dentalx/config.hpp"
#include "dentalx/dataset.hpp"
#include "dentalx/evaluation.hpp"
#include "dentalx/model.hpp"
#include "dentalx/taxonomy.hpp"

namespace dentalx {

struct ImagePrediction {
  std::vector<Detection> detections;  // after NMS
  LabelMask anatomy;                  // argmax of the SCE output at image size
};

// Runs the model in eval mode without gradients. Detections are decoded,
// thresholded and suppressed per class.
std::vector<ImagePrediction> predict(DentalXModel& model, std::span<const GrayImage* const> images,
                                     const InferenceConfig& inference, int chunk = 8);

enum class EvalTask { kDetection, kSegmentation, kBoth };

EvalTask eval_task_from_string(const std::string& name);

struct EvalOptions {
  InferenceConfig inference;
  EvalTask task = EvalTask::kBoth;
  std::optional<DiseaseRuleTable> rules;
  double rule_threshold = 0.5;
};

struct EvalResult {
  std::optional<APReport> detection;
  std::optional<APReport> detection_filtered;
  std::optional<SegReport> segmentation;
  std::vector<std::vector<Detection>> detections;
  std::vector<std::vector<Detection>> filtered_detections;
  std::vector<LabelMask> segmentation_predictions;

  nlohmann::json to_json() const;
};

// Detection metrics on corpus.detection, segmentation metrics on
// corpus.segmentation. The rule filter uses the model's own anatomy prediction
// for each detection image.
EvalResult evaluate(DentalXModel& model, const Corpus& corpus, const EvalOptions& options);

nlohmann::json to_json(const APReport& report);
nlohmann::json to_json(const SegReport& report);

// Rejects evaluating a task the checkpoint's mode never trained.
void check_task_trained(std::optional<TrainMode> mode, EvalTask task);

}  // namespace dentalx
