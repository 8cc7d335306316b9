#include "dentalx/inference.hpp"

#include <algorithm>

#include "dentalx/errors.hpp"
#include "dentalx/sce.hpp"

namespace dentalx {

namespace {

class EvalModeGuard {
 public:
  explicit EvalModeGuard(DentalXModel& model) : model_(model), was_training_(model->is_training()) { model_->eval(); }
  ~EvalModeGuard() { model_->train(was_training_); }

 private:
  DentalXModel& model_;
  bool was_training_;
};

}  // namespace

std::vector<ImagePrediction> predict(DentalXModel& model, std::span<const GrayImage* const> images,
                                     const InferenceConfig& inference, int chunk) {
  inference.validate();
  if (chunk < 1) throw ConfigError("chunk must be >= 1");
  EvalModeGuard mode(model);
  torch::NoGradGuard no_grad;
  const ModelConfig& config = model->config();
  std::vector<ImagePrediction> out;
  out.reserve(images.size());
  for (std::size_t begin = 0; begin < images.size(); begin += static_cast<std::size_t>(chunk)) {
    const auto part = images.subspan(begin, std::min<std::size_t>(static_cast<std::size_t>(chunk), images.size() - begin));
    const auto pyramid = model->forward_backbone(images_to_tensor(part, config));
    const auto context = model->forward_sce(pyramid.p3);
    const auto head = model->forward_detection_head(pyramid, config.use_context ? &context : nullptr);
    auto decoded = decode_predictions(head, config, inference.score_threshold);
    for (std::size_t k = 0; k < part.size(); ++k) {
      ImagePrediction p;
      p.detections = nms(decoded[k], inference.nms_iou);
      p.anatomy = predict_anatomy_mask(context.seg_logits[static_cast<int64_t>(k)], part[k]->height, part[k]->width);
      out.push_back(std::move(p));
    }
  }
  return out;
}

EvalTask eval_task_from_string(const std::string& name) {
  if (name == "det") return EvalTask::kDetection;
  if (name == "seg") return EvalTask::kSegmentation;
  if (name == "both") return EvalTask::kBoth;
  throw ConfigError("unknown task '" + name + "' (expected det, seg or both)");
}

void check_task_trained(std::optional<TrainMode> mode, EvalTask task) {
  if (!mode) return;
  if (task != EvalTask::kSegmentation && !trains_detection(*mode))
    throw ConfigError("checkpoint was trained in mode " + to_string(*mode) + "; its detection head is untrained");
  if (task != EvalTask::kDetection && !trains_segmentation(*mode))
    throw ConfigError("checkpoint was trained in mode " + to_string(*mode) + "; its segmentation head is untrained");
}

EvalResult evaluate(DentalXModel& model, const Corpus& corpus, const EvalOptions& options) {
  EvalResult result;
  const int num_classes = model->config().num_disease_classes;
  if (options.task != EvalTask::kSegmentation) {
    if (corpus.detection.empty()) throw DataError("no detection samples to evaluate");
    std::vector<const GrayImage*> images;
    std::vector<std::vector<GroundTruthBox>> truth;
    for (const auto& s : corpus.detection) {
      images.push_back(&s.image);
      truth.push_back(s.targets);
    }
    auto predictions = predict(model, images, options.inference);
    for (auto& p : predictions) result.detections.push_back(p.detections);
    result.detection = compute_ap(result.detections, truth, num_classes);
    if (options.rules) {
      for (std::size_t i = 0; i < predictions.size(); ++i)
        result.filtered_detections.push_back(
            domain_rule_filter(predictions[i].detections, predictions[i].anatomy, *options.rules, options.rule_threshold));
      result.detection_filtered = compute_ap(result.filtered_detections, truth, num_classes);
    }
  }
  if (options.task != EvalTask::kDetection) {
    if (corpus.segmentation.empty()) throw DataError("no segmentation samples to evaluate");
    std::vector<const GrayImage*> images;
    std::vector<LabelMask> truth;
    for (const auto& s : corpus.segmentation) {
      images.push_back(&s.image);
      truth.push_back(s.mask);
    }
    for (auto& p : predict(model, images, options.inference)) result.segmentation_predictions.push_back(std::move(p.anatomy));
    result.segmentation = compute_seg_metrics(result.segmentation_predictions, truth, model->config().seg_channels());
  }
  return result;
}

nlohmann::json to_json(const APReport& report) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& c : report.per_class)
    per_class.push_back({{"class_id", c.class_id},
                         {"name", disease_name(c.class_id)},
                         {"num_ground_truth", c.num_ground_truth},
                         {"ap_per_threshold", c.ap_per_threshold}});
  return {{"iou_thresholds", report.iou_thresholds},
          {"ap50", report.ap50},
          {"ap75", report.ap75},
          {"ap50_95", report.ap5095},
          {"per_class", per_class},
          {"excluded_classes", report.excluded_classes}};
}

nlohmann::json to_json(const SegReport& report) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& c : report.per_class)
    per_class.push_back({{"class_id", c.class_id},
                         {"name", anatomy_name(c.class_id)},
                         {"gt_pixels", c.gt_pixels},
                         {"iou", c.iou},
                         {"dice", c.dice},
                         {"accuracy", c.accuracy}});
  return {{"miou", report.miou},
          {"mdice", report.mdice},
          {"macc", report.macc},
          {"pixel_accuracy", report.pixel_accuracy},
          {"per_class", per_class}};
}

nlohmann::json EvalResult::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  if (detection) j["detection"] = dentalx::to_json(*detection);
  if (detection_filtered) j["detection_filtered"] = dentalx::to_json(*detection_filtered);
  if (segmentation) j["segmentation"] = dentalx::to_json(*segmentation);
  return j;
}

}  // namespace dentalx
