#include "dentalx/detection.hpp"

#include <cmath>

#include "dentalx/errors.hpp"

namespace dentalx {

HeadLevelImpl::HeadLevelImpl(int in_channels, const ModelConfig& config)
    : width_(config.head_width()), context_channels_(config.context_channels()) {
  stem_ = register_module("stem", ConvBlock(in_channels, width_, 1));
  torch::nn::Sequential cls, reg;
  for (int i = 0; i < config.head_depth; ++i) {
    cls->push_back(ConvBlock(width_, width_, 3));
    reg->push_back(ConvBlock(width_, width_, 3));
  }
  cls_convs_ = register_module("cls_convs", cls);
  reg_convs_ = register_module("reg_convs", reg);
  const double prior = prior_bias(0.01);
  cls_pred_ = register_module("cls_pred", predictor(width_ + context_channels_, config.num_disease_classes, prior));
  reg_pred_ = register_module("reg_pred", predictor(width_, 4, 0.0));
  obj_pred_ = register_module("obj_pred", predictor(width_, 1, prior));
}

LevelOutputs HeadLevelImpl::forward(const torch::Tensor& feature, const torch::Tensor& context) {
  const auto x = stem_(feature);
  LevelOutputs out;
  out.cls_features = cls_convs_->forward(x);
  const auto reg_features = reg_convs_->forward(x);
  if (context_channels_ > 0) {
    if (!context.defined()) throw ShapeError("detection head was built with structural context but none was given");
    if (context.size(0) != feature.size(0) || context.size(1) != context_channels_ ||
        context.size(2) != feature.size(2) || context.size(3) != feature.size(3))
      throw ShapeError("context map does not match the pyramid level");
    out.class_logits = cls_pred_(torch::cat({out.cls_features, context}, 1));
  } else {
    if (context.defined()) throw ShapeError("detection head was built without structural context");
    out.class_logits = cls_pred_(out.cls_features);
  }
  out.box_regression = reg_pred_(reg_features);
  out.objectness_logits = obj_pred_(reg_features);
  return out;
}

DetectionHeadImpl::DetectionHeadImpl(const ModelConfig& config) : config_(config) {
  for (int i = 0; i < 3; ++i) {
    levels_[static_cast<std::size_t>(i)] =
        register_module("level" + std::to_string(i), HeadLevel(config.pyramid_width(i), config));
  }
}

HeadOutputs DetectionHeadImpl::forward(const FeaturePyramid& pyramid, const StructuralContext* context) {
  HeadOutputs out;
  for (int i = 0; i < 3; ++i) {
    const auto& feature = pyramid.level(i);
    if (feature.dim() != 4 || feature.size(1) != config_.pyramid_width(i))
      throw ShapeError("pyramid level " + std::to_string(i) + " has the wrong channel count");
    torch::Tensor ctx = context ? context->context_maps[static_cast<std::size_t>(i)] : torch::Tensor();
    out.levels[static_cast<std::size_t>(i)] = levels_[static_cast<std::size_t>(i)]->forward(feature, ctx);
    out.levels[static_cast<std::size_t>(i)].stride = config_.strides[static_cast<std::size_t>(i)];
  }
  return out;
}

std::vector<std::vector<Detection>> decode_predictions(const HeadOutputs& outputs, const ModelConfig& config,
                                                       double score_threshold) {
  if (score_threshold < 0 || score_threshold > 1) throw std::invalid_argument("score_threshold must lie in [0, 1]");
  torch::NoGradGuard guard;
  const auto batch = outputs.batch_size();
  const double width = config.input_width, height = config.input_height;
  std::vector<std::vector<Detection>> result(static_cast<std::size_t>(batch));
  for (const auto& level : outputs.levels) {
    const auto cls = level.class_logits.to(torch::kDouble).contiguous();
    const auto reg = level.box_regression.to(torch::kDouble).contiguous();
    const auto obj = level.objectness_logits.to(torch::kDouble).contiguous();
    if (cls.size(1) != config.num_disease_classes || reg.size(1) != 4 || obj.size(1) != 1)
      throw ShapeError("decode_predictions: head outputs do not match the model config");
    const auto [best_logit, best_class] = cls.max(1);
    const auto score = torch::sigmoid(obj.squeeze(1)) * torch::sigmoid(best_logit);
    const auto s_acc = score.accessor<double, 3>();
    const auto c_acc = best_class.accessor<int64_t, 3>();
    const auto r_acc = reg.accessor<double, 4>();
    const double stride = level.stride;
    for (int64_t b = 0; b < batch; ++b) {
      for (int64_t i = 0; i < score.size(1); ++i) {
        for (int64_t j = 0; j < score.size(2); ++j) {
          const double sc = s_acc[b][i][j];
          if (sc < score_threshold) continue;
          const double cx = (static_cast<double>(j) + r_acc[b][0][i][j]) * stride;
          const double cy = (static_cast<double>(i) + r_acc[b][1][i][j]) * stride;
          const double w = std::exp(std::min(r_acc[b][2][i][j], 20.0)) * stride;
          const double h = std::exp(std::min(r_acc[b][3][i][j], 20.0)) * stride;
          const Box box = clip_box({cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2}, width, height);
          if (!box.valid()) continue;
          result[static_cast<std::size_t>(b)].push_back({box, static_cast<int>(c_acc[b][i][j]), std::clamp(sc, 0.0, 1.0)});
        }
      }
    }
  }
  return result;
}

}  // namespace dentalx
