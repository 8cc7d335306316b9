#pragma once

#include <array>
#include <vector>

#include <torch/torch.h>

#include "dentalx/backbone.hpp"
#include "dentalx/config.hpp"
#include "dentalx/geometry.hpp"
#include "dentalx/layers.hpp"
#include "dentalx/sce.hpp"

namespace dentalx {

struct LevelOutputs {
  torch::Tensor class_logits;       // B x num_disease_classes x H x W
  torch::Tensor box_regression;     // B x 4 x H x W, (dx, dy, dw, dh)
  torch::Tensor objectness_logits;  // B x 1 x H x W
  torch::Tensor cls_features;       // B x head_width x H x W, before context fusion
  int stride = 0;
};

struct HeadOutputs {
  std::array<LevelOutputs, 3> levels;

  int64_t batch_size() const { return levels[0].class_logits.size(0); }
};

// One pyramid level of the decoupled head.
class HeadLevelImpl : public torch::nn::Module {
 public:
  HeadLevelImpl(int in_channels, const ModelConfig& config);
  LevelOutputs forward(const torch::Tensor& feature, const torch::Tensor& context);

  int classifier_in_channels() const { return width_ + context_channels_; }

 private:
  int width_ = 0;
  int context_channels_ = 0;
  ConvBlock stem_{nullptr};
  torch::nn::Sequential cls_convs_{nullptr}, reg_convs_{nullptr};
  torch::nn::Conv2d cls_pred_{nullptr}, reg_pred_{nullptr}, obj_pred_{nullptr};
};
TORCH_MODULE(HeadLevel);

// Decoupled classification / (regression, objectness) head on P3-P5. When the
// model uses structural context, each level's penultimate classification map is
// concatenated with the context map of the same stride before the classifier.
class DetectionHeadImpl : public torch::nn::Module {
 public:
  explicit DetectionHeadImpl(const ModelConfig& config);
  HeadOutputs forward(const FeaturePyramid& pyramid, const StructuralContext* context);

  HeadLevel level(int i) const { return levels_[static_cast<std::size_t>(i)]; }

 private:
  ModelConfig config_;
  std::array<HeadLevel, 3> levels_{nullptr, nullptr, nullptr};
};
TORCH_MODULE(DetectionHead);

// Anchor-free decode. Cell (i, j) at stride s with regression (dx, dy, dw, dh)
// gives centre ((j + dx) s, (i + dy) s) and size (exp(dw) s, exp(dh) s); score
// is sigmoid(objectness) * sigmoid(best class logit). Boxes are clipped to the
// image; one vector per batch item.
std::vector<std::vector<Detection>> decode_predictions(const HeadOutputs& outputs, const ModelConfig& config,
                                                       double score_threshold);

}  // namespace dentalx
