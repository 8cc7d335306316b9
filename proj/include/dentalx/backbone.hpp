#pragma once

#include <torch/torch.h>

#include "dentalx/config.hpp"
#include "dentalx/layers.hpp"

namespace dentalx {

// P3/P4/P5 at strides 8/16/32.
struct FeaturePyramid {
  torch::Tensor p3;
  torch::Tensor p4;
  torch::Tensor p5;

  const torch::Tensor& level(int i) const;
  FeaturePyramid index_select(const torch::Tensor& rows) const;
};

// Residual bottom-up body followed by a top-down pathway: nearest 2x upsampling,
// 1x1 lateral projections, elementwise sum, 3x3 smoothing.
class BackboneImpl : public torch::nn::Module {
 public:
  explicit BackboneImpl(const ModelConfig& config);
  FeaturePyramid forward(const torch::Tensor& images);

 private:
  torch::nn::Sequential make_stage(int in_channels, int out_channels, int blocks);

  torch::nn::Sequential stem_{nullptr}, stage2_{nullptr}, stage3_{nullptr}, stage4_{nullptr}, stage5_{nullptr};
  ConvBlock lateral5_{nullptr}, lateral4_{nullptr}, lateral3_{nullptr};
  ConvBlock top_down5_{nullptr}, top_down4_{nullptr};
  ConvBlock smooth4_{nullptr}, smooth3_{nullptr};
};
TORCH_MODULE(Backbone);

}  // namespace dentalx
