#pragma once

#include <array>

#include <torch/torch.h>

#include "dentalx/config.hpp"
#include "dentalx/image.hpp"
#include "dentalx/layers.hpp"

namespace dentalx {

// Auxiliary anatomy logits (C_s + 1 channels, background first) at twice the
// P3 resolution, and their average-pooled copies at each detection stride.
struct StructuralContext {
  torch::Tensor seg_logits;
  std::array<torch::Tensor, 3> context_maps;

  StructuralContext index_select(const torch::Tensor& rows) const;
};

// Downsampling factors from the segmentation grid (stride 4) to strides 8/16/32.
inline constexpr std::array<int, 3> kContextPoolFactors{2, 4, 8};

std::array<torch::Tensor, 3> context_maps_from_logits(const torch::Tensor& seg_logits);

// Structural context extraction: bilinear 2x upsampling of P3, sce_depth 3x3
// conv blocks and a 1x1 classifier.
class SceModuleImpl : public torch::nn::Module {
 public:
  explicit SceModuleImpl(const ModelConfig& config);
  StructuralContext forward(const torch::Tensor& p3);

 private:
  int in_channels_ = 0;
  torch::nn::Sequential convs_{nullptr};
  torch::nn::Conv2d classifier_{nullptr};
};
TORCH_MODULE(SceModule);

// Bilinear resize of one image's logits (C x h x w) to (height, width), then
// per-pixel argmax.
LabelMask predict_anatomy_mask(const torch::Tensor& seg_logits, int height, int width);

}  // namespace dentalx
