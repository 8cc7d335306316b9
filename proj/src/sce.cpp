#include "dentalx/sce.hpp"

#include <cstring>

#include "dentalx/errors.hpp"

namespace dentalx {

namespace F = torch::nn::functional;

StructuralContext StructuralContext::index_select(const torch::Tensor& rows) const {
  StructuralContext out;
  out.seg_logits = seg_logits.index_select(0, rows);
  for (std::size_t i = 0; i < context_maps.size(); ++i) out.context_maps[i] = context_maps[i].index_select(0, rows);
  return out;
}

std::array<torch::Tensor, 3> context_maps_from_logits(const torch::Tensor& seg_logits) {
  std::array<torch::Tensor, 3> maps;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const int k = kContextPoolFactors[i];
    maps[i] = F::avg_pool2d(seg_logits, F::AvgPool2dFuncOptions(k).stride(k));
  }
  return maps;
}

SceModuleImpl::SceModuleImpl(const ModelConfig& config) : in_channels_(config.pyramid_width(0)) {
  torch::nn::Sequential convs;
  int in = in_channels_;
  for (int i = 0; i < config.sce_depth; ++i) {
    convs->push_back(ConvBlock(in, config.sce_width(), 3));
    in = config.sce_width();
  }
  convs_ = register_module("convs", convs);
  classifier_ = register_module("classifier", predictor(in, config.seg_channels(), 0.0));
}

StructuralContext SceModuleImpl::forward(const torch::Tensor& p3) {
  if (p3.dim() != 4 || p3.size(1) != in_channels_)
    throw ShapeError("forward_sce: expected P3 with " + std::to_string(in_channels_) + " channels");
  auto up = F::interpolate(p3, F::InterpolateFuncOptions()
                                   .size(std::vector<int64_t>{2 * p3.size(2), 2 * p3.size(3)})
                                   .mode(torch::kBilinear)
                                   .align_corners(false));
  StructuralContext ctx;
  ctx.seg_logits = classifier_(convs_->forward(up));
  ctx.context_maps = context_maps_from_logits(ctx.seg_logits);
  return ctx;
}

LabelMask predict_anatomy_mask(const torch::Tensor& seg_logits, int height, int width) {
  torch::NoGradGuard guard;
  auto logits = seg_logits.dim() == 3 ? seg_logits.unsqueeze(0) : seg_logits;
  if (logits.dim() != 4 || logits.size(0) != 1) throw ShapeError("predict_anatomy_mask: expected one C x h x w map");
  if (logits.size(1) > 256) throw ShapeError("predict_anatomy_mask: too many classes for an 8-bit mask");
  auto resized = F::interpolate(logits.to(torch::kFloat),
                                F::InterpolateFuncOptions()
                                    .size(std::vector<int64_t>{height, width})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
  auto labels = resized.squeeze(0).argmax(0).to(torch::kUInt8).contiguous().cpu();
  LabelMask mask(width, height);
  std::memcpy(mask.data.data(), labels.data_ptr<std::uint8_t>(), mask.data.size());
  return mask;
}

}  // namespace dentalx
