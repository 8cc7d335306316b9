#include "dentalx/backbone.hpp"

#include "dentalx/errors.hpp"

namespace dentalx {
namespace {

torch::Tensor upsample2x(const torch::Tensor& x) {
  namespace F = torch::nn::functional;
  return F::interpolate(x, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
}

}  // namespace

const torch::Tensor& FeaturePyramid::level(int i) const {
  switch (i) {
    case 0: return p3;
    case 1: return p4;
    case 2: return p5;
  }
  throw std::out_of_range("pyramid level must be 0, 1 or 2");
}

FeaturePyramid FeaturePyramid::index_select(const torch::Tensor& rows) const {
  return {p3.index_select(0, rows), p4.index_select(0, rows), p5.index_select(0, rows)};
}

torch::nn::Sequential BackboneImpl::make_stage(int in_channels, int out_channels, int blocks) {
  torch::nn::Sequential stage;
  stage->push_back(ConvBlock(in_channels, out_channels, 3, 2));
  for (int i = 0; i < blocks; ++i) stage->push_back(ResidualBlock(out_channels));
  return stage;
}

BackboneImpl::BackboneImpl(const ModelConfig& config) {
  const int c3 = config.pyramid_width(0), c4 = config.pyramid_width(1), c5 = config.pyramid_width(2);
  const int c1 = std::max(1, c3 / 4), c2 = std::max(1, c3 / 2);
  const int n = config.blocks_per_stage();

  stem_ = register_module("stem", torch::nn::Sequential(ConvBlock(config.input_channels, c1, 3, 2)));
  stage2_ = register_module("stage2", make_stage(c1, c2, n));
  stage3_ = register_module("stage3", make_stage(c2, c3, n));
  stage4_ = register_module("stage4", make_stage(c3, c4, n));
  stage5_ = register_module("stage5", make_stage(c4, c5, n));

  lateral5_ = register_module("lateral5", ConvBlock(c5, c5, 1));
  lateral4_ = register_module("lateral4", ConvBlock(c4, c4, 1));
  lateral3_ = register_module("lateral3", ConvBlock(c3, c3, 1));
  top_down5_ = register_module("top_down5", ConvBlock(c5, c4, 1));
  top_down4_ = register_module("top_down4", ConvBlock(c4, c3, 1));
  smooth4_ = register_module("smooth4", ConvBlock(c4, c4, 3));
  smooth3_ = register_module("smooth3", ConvBlock(c3, c3, 3));
}

FeaturePyramid BackboneImpl::forward(const torch::Tensor& images) {
  const auto x2 = stage2_->forward(stem_->forward(images));
  const auto c3 = stage3_->forward(x2);
  const auto c4 = stage4_->forward(c3);
  const auto c5 = stage5_->forward(c4);

  auto p5 = lateral5_(c5);
  auto p4 = smooth4_(lateral4_(c4) + top_down5_(upsample2x(p5)));
  auto p3 = smooth3_(lateral3_(c3) + top_down4_(upsample2x(p4)));
  return {std::move(p3), std::move(p4), std::move(p5)};
}

}  // namespace dentalx
