#include "dentalx/model.hpp"

#include <cstring>

#include "dentalx/errors.hpp"

namespace dentalx {

const char* group_name(ParameterGroup group) {
  switch (group) {
    case ParameterGroup::kBackbone: return "backbone";
    case ParameterGroup::kDetection: return "detection";
    case ParameterGroup::kSce: return "sce";
  }
  return "?";
}

DentalXModelImpl::DentalXModelImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  backbone_ = register_module(group_name(ParameterGroup::kBackbone), Backbone(config_));
  detection_ = register_module(group_name(ParameterGroup::kDetection), DetectionHead(config_));
  sce_ = register_module(group_name(ParameterGroup::kSce), SceModule(config_));
}

FeaturePyramid DentalXModelImpl::forward_backbone(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != config_.input_channels || images.size(2) != config_.input_height ||
      images.size(3) != config_.input_width) {
    throw ShapeError("forward_backbone: expected B x " + std::to_string(config_.input_channels) + " x " +
                     std::to_string(config_.input_height) + " x " + std::to_string(config_.input_width) +
                     " images, got " + c10::str(images.sizes()));
  }
  return backbone_->forward(images);
}

StructuralContext DentalXModelImpl::forward_sce(const torch::Tensor& p3) {
  if (p3.dim() != 4 || p3.size(2) != config_.input_height / 8 || p3.size(3) != config_.input_width / 8)
    throw ShapeError("forward_sce: P3 spatial size does not match the config");
  return sce_->forward(p3);
}

HeadOutputs DentalXModelImpl::forward_detection_head(const FeaturePyramid& pyramid, const StructuralContext* context) {
  return detection_->forward(pyramid, context);
}

std::vector<std::pair<std::string, torch::Tensor>> DentalXModelImpl::group_parameters(ParameterGroup group) const {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  const std::string prefix = std::string(group_name(group)) + ".";
  for (const auto& item : named_parameters(true))
    if (item.key().rfind(prefix, 0) == 0) out.emplace_back(item.key(), item.value());
  return out;
}

DentalXModel build_model(const ModelConfig& config) {
  config.validate();
  torch::manual_seed(config.seed);
  return DentalXModel(config);
}

torch::Tensor images_to_tensor(std::span<const GrayImage* const> images, const ModelConfig& config,
                               std::span<const bool> hflip) {
  const auto n = static_cast<int64_t>(images.size());
  auto out = torch::empty({n, 1, config.input_height, config.input_width}, torch::kUInt8);
  for (int64_t b = 0; b < n; ++b) {
    const GrayImage& img = *images[static_cast<std::size_t>(b)];
    if (img.width != config.input_width || img.height != config.input_height)
      throw ShapeError("image size " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                       " does not match the model input size");
    std::memcpy(out[b].data_ptr<std::uint8_t>(), img.data.data(), img.data.size());
  }
  auto pixels = out.to(torch::kFloat).div_(255.0);
  if (!hflip.empty()) {
    for (int64_t b = 0; b < n; ++b)
      if (hflip[static_cast<std::size_t>(b)]) pixels[b] = pixels[b].flip({2});
  }
  if (config.input_channels == 3) pixels = pixels.expand({n, 3, config.input_height, config.input_width}).contiguous();
  return pixels;
}

int64_t parameter_count(const torch::nn::Module& module) {
  int64_t total = 0;
  for (const auto& p : module.parameters()) total += p.numel();
  return total;
}

}  // namespace dentalx
