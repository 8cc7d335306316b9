#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "dentalx/backbone.hpp"
#include "dentalx/config.hpp"
#include "dentalx/detection.hpp"
#include "dentalx/image.hpp"
#include "dentalx/sce.hpp"

namespace dentalx {

// Top-level parameter partition.
enum class ParameterGroup { kBackbone, kDetection, kSce };

const char* group_name(ParameterGroup group);

class DentalXModelImpl : public torch::nn::Module {
 public:
  explicit DentalXModelImpl(const ModelConfig& config);

  FeaturePyramid forward_backbone(const torch::Tensor& images);
  StructuralContext forward_sce(const torch::Tensor& p3);
  HeadOutputs forward_detection_head(const FeaturePyramid& pyramid, const StructuralContext* context);

  const ModelConfig& config() const { return config_; }
  Backbone backbone() const { return backbone_; }
  DetectionHead detection() const { return detection_; }
  SceModule sce() const { return sce_; }

  std::vector<std::pair<std::string, torch::Tensor>> group_parameters(ParameterGroup group) const;

 private:
  ModelConfig config_;
  Backbone backbone_{nullptr};
  DetectionHead detection_{nullptr};
  SceModule sce_{nullptr};
};
TORCH_MODULE(DentalXModel);

// Validates the config and builds a model initialised from config.seed.
DentalXModel build_model(const ModelConfig& config);

// Stacks grayscale images into a B x C x H x W float tensor in [0, 1]; C = 3
// replicates the gray channel.
torch::Tensor images_to_tensor(std::span<const GrayImage* const> images, const ModelConfig& config,
                               std::span<const bool> hflip = {});

int64_t parameter_count(const torch::nn::Module& module);

}  // namespace dentalx
