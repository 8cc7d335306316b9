#pragma once

#include <torch/torch.h>

namespace dentalx {

// Convolution + batch normalization + SiLU.
class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(int in_channels, int out_channels, int kernel, int stride = 1);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::BatchNorm2d bn_{nullptr};
};
TORCH_MODULE(ConvBlock);

// x + 3x3(1x1(x)), channel count preserved.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ConvBlock reduce_{nullptr};
  ConvBlock expand_{nullptr};
};
TORCH_MODULE(ResidualBlock);

// Plain 1x1 convolution used for the final predictors.
torch::nn::Conv2d predictor(int in_channels, int out_channels, double bias_init);

// Bias value giving an initial sigmoid output of `probability`.
double prior_bias(double probability);

}  // namespace dentalx
