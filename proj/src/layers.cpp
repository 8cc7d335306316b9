#include "dentalx/layers.hpp"

#include <cmath>

namespace dentalx {

ConvBlockImpl::ConvBlockImpl(int in_channels, int out_channels, int kernel, int stride) {
  conv_ = register_module(
      "conv", torch::nn::Conv2d(
                  torch::nn::Conv2dOptions(in_channels, out_channels, kernel).stride(stride).padding(kernel / 2).bias(false)));
  bn_ = register_module("bn", torch::nn::BatchNorm2d(torch::nn::BatchNorm2dOptions(out_channels).eps(1e-3).momentum(0.03)));
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) { return torch::silu(bn_(conv_(x))); }

ResidualBlockImpl::ResidualBlockImpl(int channels) {
  reduce_ = register_module("reduce", ConvBlock(channels, channels, 1));
  expand_ = register_module("expand", ConvBlock(channels, channels, 3));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + expand_(reduce_(x)); }

torch::nn::Conv2d predictor(int in_channels, int out_channels, double bias_init) {
  torch::nn::Conv2d conv(torch::nn::Conv2dOptions(in_channels, out_channels, 1).bias(true));
  torch::NoGradGuard guard;
  conv->bias.fill_(bias_init);
  return conv;
}

double prior_bias(double probability) { return -std::log((1.0 - probability) / probability); }

}  // namespace dentalx
