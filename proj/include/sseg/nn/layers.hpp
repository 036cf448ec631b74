#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace sseg {

/// Conv -> BatchNorm -> ReLU, the basic unit of every head. The convolution has no bias when
/// a norm follows it.
struct ConvModuleOptions {
  ConvModuleOptions(std::int64_t in, std::int64_t out, std::int64_t kernel)
      : in_channels_(in), out_channels_(out), kernel_size_(kernel), padding_(kernel / 2) {}
  TORCH_ARG(std::int64_t, in_channels);
  TORCH_ARG(std::int64_t, out_channels);
  TORCH_ARG(std::int64_t, kernel_size);
  TORCH_ARG(std::int64_t, stride) = 1;
  TORCH_ARG(std::int64_t, padding) = 0;
  TORCH_ARG(std::int64_t, dilation) = 1;
  TORCH_ARG(bool, norm) = true;
  TORCH_ARG(bool, act) = true;
};

class ConvModuleImpl : public torch::nn::Module {
 public:
  explicit ConvModuleImpl(const ConvModuleOptions& options);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::BatchNorm2d bn{nullptr};

 private:
  bool act_;
};
TORCH_MODULE(ConvModule);

/// Fan-out scaled normal initialization (He et al.) for a convolution, bias zeroed.
void init_conv_fan_out(torch::nn::Conv2dImpl& conv);

/// Gain 1, bias 0.
void init_norm(torch::nn::BatchNorm2dImpl& norm);

/// N(0, std) weights, zero bias; used for the 1x1 classifiers.
void init_normal(torch::nn::Conv2dImpl& conv, double std = 0.01);

/// Bilinear resize with half-pixel sample centers (align_corners = false).
torch::Tensor resize_bilinear(const torch::Tensor& x, std::int64_t height, std::int64_t width);

/// Ties resolve to the lowest class index.
torch::Tensor argmax_classes(const torch::Tensor& logits);

/// Puts every BatchNorm layer under `module` into eval mode (running statistics frozen).
void freeze_norm_statistics(torch::nn::Module& module);

}  // namespace sseg
