#include "sseg/nn/layers.hpp"

#include <cmath>

namespace sseg {

namespace F = torch::nn::functional;

ConvModuleImpl::ConvModuleImpl(const ConvModuleOptions& o) : act_(o.act()) {
  conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(o.in_channels(), o.out_channels(),
                                                                            o.kernel_size())
                                                       .stride(o.stride())
                                                       .padding(o.padding())
                                                       .dilation(o.dilation())
                                                       .bias(!o.norm())));
  init_conv_fan_out(*conv);
  if (o.norm()) {
    bn = register_module("bn", torch::nn::BatchNorm2d(o.out_channels()));
    init_norm(*bn);
  }
}

torch::Tensor ConvModuleImpl::forward(const torch::Tensor& x) {
  auto y = conv->forward(x);
  if (bn) y = bn->forward(y);
  if (act_) y = torch::relu(y);
  return y;
}

void init_conv_fan_out(torch::nn::Conv2dImpl& conv) {
  torch::NoGradGuard guard;
  torch::nn::init::kaiming_normal_(conv.weight, 0.0, torch::kFanOut, torch::kReLU);
  if (conv.bias.defined()) conv.bias.zero_();
}

void init_norm(torch::nn::BatchNorm2dImpl& norm) {
  torch::NoGradGuard guard;
  norm.weight.fill_(1.0);
  norm.bias.zero_();
}

void init_normal(torch::nn::Conv2dImpl& conv, double std) {
  torch::NoGradGuard guard;
  conv.weight.normal_(0.0, std);
  if (conv.bias.defined()) conv.bias.zero_();
}

torch::Tensor resize_bilinear(const torch::Tensor& x, std::int64_t height, std::int64_t width) {
  if (x.size(-2) == height && x.size(-1) == width) return x;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{height, width})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

torch::Tensor argmax_classes(const torch::Tensor& logits) {
  // torch::argmax returns the first maximal index on CPU, which is the lowest class.
  return logits.argmax(1);
}

void freeze_norm_statistics(torch::nn::Module& module) {
  for (auto& child : module.modules(/*include_self=*/true)) {
    if (auto* bn = child->as<torch::nn::BatchNorm2dImpl>()) bn->eval();
  }
}

}  // namespace sseg
