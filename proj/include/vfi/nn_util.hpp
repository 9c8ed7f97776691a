#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace vfi {

/// Per-level feature maps; level l has spatial size (H/2^l, W/2^l).
using FeaturePyramid = std::vector<torch::Tensor>;

/// 'same'-padded 2-d convolution.
torch::nn::Conv2d make_conv(int64_t in, int64_t out, int64_t kernel, int64_t stride = 1,
                            int64_t dilation = 1, bool bias = true);

inline constexpr double kLeakySlope = 0.1;

inline torch::Tensor leaky(const torch::Tensor& x) {
  return torch::leaky_relu(x, kLeakySlope);
}

/// Reproducible fan-in scaled initialisation: every parameter with more than one dimension is
/// drawn from N(0, 1/fan_in), every vector parameter is zeroed. Registered order is preserved, so
/// the same seed always yields the same module state.
void init_fan_in(torch::nn::Module& module, uint64_t seed);

torch::Generator make_generator(uint64_t seed);

/// Mix two seeds into one (splitmix64 finaliser).
uint64_t mix_seed(uint64_t a, uint64_t b);

/// FNV-1a over the raw bytes of every parameter and buffer, in registration order.
uint64_t state_hash(const torch::nn::Module& module);

}  // namespace vfi
