#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "vfi/nn_util.hpp"

namespace vfi {

/// Pyramid feature encoder. Level 0 runs at input resolution; every further level starts with a
/// stride-2 convolution. Each level is two 3x3 convolutions with leaky-ReLU activations.
class FeatureEncoderImpl : public torch::nn::Module {
 public:
  explicit FeatureEncoderImpl(std::vector<int64_t> channel_plan);

  /// image: [N, 3, H, W] with H, W divisible by 2^(levels-1).
  FeaturePyramid forward(const torch::Tensor& image);

  int levels() const { return static_cast<int>(channels_.size()); }
  const std::vector<int64_t>& channels() const { return channels_; }

 private:
  std::vector<int64_t> channels_;
  std::vector<torch::nn::Conv2d> first_;
  std::vector<torch::nn::Conv2d> second_;
};
TORCH_MODULE(FeatureEncoder);

/// Seeded construction; throws ValidationError on an empty or non-positive channel plan.
FeatureEncoder init_encoder(uint64_t seed, std::vector<int64_t> channel_plan = {32, 64, 96});

}  // namespace vfi
