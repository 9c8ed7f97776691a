#include "vfi/encoder.hpp"

#include <string>

#include "vfi/errors.hpp"

namespace vfi {

FeatureEncoderImpl::FeatureEncoderImpl(std::vector<int64_t> channel_plan)
    : channels_(std::move(channel_plan)) {
  if (channels_.empty()) throw ValidationError("encoder: empty channel plan");
  int64_t in = 3;
  for (size_t l = 0; l < channels_.size(); ++l) {
    if (channels_[l] <= 0) throw ValidationError("encoder: channel counts must be positive");
    const int64_t stride = l == 0 ? 1 : 2;
    first_.push_back(register_module("conv" + std::to_string(l) + "a",
                                     make_conv(in, channels_[l], 3, stride)));
    second_.push_back(register_module("conv" + std::to_string(l) + "b",
                                      make_conv(channels_[l], channels_[l], 3)));
    in = channels_[l];
  }
}

FeaturePyramid FeatureEncoderImpl::forward(const torch::Tensor& image) {
  require_nchw(image, "encoder image", 3);
  const int64_t factor = int64_t{1} << (levels() - 1);
  if (image.size(2) % factor != 0 || image.size(3) % factor != 0) {
    throw DimensionError("encoder: image size " + shape_string(image) +
                         " must be divisible by " + std::to_string(factor));
  }
  FeaturePyramid pyramid;
  auto x = image;
  for (size_t l = 0; l < channels_.size(); ++l) {
    x = leaky(second_[l]->forward(leaky(first_[l]->forward(x))));
    pyramid.push_back(x);
  }
  return pyramid;
}

FeatureEncoder init_encoder(uint64_t seed, std::vector<int64_t> channel_plan) {
  FeatureEncoder enc(std::move(channel_plan));
  init_fan_in(*enc, seed);
  return enc;
}

}  // namespace vfi
