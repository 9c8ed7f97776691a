#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "vfi/generator.hpp"
#include "vfi/model.hpp"
#include "vfi/synthetic.hpp"

namespace vfi {

/// Frozen feature extractor for the perceptual term. Default: four 3x3 convolutions
/// (3->16, 16->32 stride 2, 32->32, 32->64 stride 2) with ReLU, fixed random weights.
class PerceptualNetImpl : public torch::nn::Module {
 public:
  explicit PerceptualNetImpl(uint64_t seed = 7);
  /// image in [0, 1], [N, 3, H, W]
  torch::Tensor forward(const torch::Tensor& image);

 private:
  std::vector<torch::nn::Conv2d> convs_;
};
TORCH_MODULE(PerceptualNet);

/// Mean squared distance between the feature maps of pred and gt (both in [0, 1]).
torch::Tensor perceptual_loss(PerceptualNet& featnet, const torch::Tensor& pred,
                              const torch::Tensor& gt);

/// z' ~ N(m, v) elementwise with m, v the scalar mean and (population) variance over every element
/// of z. Statistics are taken from a detached z, so gradients flow only through the decoder.
LatentCode latent_matched_sample(const LatentCode& z, torch::Generator& gen);

struct LossTerms {
  torch::Tensor total;
  torch::Tensor nll;         // nats per image dimension, batch mean
  torch::Tensor perceptual;
};

struct LossOptions {
  double mu = 0.2;
  double dequantization = 1.0 / 255.0;  // width of the uniform noise added to targets
};

/// L = L_nll + mu * L_per for one batch. All randomness (mask noise, dequantisation, z') comes
/// from gen. Throws NumericalError carrying both terms when the result is not finite.
LossTerms total_loss(Interpolator& model, const Triplet& batch, PerceptualNet& featnet,
                     const LossOptions& options, torch::Generator& gen);

}  // namespace vfi
