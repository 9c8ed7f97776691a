#pragma once

// Conditional normalizing-flow generator. Encoding runs L blocks of
//   squeeze -> transition (actnorm, 1x1 mixing) -> K flow steps -> split
// (the last block keeps everything), producing a multi-resolution latent code whose element count
// equals the image's. Block i (0-based) works at 1/2^(i+1) resolution and is conditioned on the
// pyramid level of that resolution, or on the coarsest level area-downsampled to it.

#include <cstdint>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "vfi/flow_layers.hpp"
#include "vfi/nn_util.hpp"

namespace vfi {

struct GeneratorOptions {
  int levels = 3;
  int steps = 4;
  std::vector<int64_t> cond_channels{32, 64, 96};  // channels of each pyramid level
  int64_t cond_width = 32;
  int64_t hidden = 64;
  int64_t image_channels = 3;
  // false: every latent part is scored under N(0, I).
  // true: each split half (and the top output) passes through a conditional affine prior
  // z = mu + exp(log_sigma) * eps before scoring eps, with mu, log_sigma zero-initialised.
  bool learned_prior = false;
  // Subtract r(f_t level 0) from the image before the first squeeze (added back on decode).
  // A conditional translation: log-determinant 0. r starts at zero.
  bool base_shift = false;
};

struct LatentShape {
  int64_t channels, height, width;
};

/// z = (z_1, ..., z_L), one tensor per split plus the final block output.
struct LatentCode {
  std::vector<torch::Tensor> parts;

  int64_t batch() const { return parts.empty() ? 0 : parts.front().size(0); }
  /// Elements per sample summed over all parts.
  int64_t elements_per_sample() const;
  /// Concatenation of all parts as [N, D].
  torch::Tensor flatten() const;
  static LatentCode unflatten(const torch::Tensor& flat, const std::vector<LatentShape>& shapes);
  std::vector<LatentShape> shapes() const;
};

struct EncodeResult {
  LatentCode z;
  torch::Tensor logdet;  // [N]
};

/// -log N(z; 0, I) summed per sample, [N].
torch::Tensor standard_normal_nll(const LatentCode& z);

class FlowBlockImpl : public torch::nn::Module {
 public:
  FlowBlockImpl(int64_t channels, int64_t source_channels, bool last, const GeneratorOptions& opt,
                torch::Generator gen);

  torch::Tensor condition(const torch::Tensor& source);
  /// (mu, log_sigma) for the latent part leaving this block. kept is undefined for the last block.
  std::pair<torch::Tensor, torch::Tensor> prior(const torch::Tensor& kept, const torch::Tensor& cond);

  flow::ActNorm transition_norm{nullptr};
  flow::InvConv1x1 transition_mix{nullptr};
  std::vector<flow::FlowStep> steps;
  torch::nn::Conv2d adapter{nullptr};
  torch::nn::Conv2d prior_in{nullptr}, prior_out{nullptr};  // only with learned_prior
};
TORCH_MODULE(FlowBlock);

class ConditionalFlowImpl : public torch::nn::Module {
 public:
  ConditionalFlowImpl(GeneratorOptions options, uint64_t seed);

  /// x: [N, C, H, W] in model range; f_t: conditioning pyramid for the same frame size.
  EncodeResult encode(const torch::Tensor& x, const FeaturePyramid& ft);
  torch::Tensor decode(const LatentCode& z, const FeaturePyramid& ft);
  /// Per-sample negative log-likelihood: -log p_z(z) - log|det dz/dx|, [N].
  torch::Tensor nll(const torch::Tensor& x, const FeaturePyramid& ft);

  std::vector<LatentShape> latent_shapes(int64_t height, int64_t width) const;
  /// Required divisor of the image height and width.
  int64_t size_multiple() const { return int64_t{1} << options_.levels; }

  /// Marks every actnorm as initialised (skips the data-dependent init).
  void mark_actnorm_initialized();
  bool actnorm_initialized();

  const GeneratorOptions& options() const { return options_; }
  std::vector<FlowBlock> blocks;
  torch::nn::Conv2d shift_in{nullptr}, shift_out{nullptr};  // only with base_shift

 private:
  torch::Tensor block_condition(size_t block, const FeaturePyramid& ft);
  torch::Tensor base_offset(const FeaturePyramid& ft);
  void check_image(const torch::Tensor& x) const;

  GeneratorOptions options_;
};
TORCH_MODULE(ConditionalFlow);

/// Every element iid N(0, tau^2). tau = 0 yields the all-zero code.
LatentCode sample_latent(int64_t batch, const std::vector<LatentShape>& shapes, double tau,
                         torch::Generator& gen, torch::TensorOptions options = {});

}  // namespace vfi
