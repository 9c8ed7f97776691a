#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "vfi/blending.hpp"
#include "vfi/encoder.hpp"
#include "vfi/generator.hpp"

namespace vfi {

/// Structural schedule of the whole interpolator; stored in checkpoints.
struct ModelConfig {
  std::vector<int64_t> channels{32, 64, 96};
  int flow_levels = 3;
  int flow_steps = 4;
  int64_t cond_width = 32;
  int64_t coupling_hidden = 64;
  uint64_t seed = 0;
  AttentionNorm attention = AttentionNorm::Sigmoid;
  double beta = 2.0;
  double train_alpha = 1e-3;
  bool learned_prior = false;
  bool base_shift = false;

  BlendOptions blend_options() const;
  GeneratorOptions generator_options() const;
  /// Height and width must be multiples of this.
  int64_t size_multiple() const;
};

/// Images are [N, 3, H, W] in [0, 1]; the flow works on x - 0.5.
inline torch::Tensor to_model_range(const torch::Tensor& image) { return image - 0.5; }
inline torch::Tensor from_model_range(const torch::Tensor& x) { return x + 0.5; }

/// Encoder, blending module and conditional flow wired together.
class InterpolatorImpl : public torch::nn::Module {
 public:
  explicit InterpolatorImpl(ModelConfig config);

  /// Builds f_t for target time t from the two frames and their (constant) flows.
  BlendOutput condition(const torch::Tensor& frame0, const torch::Tensor& frame1,
                        const torch::Tensor& flow01, const torch::Tensor& flow10, double t,
                        bool training, std::optional<torch::Generator> gen = std::nullopt);

  /// Samples z with temperature tau and decodes it; result clamped to [0, 1].
  torch::Tensor interpolate(const torch::Tensor& frame0, const torch::Tensor& frame1,
                            const torch::Tensor& flow01, const torch::Tensor& flow10, double t,
                            double tau, torch::Generator& gen);

  /// Throws DimensionError naming the required divisor when the frame size does not fit.
  void check_frame_size(int64_t height, int64_t width) const;

  const ModelConfig& config() const { return config_; }

  FeatureEncoder encoder{nullptr};
  BlendingModule blending{nullptr};
  ConditionalFlow generator{nullptr};

 private:
  ModelConfig config_;
};
TORCH_MODULE(Interpolator);

/// 0.5/0.5 blend of both frames backward-warped to time t with the linearly approximated
/// intermediate flows F_t0 = -t(1-t) F01 + t^2 F10 and F_t1 = (1-t)^2 F01 - t(1-t) F10.
torch::Tensor warped_blend_baseline(const torch::Tensor& frame0, const torch::Tensor& frame1,
                                    const torch::Tensor& flow01, const torch::Tensor& flow10,
                                    double t);

}  // namespace vfi
