#include "vfi/model.hpp"

#include <string>

#include "vfi/errors.hpp"
#include "vfi/warp_ops.hpp"

namespace vfi {

BlendOptions ModelConfig::blend_options() const {
  BlendOptions o;
  o.channels = channels;
  o.attention = attention;
  o.beta = beta;
  o.train_alpha = train_alpha;
  return o;
}

GeneratorOptions ModelConfig::generator_options() const {
  GeneratorOptions o;
  o.levels = flow_levels;
  o.steps = flow_steps;
  o.cond_channels = channels;
  o.cond_width = cond_width;
  o.hidden = coupling_hidden;
  o.learned_prior = learned_prior;
  o.base_shift = base_shift;
  return o;
}

int64_t ModelConfig::size_multiple() const {
  const int64_t pyramid = int64_t{1} << (channels.size() - 1);
  const int64_t flow = int64_t{1} << flow_levels;
  return std::max(pyramid, flow);
}

InterpolatorImpl::InterpolatorImpl(ModelConfig config) : config_(std::move(config)) {
  encoder = register_module("encoder", init_encoder(mix_seed(config_.seed, 1), config_.channels));
  blending = register_module("blending",
                             init_blending(mix_seed(config_.seed, 2), config_.blend_options()));
  generator = register_module(
      "generator", ConditionalFlow(config_.generator_options(), mix_seed(config_.seed, 3)));
}

void InterpolatorImpl::check_frame_size(int64_t height, int64_t width) const {
  const int64_t m = config_.size_multiple();
  if (height % m != 0 || width % m != 0) {
    throw DimensionError("frame size " + std::to_string(width) + "x" + std::to_string(height) +
                         " is not supported: width and height must be divisible by " +
                         std::to_string(m));
  }
}

BlendOutput InterpolatorImpl::condition(const torch::Tensor& frame0, const torch::Tensor& frame1,
                                        const torch::Tensor& flow01, const torch::Tensor& flow10,
                                        double t, bool training,
                                        std::optional<torch::Generator> gen) {
  require_nchw(frame0, "frame0", 3);
  if (frame0.sizes() != frame1.sizes()) {
    throw DimensionError("frames differ in shape: " + shape_string(frame0) + " vs " +
                         shape_string(frame1));
  }
  check_frame_size(frame0.size(2), frame0.size(3));
  const int64_t n = frame0.size(0);
  // One encoder pass over both frames.
  auto both = encoder->forward(torch::cat({to_model_range(frame0), to_model_range(frame1)}, 0));
  FeaturePyramid f0, f1;
  for (auto& level : both) {
    f0.push_back(level.narrow(0, 0, n));
    f1.push_back(level.narrow(0, n, n));
  }
  return blending->forward(t, f0, f1, flow01.detach(), flow10.detach(), training, gen);
}

torch::Tensor InterpolatorImpl::interpolate(const torch::Tensor& frame0,
                                            const torch::Tensor& frame1,
                                            const torch::Tensor& flow01,
                                            const torch::Tensor& flow10, double t, double tau,
                                            torch::Generator& gen) {
  const auto cond = condition(frame0, frame1, flow01, flow10, t, /*training=*/false);
  const auto shapes = generator->latent_shapes(frame0.size(2), frame0.size(3));
  const auto z = sample_latent(frame0.size(0), shapes, tau, gen, frame0.options());
  return from_model_range(generator->decode(z, cond.blended)).clamp(0.0, 1.0);
}

torch::Tensor warped_blend_baseline(const torch::Tensor& frame0, const torch::Tensor& frame1,
                                    const torch::Tensor& flow01, const torch::Tensor& flow10,
                                    double t) {
  const auto ft0 = -t * (1 - t) * flow01 + t * t * flow10;
  const auto ft1 = (1 - t) * (1 - t) * flow01 - t * (1 - t) * flow10;
  return 0.5 * warp::backward_warp(frame0, ft0) + 0.5 * warp::backward_warp(frame1, ft1);
}

}  // namespace vfi
