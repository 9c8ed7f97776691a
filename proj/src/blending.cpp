#include "vfi/blending.hpp"

#include <string>

#include "vfi/errors.hpp"
#include "vfi/warp_ops.hpp"

namespace vfi {

namespace F = torch::nn::functional;
using torch::indexing::Slice;

ImportanceNetImpl::ImportanceNetImpl(int64_t feature_channels, int64_t hidden) {
  body_ = register_module("body", make_conv(feature_channels + 1, hidden, 3));
  head = register_module("head", make_conv(hidden, 1, 3));
}

torch::Tensor ImportanceNetImpl::forward(const torch::Tensor& f0, const torch::Tensor& f1,
                                         const torch::Tensor& flow01) {
  require_nchw(f0, "importance f0");
  require_nchw(f1, "importance f1", f0.size(1));
  require_same_spatial(f0, f1, "importance features");
  const auto residual = (f0 - warp::backward_warp(f1, flow01)).abs().sum(1, true);
  return head->forward(leaky(body_->forward(torch::cat({f0, -residual}, 1))));
}

OffsetRefinerImpl::OffsetRefinerImpl(int64_t feature_channels, int64_t hidden, int64_t points)
    : points_(points) {
  body_ = register_module("body", make_conv(2 * feature_channels + 2, hidden, 3));
  head_ = register_module("head", make_conv(hidden, 3 * points, 3));
}

OffsetRefinerImpl::Result OffsetRefinerImpl::forward(const torch::Tensor& prior,
                                                     const torch::Tensor& f1,
                                                     const torch::Tensor& ft0) {
  const int64_t n = f1.size(0), c = f1.size(1), h = f1.size(2), w = f1.size(3);
  const int64_t k = points_;
  const auto guide = warp::backward_warp(f1, prior);
  const auto out = head_->forward(leaky(body_->forward(torch::cat({guide, ft0, prior}, 1))));
  const auto deltas = out.index({Slice(), Slice(0, 2 * k)}).view({n, k, 2, h, w});
  const auto gates = torch::softmax(out.index({Slice(), Slice(2 * k, 3 * k)}), 1)
                         .view({n, k, 1, h, w});

  const auto flows = (prior.unsqueeze(1) + deltas).reshape({n * k, 2, h, w});
  const auto sources = f1.unsqueeze(1).expand({n, k, c, h, w}).reshape({n * k, c, h, w});
  const auto samples = warp::backward_warp(sources, flows).view({n, k, c, h, w});

  Result r;
  r.aligned = (samples * gates).sum(1);
  r.residual = (deltas * gates).sum(1);
  return r;
}

AlignmentNetImpl::AlignmentNetImpl(const std::vector<int64_t>& channels, int64_t hidden,
                                   int64_t points) {
  for (size_t l = 0; l < channels.size(); ++l) {
    levels_.push_back(register_module("level" + std::to_string(l),
                                      OffsetRefiner(channels[l], hidden, points)));
  }
}

FeaturePyramid AlignmentNetImpl::forward(const torch::Tensor& offset, const FeaturePyramid& f1,
                                         const FeaturePyramid& ft0) {
  const int levels = static_cast<int>(levels_.size());
  if (static_cast<int>(f1.size()) != levels || static_cast<int>(ft0.size()) != levels) {
    throw DimensionError("aligner: expected " + std::to_string(levels) + " pyramid levels, got " +
                         std::to_string(f1.size()) + " and " + std::to_string(ft0.size()));
  }
  FeaturePyramid aligned(levels);
  torch::Tensor carried;  // accumulated correction, already at the current level's scale
  for (int l = levels - 1; l >= 0; --l) {
    auto prior = warp::rescale_flow(offset, l);
    if (carried.defined()) prior = prior + carried;
    auto r = levels_[l]->forward(prior, f1[l], ft0[l]);
    aligned[l] = r.aligned;
    if (l > 0) {
      const auto correction = carried.defined() ? carried + r.residual : r.residual;
      carried = 2.0 * F::interpolate(correction, F::InterpolateFuncOptions()
                                                     .scale_factor(std::vector<double>{2.0, 2.0})
                                                     .mode(torch::kBilinear)
                                                     .align_corners(false));
    }
  }
  return aligned;
}

DilationNetImpl::DilationNetImpl(int64_t feature_channels, int64_t channels,
                                 int64_t attention_hidden, AttentionNorm norm)
    : norm_(norm) {
  expand1_ = register_module("expand1", make_conv(1, channels, 7, 1, 2, false));
  expand2_ = register_module("expand2", make_conv(channels, channels, 3, 1, 2, false));
  expand3_ = register_module("expand3", make_conv(channels, channels, 1, 1, 1, false));
  squeeze_ = register_module("squeeze", torch::nn::Linear(2 * feature_channels, attention_hidden));
  excite_ = register_module("excite", torch::nn::Linear(attention_hidden, channels));
  project_ = register_module("project", make_conv(channels, 1, 1, 1, 1, false));
}

torch::Tensor DilationNetImpl::attention(const torch::Tensor& ft0, const torch::Tensor& ft1) {
  const auto pooled = torch::cat({ft0.mean({2, 3}), ft1.mean({2, 3})}, 1);
  const auto logits = excite_->forward(torch::relu(squeeze_->forward(pooled)));
  return norm_ == AttentionNorm::Sigmoid ? torch::sigmoid(logits) : torch::softmax(logits, 1);
}

torch::Tensor DilationNetImpl::forward(const torch::Tensor& binary_mask, const torch::Tensor& ft0,
                                       const torch::Tensor& ft1) {
  require_nchw(binary_mask, "dilation mask", 1);
  require_same_spatial(binary_mask, ft0, "dilation mask/features");
  require_same_spatial(ft0, ft1, "dilation features");
  auto e = leaky(expand1_->forward(binary_mask));
  e = leaky(expand2_->forward(e));
  e = expand3_->forward(e);
  const auto a = attention(ft0, ft1);
  return project_->forward(e * a.unsqueeze(-1).unsqueeze(-1));
}

torch::Tensor time_scaled_back_flow(const torch::Tensor& flow10, double t) {
  require_nchw(flow10, "time_scaled_back_flow", 2);
  require_finite(flow10, "time_scaled_back_flow");
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("time_scaled_back_flow: t outside [0, 1]");
  return flow10 * (1.0 - t);
}

torch::Tensor init_alignment_offset(const torch::Tensor& flow1t) {
  return -warp::forward_splat_avg(flow1t, flow1t);
}

FeaturePyramid forward_warp_pyramid(const FeaturePyramid& f0, double t, const torch::Tensor& flow01,
                                    const torch::Tensor& importance) {
  if (!(t > 0.0 && t < 1.0)) {
    throw ValidationError("forward_warp_pyramid: t must lie in (0, 1), got " + std::to_string(t));
  }
  FeaturePyramid out;
  for (size_t l = 0; l < f0.size(); ++l) {
    const int level = static_cast<int>(l);
    out.push_back(warp::forward_splat_softmax(f0[l], t, warp::rescale_flow(flow01, level),
                                              warp::downscale_map(importance, level)));
  }
  return out;
}

torch::Tensor quasi_binary_mask(const torch::Tensor& mask_logits, const torch::Tensor& binary_mask,
                                double alpha, double beta, std::optional<torch::Generator> gen) {
  require_nchw(mask_logits, "quasi_binary_mask logits", 1);
  if (mask_logits.sizes() != binary_mask.sizes()) {
    throw DimensionError("quasi_binary_mask: logits " + shape_string(mask_logits) +
                         " vs mask " + shape_string(binary_mask));
  }
  auto arg = mask_logits;
  if (alpha != 0.0) {
    if (!gen) throw ValidationError("quasi_binary_mask: training noise requires a generator");
    const auto noise = torch::rand(mask_logits.sizes(), *gen, mask_logits.options()) * 2.0 - 1.0;
    arg = arg + alpha * noise;
  }
  return torch::tanh(arg.abs() + beta * binary_mask);
}

FeaturePyramid blend_pyramid(const FeaturePyramid& ft0, const FeaturePyramid& ft1,
                             const std::vector<torch::Tensor>& masks) {
  if (ft0.size() != ft1.size() || ft0.size() != masks.size()) {
    throw DimensionError("blend_pyramid: level counts differ");
  }
  FeaturePyramid out;
  for (size_t l = 0; l < ft0.size(); ++l) {
    if (ft0[l].sizes() != ft1[l].sizes()) {
      throw DimensionError("blend_pyramid: level " + std::to_string(l) + " shapes " +
                           shape_string(ft0[l]) + " vs " + shape_string(ft1[l]));
    }
    require_nchw(masks[l], "blend_pyramid mask", 1);
    require_same_spatial(ft0[l], masks[l], "blend_pyramid mask");
    out.push_back(ft0[l] * (1.0 - masks[l]) + ft1[l] * masks[l]);
  }
  return out;
}

BlendingModuleImpl::BlendingModuleImpl(BlendOptions options) : options_(std::move(options)) {
  const auto& ch = options_.channels;
  if (ch.empty()) throw ValidationError("blending: empty channel plan");
  importance = register_module("importance", ImportanceNet(ch[0], options_.importance_hidden));
  aligner = register_module(
      "aligner", AlignmentNet(ch, options_.offset_hidden, options_.sample_points));
  for (size_t l = 0; l < ch.size(); ++l) {
    dilation.push_back(register_module(
        "dilation" + std::to_string(l),
        DilationNet(ch[l], options_.dilation_channels, options_.attention_hidden,
                    options_.attention)));
  }
}

BlendOutput BlendingModuleImpl::forward(double t, const FeaturePyramid& f0,
                                        const FeaturePyramid& f1, const torch::Tensor& flow01,
                                        const torch::Tensor& flow10, bool training,
                                        std::optional<torch::Generator> gen) {
  const size_t levels = options_.channels.size();
  if (f0.size() != levels || f1.size() != levels) {
    throw DimensionError("blending: expected " + std::to_string(levels) + " pyramid levels");
  }
  require_nchw(flow01, "blending flow01", 2);
  require_same_spatial(f0[0], flow01, "blending flow01");
  require_same_spatial(f0[0], flow10, "blending flow10");

  BlendOutput out;
  out.importance = importance->forward(f0[0], f1[0], flow01);
  out.warped0 = forward_warp_pyramid(f0, t, flow01, out.importance);
  const auto offset = init_alignment_offset(time_scaled_back_flow(flow10, t));
  out.aligned1 = aligner->forward(offset, f1, out.warped0);

  const double alpha = training ? options_.train_alpha : 0.0;
  for (size_t l = 0; l < levels; ++l) {
    const int level = static_cast<int>(l);
    auto mb = warp::binary_occlusion_mask(warp::rescale_flow(flow01, level), t,
                                          options_.occlusion_eps);
    auto logits = dilation[l]->forward(mb, out.warped0[l], out.aligned1[l]);
    out.quasi_masks.push_back(quasi_binary_mask(logits, mb, alpha, options_.beta, gen));
    out.binary_masks.push_back(std::move(mb));
    out.mask_logits.push_back(std::move(logits));
  }
  out.blended = blend_pyramid(out.warped0, out.aligned1, out.quasi_masks);
  return out;
}

BlendingModule init_blending(uint64_t seed, BlendOptions options) {
  BlendingModule m(std::move(options));
  init_fan_in(*m, seed);
  torch::NoGradGuard no_grad;
  for (auto& item : m->named_parameters()) {
    const auto& name = item.key();
    if (name.find("aligner.") == 0 && name.find(".head.") != std::string::npos) {
      item.value().zero_();
    }
  }
  return m;
}

}  // namespace vfi
