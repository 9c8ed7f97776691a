#include "vfi/generator.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <tuple>

#include "vfi/errors.hpp"

namespace vfi {

int64_t LatentCode::elements_per_sample() const {
  int64_t total = 0;
  for (const auto& p : parts) total += p[0].numel();
  return total;
}

torch::Tensor LatentCode::flatten() const {
  std::vector<torch::Tensor> flat;
  for (const auto& p : parts) flat.push_back(p.reshape({p.size(0), -1}));
  return torch::cat(flat, 1);
}

LatentCode LatentCode::unflatten(const torch::Tensor& flat, const std::vector<LatentShape>& shapes) {
  LatentCode z;
  int64_t offset = 0;
  for (const auto& s : shapes) {
    const int64_t count = s.channels * s.height * s.width;
    if (offset + count > flat.size(1)) throw DimensionError("latent: flat code too short");
    z.parts.push_back(flat.narrow(1, offset, count).reshape({flat.size(0), s.channels, s.height,
                                                             s.width}));
    offset += count;
  }
  if (offset != flat.size(1)) throw DimensionError("latent: flat code too long");
  return z;
}

std::vector<LatentShape> LatentCode::shapes() const {
  std::vector<LatentShape> out;
  for (const auto& p : parts) out.push_back({p.size(1), p.size(2), p.size(3)});
  return out;
}

torch::Tensor standard_normal_nll(const LatentCode& z) {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  torch::Tensor total;
  for (const auto& p : z.parts) {
    const auto term = (0.5 * p.square() + half_log_2pi).sum({1, 2, 3});
    total = total.defined() ? total + term : term;
  }
  return total;
}

FlowBlockImpl::FlowBlockImpl(int64_t channels, int64_t source_channels, bool last,
                             const GeneratorOptions& opt, torch::Generator gen) {
  adapter = register_module("adapter", make_conv(source_channels, opt.cond_width, 3));
  transition_norm = register_module("transition_norm", flow::ActNorm(channels));
  transition_mix = register_module("transition_mix", flow::InvConv1x1(channels, gen));
  for (int k = 0; k < opt.steps; ++k) {
    steps.push_back(register_module("step" + std::to_string(k),
                                    flow::FlowStep(channels, opt.cond_width, opt.hidden, gen)));
  }
  if (opt.learned_prior) {
    const int64_t latent = last ? channels : channels / 2;
    const int64_t in = (last ? 0 : channels - latent) + opt.cond_width;
    prior_in = register_module("prior_in", make_conv(in, opt.hidden, 3));
    prior_out = register_module("prior_out", make_conv(opt.hidden, 2 * latent, 3));
  }
}

std::pair<torch::Tensor, torch::Tensor> FlowBlockImpl::prior(const torch::Tensor& kept,
                                                             const torch::Tensor& cond) {
  auto in = kept.defined() ? torch::cat({kept, cond}, 1) : cond;
  auto out = prior_out->forward(leaky(prior_in->forward(in)));
  auto parts = out.chunk(2, 1);
  // log_sigma bounded to (-3, 3), like the coupling scale
  return {parts[0], 3.0 * torch::tanh(parts[1] / 3.0)};
}

torch::Tensor FlowBlockImpl::condition(const torch::Tensor& source) {
  return leaky(adapter->forward(source));
}

ConditionalFlowImpl::ConditionalFlowImpl(GeneratorOptions options, uint64_t seed)
    : options_(std::move(options)) {
  if (options_.levels < 1) throw ValidationError("generator: need at least one block");
  if (options_.steps < 1) throw ValidationError("generator: need at least one flow step");
  if (options_.cond_channels.empty()) throw ValidationError("generator: empty condition plan");
  auto gen = make_generator(seed);
  int64_t channels = options_.image_channels;
  const int64_t top = static_cast<int64_t>(options_.cond_channels.size()) - 1;
  for (int i = 0; i < options_.levels; ++i) {
    channels *= 4;
    const int64_t source = options_.cond_channels[std::min<int64_t>(i + 1, top)];
    blocks.push_back(register_module("block" + std::to_string(i),
                                     FlowBlock(channels, source, i + 1 == options_.levels,
                                               options_, gen)));
    if (i + 1 < options_.levels) channels /= 2;
  }

  if (options_.base_shift) {
    shift_in = register_module("shift_in", make_conv(options_.cond_channels[0], options_.hidden, 3));
    shift_out = register_module("shift_out", make_conv(options_.hidden, options_.image_channels, 3));
  }

  // Seeded init: fan-in normal weights, zero biases, zero coupling outputs, lambda = eta = 1,
  // identity actnorm. The orthogonal mixing matrices are already drawn from gen.
  torch::NoGradGuard no_grad;
  for (auto& item : named_parameters()) {
    const auto& name = item.key();
    auto& p = item.value();
    const auto ends_with = [&name](std::string_view suffix) {
      return name.size() >= suffix.size() &&
             name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (name.find("mix.weight") != std::string::npos) continue;
    if (ends_with("lambda") || ends_with("eta") || ends_with("norm.scale")) {
      p.fill_(1.0);
    } else if (name.find("coupling.out.") != std::string::npos ||
               name.find("prior_out.") != std::string::npos ||
               name.find("shift_out.") != std::string::npos || p.dim() <= 1) {
      p.zero_();
    } else {
      const int64_t fan_in = p.numel() / p.size(0);
      p.copy_(torch::randn(p.sizes(), gen, torch::dtype(torch::kFloat64)) /
              std::sqrt(static_cast<double>(fan_in)));
    }
  }
}

void ConditionalFlowImpl::check_image(const torch::Tensor& x) const {
  require_nchw(x, "generator input", options_.image_channels);
  if (x.size(2) % size_multiple() != 0 || x.size(3) % size_multiple() != 0) {
    throw DimensionError("generator: image size " + shape_string(x) + " must be divisible by " +
                         std::to_string(size_multiple()));
  }
}

torch::Tensor ConditionalFlowImpl::block_condition(size_t block, const FeaturePyramid& ft) {
  const int64_t top = static_cast<int64_t>(ft.size()) - 1;
  if (top + 1 != static_cast<int64_t>(options_.cond_channels.size())) {
    throw DimensionError("generator: expected " + std::to_string(options_.cond_channels.size()) +
                         " condition levels, got " + std::to_string(ft.size()));
  }
  const int64_t wanted = static_cast<int64_t>(block) + 1;
  const int64_t level = std::min(wanted, top);
  auto source = ft[level];
  if (wanted > level) {
    const int64_t factor = int64_t{1} << (wanted - level);
    source = torch::avg_pool2d(source, {factor, factor});
  }
  return blocks[block]->condition(source);
}

torch::Tensor ConditionalFlowImpl::base_offset(const FeaturePyramid& ft) {
  if (ft.empty()) throw DimensionError("generator: empty condition pyramid");
  return shift_out->forward(leaky(shift_in->forward(ft[0])));
}

EncodeResult ConditionalFlowImpl::encode(const torch::Tensor& x, const FeaturePyramid& ft) {
  check_image(x);
  EncodeResult r;
  auto h = x;
  if (options_.base_shift) {
    const auto offset = base_offset(ft);
    if (offset.sizes() != x.sizes()) {
      throw DimensionError("generator: condition level 0 " + shape_string(ft[0]) +
                           " does not match image " + shape_string(x));
    }
    h = x - offset;
  }
  r.logdet = torch::zeros({x.size(0)}, x.options());
  for (size_t i = 0; i < blocks.size(); ++i) {
    auto& block = blocks[i];
    h = flow::squeeze(h);
    const auto cond = block_condition(i, ft);
    if (cond.size(2) != h.size(2) || cond.size(3) != h.size(3)) {
      throw DimensionError("generator: condition " + shape_string(cond) + " does not match " +
                           shape_string(h));
    }
    auto [a, lda] = block->transition_norm->forward(h);
    auto [b, ldb] = block->transition_mix->forward(a);
    h = b;
    r.logdet = r.logdet + lda + ldb;
    for (auto& step : block->steps) {
      auto [y, ld] = step->forward(h, cond);
      h = y;
      r.logdet = r.logdet + ld;
    }
    torch::Tensor kept, latent = h;
    if (i + 1 < blocks.size()) std::tie(kept, latent) = flow::split(h);
    if (options_.learned_prior) {
      auto [mu, log_sigma] = block->prior(kept, cond);
      latent = (latent - mu) * torch::exp(-log_sigma);
      r.logdet = r.logdet - log_sigma.sum({1, 2, 3});
    }
    r.z.parts.push_back(latent);
    h = kept;
  }
  return r;
}

torch::Tensor ConditionalFlowImpl::decode(const LatentCode& z, const FeaturePyramid& ft) {
  if (z.parts.size() != blocks.size()) {
    throw DimensionError("generator: latent has " + std::to_string(z.parts.size()) +
                         " parts, expected " + std::to_string(blocks.size()));
  }
  for (const auto& p : z.parts) require_finite(p, "generator latent");
  torch::Tensor h;
  for (size_t ii = blocks.size(); ii-- > 0;) {
    auto& block = blocks[ii];
    const bool last = ii + 1 == blocks.size();
    const auto cond = block_condition(ii, ft);
    auto latent = z.parts[ii];
    if (cond.size(2) != latent.size(2) || cond.size(3) != latent.size(3)) {
      throw DimensionError("generator: latent part " + shape_string(latent) +
                           " does not match condition " + shape_string(cond));
    }
    if (options_.learned_prior) {
      auto [mu, log_sigma] = block->prior(last ? torch::Tensor() : h, cond);
      latent = mu + torch::exp(log_sigma) * latent;
    }
    h = last ? latent : flow::unsplit(h, latent);
    for (size_t k = block->steps.size(); k-- > 0;) h = block->steps[k]->inverse(h, cond);
    h = block->transition_norm->inverse(block->transition_mix->inverse(h));
    h = flow::unsqueeze(h);
  }
  if (options_.base_shift) {
    const auto offset = base_offset(ft);
    if (offset.sizes() != h.sizes()) {
      throw DimensionError("generator: condition level 0 " + shape_string(ft[0]) +
                           " does not match latent image size " + shape_string(h));
    }
    h = h + offset;
  }
  return h;
}

torch::Tensor ConditionalFlowImpl::nll(const torch::Tensor& x, const FeaturePyramid& ft) {
  const auto r = encode(x, ft);
  return standard_normal_nll(r.z) - r.logdet;
}

std::vector<LatentShape> ConditionalFlowImpl::latent_shapes(int64_t height, int64_t width) const {
  if (height % size_multiple() != 0 || width % size_multiple() != 0) {
    throw DimensionError("generator: size " + std::to_string(height) + "x" +
                         std::to_string(width) + " must be divisible by " +
                         std::to_string(size_multiple()));
  }
  std::vector<LatentShape> shapes;
  int64_t c = options_.image_channels;
  for (int i = 0; i < options_.levels; ++i) {
    c *= 4;
    height /= 2;
    width /= 2;
    if (i + 1 < options_.levels) {
      shapes.push_back({c / 2, height, width});
      c /= 2;
    }
  }
  shapes.push_back({c, height, width});
  return shapes;
}

void ConditionalFlowImpl::mark_actnorm_initialized() {
  for (auto& m : modules()) {
    if (auto* an = m->as<flow::ActNormImpl>()) an->mark_initialized();
  }
}

bool ConditionalFlowImpl::actnorm_initialized() {
  for (auto& m : modules()) {
    if (auto* an = m->as<flow::ActNormImpl>(); an && !an->initialized()) return false;
  }
  return true;
}

LatentCode sample_latent(int64_t batch, const std::vector<LatentShape>& shapes, double tau,
                         torch::Generator& gen, torch::TensorOptions options) {
  if (!(tau >= 0.0)) throw ValidationError("sample_latent: tau must be >= 0");
  LatentCode z;
  for (const auto& s : shapes) {
    const std::vector<int64_t> size{batch, s.channels, s.height, s.width};
    z.parts.push_back(tau == 0.0 ? torch::zeros(size, options)
                                 : torch::randn(size, gen, options) * tau);
  }
  return z;
}

}  // namespace vfi
