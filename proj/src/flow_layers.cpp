#include "vfi/flow_layers.hpp"

#include <cmath>
#include <string>

#include "vfi/errors.hpp"
#include "vfi/nn_util.hpp"

namespace vfi::flow {

using torch::indexing::Slice;

torch::Tensor squeeze(const torch::Tensor& h) {
  require_nchw(h, "squeeze");
  const int64_t n = h.size(0), c = h.size(1), hh = h.size(2), w = h.size(3);
  if (hh % 2 != 0 || w % 2 != 0) {
    throw DimensionError("squeeze: spatial size must be even, got " + shape_string(h));
  }
  return h.reshape({n, c, hh / 2, 2, w / 2, 2})
      .permute({0, 1, 3, 5, 2, 4})
      .reshape({n, c * 4, hh / 2, w / 2});
}

torch::Tensor unsqueeze(const torch::Tensor& h) {
  require_nchw(h, "unsqueeze");
  const int64_t n = h.size(0), c = h.size(1), hh = h.size(2), w = h.size(3);
  if (c % 4 != 0) throw DimensionError("unsqueeze: channels must be a multiple of 4");
  return h.reshape({n, c / 4, 2, 2, hh, w})
      .permute({0, 1, 4, 2, 5, 3})
      .reshape({n, c / 4, hh * 2, w * 2});
}

std::pair<torch::Tensor, torch::Tensor> split(const torch::Tensor& h) {
  require_nchw(h, "split");
  const int64_t c = h.size(1);
  if (c % 2 != 0) throw DimensionError("split: channel count must be even, got " + shape_string(h));
  return {h.index({Slice(), Slice(0, c / 2)}), h.index({Slice(), Slice(c / 2, c)})};
}

torch::Tensor unsplit(const torch::Tensor& kept, const torch::Tensor& latent) {
  if (kept.sizes() != latent.sizes()) {
    throw DimensionError("unsplit: " + shape_string(kept) + " vs " + shape_string(latent));
  }
  return torch::cat({kept, latent}, 1);
}

// ---------------------------------------------------------------------------------------------

ActNormImpl::ActNormImpl(int64_t channels) {
  scale = register_parameter("scale", torch::ones({channels}));
  bias = register_parameter("bias", torch::zeros({channels}));
  initialized_ = register_buffer("initialized", torch::zeros({1}));
}

bool ActNormImpl::initialized() const { return initialized_.item<double>() != 0.0; }

void ActNormImpl::mark_initialized() {
  torch::NoGradGuard no_grad;
  initialized_.fill_(1.0);
}

void ActNormImpl::initialize_from(const torch::Tensor& h) {
  torch::NoGradGuard no_grad;
  const auto data = h.detach().transpose(0, 1).reshape({h.size(1), -1});
  const auto mean = data.mean(1);
  const auto std = data.std(1, /*unbiased=*/false);
  bias.copy_(-mean);
  scale.copy_(1.0 / (std + 1e-6));
  mark_initialized();
}

void ActNormImpl::check_scale() const {
  if ((scale == 0).any().item<bool>()) throw NumericalError("actnorm: zero scale");
}

FlowResult ActNormImpl::forward(const torch::Tensor& h) {
  require_nchw(h, "actnorm", scale.size(0));
  if (!initialized() && is_training()) initialize_from(h);
  check_scale();
  const auto s = scale.view({1, -1, 1, 1});
  const auto b = bias.view({1, -1, 1, 1});
  const double pixels = static_cast<double>(h.size(2) * h.size(3));
  const auto logdet = (pixels * scale.abs().log().sum()).expand({h.size(0)});
  return {s * (h + b), logdet};
}

torch::Tensor ActNormImpl::inverse(const torch::Tensor& y) {
  require_nchw(y, "actnorm inverse", scale.size(0));
  check_scale();
  return y / scale.view({1, -1, 1, 1}) - bias.view({1, -1, 1, 1});
}

// ---------------------------------------------------------------------------------------------

InvConv1x1Impl::InvConv1x1Impl(int64_t channels, torch::Generator gen) {
  const auto draw = torch::randn({channels, channels}, gen, torch::dtype(torch::kFloat64));
  const auto q = std::get<0>(torch::linalg_qr(draw));
  weight = register_parameter("weight", q.to(torch::kFloat32).contiguous());
}

torch::Tensor InvConv1x1Impl::log_abs_det() const {
  auto logabs = std::get<1>(torch::linalg_slogdet(weight));
  if (!(logabs.item<double>() > std::log(kMinAbsDet))) {
    throw NumericalError("inv_conv1x1: mixing matrix is singular (|det| <= 1e-12)");
  }
  return logabs;
}

FlowResult InvConv1x1Impl::forward(const torch::Tensor& h) {
  require_nchw(h, "inv_conv1x1", weight.size(0));
  const auto logabs = log_abs_det();
  const double pixels = static_cast<double>(h.size(2) * h.size(3));
  const auto y = torch::matmul(weight, h.flatten(2)).view_as(h);
  return {y, (pixels * logabs).expand({h.size(0)})};
}

torch::Tensor InvConv1x1Impl::inverse(const torch::Tensor& y) {
  require_nchw(y, "inv_conv1x1 inverse", weight.size(0));
  log_abs_det();
  return torch::matmul(torch::linalg_inv(weight), y.flatten(2)).view_as(y);
}

// ---------------------------------------------------------------------------------------------

AffineCouplingImpl::AffineCouplingImpl(int64_t channels, int64_t cond_channels, int64_t hidden_width)
    : channels_(channels), kept_(channels / 2) {
  if (channels < 2) throw DimensionError("affine_coupling: needs at least 2 channels");
  const int64_t transformed = channels_ - kept_;
  lambda = register_parameter("lambda", torch::ones({1}));
  eta = register_parameter("eta", torch::ones({1}));
  hidden = register_module("hidden", make_conv(kept_ + cond_channels, hidden_width, 3));
  out = register_module("out", make_conv(hidden_width, 2 * transformed, 3));
  torch::NoGradGuard no_grad;
  out->weight.zero_();
  out->bias.zero_();
}

AffineCouplingImpl::Coefficients AffineCouplingImpl::coefficients(const torch::Tensor& kept,
                                                                  const torch::Tensor& cond) {
  const int64_t transformed = channels_ - kept_;
  const auto input = cond.defined() ? torch::cat({kept, cond}, 1) : kept;
  const auto o = out->forward(leaky(hidden->forward(input)));
  return {torch::tanh(o.index({Slice(), Slice(0, transformed)})),
          o.index({Slice(), Slice(transformed, 2 * transformed)})};
}

FlowResult AffineCouplingImpl::forward(const torch::Tensor& h, const torch::Tensor& cond) {
  require_nchw(h, "affine_coupling", channels_);
  if (cond.defined()) require_same_spatial(h, cond, "affine_coupling condition");
  const auto a = h.index({Slice(), Slice(0, kept_)});
  const auto b = h.index({Slice(), Slice(kept_, channels_)});
  const auto co = coefficients(a, cond);
  const auto log_scale = lambda * co.tanh_scale + eta;
  const auto b_out = torch::exp(log_scale) * b + co.shift;
  const double elements = static_cast<double>(b[0].numel());
  const auto logdet = lambda * co.tanh_scale.sum({1, 2, 3}) + elements * eta;
  return {torch::cat({a, b_out}, 1), logdet};
}

torch::Tensor AffineCouplingImpl::inverse(const torch::Tensor& y, const torch::Tensor& cond) {
  require_nchw(y, "affine_coupling inverse", channels_);
  if (cond.defined()) require_same_spatial(y, cond, "affine_coupling condition");
  const auto a = y.index({Slice(), Slice(0, kept_)});
  const auto b_out = y.index({Slice(), Slice(kept_, channels_)});
  const auto co = coefficients(a, cond);
  const auto b = (b_out - co.shift) * torch::exp(-(lambda * co.tanh_scale + eta));
  return torch::cat({a, b}, 1);
}

// ---------------------------------------------------------------------------------------------

FlowStepImpl::FlowStepImpl(int64_t channels, int64_t cond_channels, int64_t hidden,
                           torch::Generator gen) {
  norm = register_module("norm", ActNorm(channels));
  mix = register_module("mix", InvConv1x1(channels, gen));
  coupling = register_module("coupling", AffineCoupling(channels, cond_channels, hidden));
}

FlowResult FlowStepImpl::forward(const torch::Tensor& h, const torch::Tensor& cond) {
  auto [x1, ld1] = norm->forward(h);
  auto [x2, ld2] = mix->forward(x1);
  auto [x3, ld3] = coupling->forward(x2, cond);
  return {x3, ld1 + ld2 + ld3};
}

torch::Tensor FlowStepImpl::inverse(const torch::Tensor& y, const torch::Tensor& cond) {
  return norm->inverse(mix->inverse(coupling->inverse(y, cond)));
}

}  // namespace vfi::flow
