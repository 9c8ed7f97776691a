#pragma once

// Invertible layers of the conditional flow. Every layer maps [N, C, H, W] tensors and reports its
// log-determinant per sample as an [N] tensor.

#include <cstdint>
#include <utility>

#include <torch/torch.h>

namespace vfi::flow {

/// (output, log|det J| per sample)
using FlowResult = std::pair<torch::Tensor, torch::Tensor>;

/// 2x2 space-to-depth: [N, C, H, W] -> [N, 4C, H/2, W/2]. Volume preserving.
torch::Tensor squeeze(const torch::Tensor& h);
torch::Tensor unsqueeze(const torch::Tensor& h);

/// Channel halving: keeps the first C/2 channels, emits the rest as a latent component.
std::pair<torch::Tensor, torch::Tensor> split(const torch::Tensor& h);
torch::Tensor unsplit(const torch::Tensor& kept, const torch::Tensor& latent);

/// Per-channel affine normalisation h' = s * (h + b).
/// While uninitialised and in training mode, the first forward pass sets b = -mean and
/// s = 1 / (std + 1e-6) from the incoming batch.
class ActNormImpl : public torch::nn::Module {
 public:
  explicit ActNormImpl(int64_t channels);

  FlowResult forward(const torch::Tensor& h);
  torch::Tensor inverse(const torch::Tensor& y);

  void initialize_from(const torch::Tensor& h);
  bool initialized() const;
  void mark_initialized();

  torch::Tensor scale;
  torch::Tensor bias;

 private:
  void check_scale() const;
  torch::Tensor initialized_;
};
TORCH_MODULE(ActNorm);

/// Invertible channel mixing with a full C x C matrix, applied at every pixel.
class InvConv1x1Impl : public torch::nn::Module {
 public:
  /// Starts from a random orthogonal matrix drawn from gen.
  InvConv1x1Impl(int64_t channels, torch::Generator gen);

  FlowResult forward(const torch::Tensor& h);
  torch::Tensor inverse(const torch::Tensor& y);

  torch::Tensor weight;

  static constexpr double kMinAbsDet = 1e-12;

 private:
  torch::Tensor log_abs_det() const;
};
TORCH_MODULE(InvConv1x1);

/// Conditional affine coupling with a bounded log-scale:
///   b' = exp(lambda * tanh(s(a; c)) + eta) * b + t(a; c),  a' = a.
/// s and t share one two-layer 3x3 trunk whose last convolution starts at zero.
class AffineCouplingImpl : public torch::nn::Module {
 public:
  AffineCouplingImpl(int64_t channels, int64_t cond_channels, int64_t hidden);

  FlowResult forward(const torch::Tensor& h, const torch::Tensor& cond);
  torch::Tensor inverse(const torch::Tensor& y, const torch::Tensor& cond);

  struct Coefficients {
    torch::Tensor tanh_scale;  // tanh(s(a; c)), [N, C_b, H, W]
    torch::Tensor shift;       // t(a; c)
  };
  Coefficients coefficients(const torch::Tensor& kept, const torch::Tensor& cond);

  int64_t kept_channels() const { return kept_; }

  torch::Tensor lambda;
  torch::Tensor eta;
  torch::nn::Conv2d hidden{nullptr};
  torch::nn::Conv2d out{nullptr};

 private:
  int64_t channels_;
  int64_t kept_;
};
TORCH_MODULE(AffineCoupling);

/// actnorm -> invertible 1x1 -> affine coupling
class FlowStepImpl : public torch::nn::Module {
 public:
  FlowStepImpl(int64_t channels, int64_t cond_channels, int64_t hidden, torch::Generator gen);

  FlowResult forward(const torch::Tensor& h, const torch::Tensor& cond);
  torch::Tensor inverse(const torch::Tensor& y, const torch::Tensor& cond);

  ActNorm norm{nullptr};
  InvConv1x1 mix{nullptr};
  AffineCoupling coupling{nullptr};
};
TORCH_MODULE(FlowStep);

}  // namespace vfi::flow
