#pragma once

#include <torch/torch.h>

namespace vfi::metrics {

/// 10 log10(1 / MSE) for images in [0, 1]; +infinity when the images are identical.
double psnr(const torch::Tensor& a, const torch::Tensor& b);

/// Structural similarity of [N, C, H, W] images in [0, 1]. Three-channel inputs are reduced to
/// BT.601 luma (0.299 R + 0.587 G + 0.114 B) first; single-channel inputs are used as is.
/// 11x11 Gaussian window (sigma 1.5) evaluated on valid positions only, C1 = (0.01)^2,
/// C2 = (0.03)^2; the result is the mean SSIM map over all positions and images.
double ssim(const torch::Tensor& a, const torch::Tensor& b);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

}  // namespace vfi::metrics
