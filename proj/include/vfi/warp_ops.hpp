#pragma once

// Differentiable warping primitives on NCHW tensors.
//
// Layout conventions used throughout the library:
//   feature grids  [N, C, H, W]
//   flow fields    [N, 2, H, W], channel 0 horizontal, channel 1 vertical, in pixels
//   masks / Z      [N, 1, H, W]
//
// Bilinear footprints use the four integer neighbours of a (sub-pixel) position.
// Samples and deposits that fall outside the frame are dropped (zero padding).

#include <torch/torch.h>

namespace vfi::warp {

inline constexpr double kDivisionEpsilon = 1e-8;
inline constexpr double kOcclusionEpsilon = 0.5;

/// Gather: out(x) = bilinear sample of src at x + flow(x).
torch::Tensor backward_warp(const torch::Tensor& src, const torch::Tensor& flow);

/// Scatter each source pixel to the bilinear neighbours of x + flow(x) and normalise by the
/// deposited weight. Targets whose weight sum is below kDivisionEpsilon are 0.
torch::Tensor forward_splat_avg(const torch::Tensor& src, const torch::Tensor& flow);

/// Softmax splatting: deposits of x + t*flow(x) are weighted by exp(Z). The exponent is shifted by
/// the per-target maximum of the incoming Z values, which cancels in the ratio.
torch::Tensor forward_splat_softmax(const torch::Tensor& src, double t, const torch::Tensor& flow,
                                    const torch::Tensor& importance);

/// Raw deposited-weight sum of splatting an all-ones grid by `flow` (no normalisation). [N,1,H,W]
torch::Tensor splat_density(const torch::Tensor& flow);

/// Area-average the flow by 2^level and scale its displacements by 2^-level.
torch::Tensor rescale_flow(const torch::Tensor& flow, int level);

/// Area-average a non-displacement map (importance metric, mask) by 2^level; values untouched.
torch::Tensor downscale_map(const torch::Tensor& map, int level);

/// 1 where splat_density(t * flow) < eps, else 0.
torch::Tensor binary_occlusion_mask(const torch::Tensor& flow, double t,
                                    double eps = kOcclusionEpsilon);

}  // namespace vfi::warp
