#pragma once

#include <string>

#include <torch/torch.h>

namespace vfi::io {

/// Middlebury .flo tag: the float 202021.25, stored as the bytes "PIEH".
inline constexpr float kFlowMagic = 202021.25f;

/// Reads a Middlebury flow file into a [1, 2, H, W] float tensor.
/// Layout: float32 magic, int32 width, int32 height, then H*W interleaved (u, v) float32 pairs in
/// row-major order, all little-endian. Throws IoError / FormatError.
torch::Tensor read_flow_file(const std::string& path);

/// Writes a [1, 2, H, W] (or [2, H, W]) flow field in the same layout.
void write_flow_file(const std::string& path, const torch::Tensor& flow);

/// 8-bit PNG -> [1, 3, H, W] float32 with values v / 255.
torch::Tensor read_png(const std::string& path);

/// [1, 3, H, W] in [0, 1] -> 8-bit RGB PNG, round(clamp(v) * 255).
void write_png(const std::string& path, const torch::Tensor& image);

}  // namespace vfi::io
