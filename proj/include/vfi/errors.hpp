#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <torch/torch.h>

namespace vfi {

/// Tensor shapes or spatial sizes that do not fit together.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument values outside their admissible range (non-finite data, bad t, eps <= 0, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed files: bad magic, truncated payloads, unknown versions.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Missing or unreadable files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Singular or otherwise numerically unusable parameters, divergent losses.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string shape_string(const torch::Tensor& t);

void require_finite(const torch::Tensor& t, std::string_view what);

// Expects a 4-d NCHW tensor; channels < 0 means "any".
void require_nchw(const torch::Tensor& t, std::string_view what, int64_t channels = -1);

void require_same_spatial(const torch::Tensor& a, const torch::Tensor& b, std::string_view what);

}  // namespace vfi
