#include "vfi/errors.hpp"

#include <sstream>

namespace vfi {

std::string shape_string(const torch::Tensor& t) {
  std::ostringstream os;
  os << t.sizes();
  return os.str();
}

void require_finite(const torch::Tensor& t, std::string_view what) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw ValidationError(std::string(what) + ": contains non-finite values");
  }
}

void require_nchw(const torch::Tensor& t, std::string_view what, int64_t channels) {
  if (t.dim() != 4) {
    throw DimensionError(std::string(what) + ": expected NCHW tensor, got " + shape_string(t));
  }
  if (channels >= 0 && t.size(1) != channels) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(channels) +
                         " channels, got " + shape_string(t));
  }
}

void require_same_spatial(const torch::Tensor& a, const torch::Tensor& b, std::string_view what) {
  if (a.size(0) != b.size(0) || a.size(2) != b.size(2) || a.size(3) != b.size(3)) {
    throw DimensionError(std::string(what) + ": batch/spatial mismatch " + shape_string(a) +
                         " vs " + shape_string(b));
  }
}

}  // namespace vfi
