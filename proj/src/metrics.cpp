#include "vfi/metrics.hpp"

#include <cmath>
#include <limits>

#include "vfi/errors.hpp"

namespace vfi::metrics {
namespace {

void check_pair(const torch::Tensor& a, const torch::Tensor& b, const char* op) {
  if (a.sizes() != b.sizes()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
  }
}

torch::Tensor luma(const torch::Tensor& img) {
  require_nchw(img, "ssim input");
  const auto x = img.to(torch::kFloat64);
  if (x.size(1) == 1) return x;
  if (x.size(1) != 3) throw DimensionError("ssim: expected 1 or 3 channels, got " + shape_string(img));
  return 0.299 * x.narrow(1, 0, 1) + 0.587 * x.narrow(1, 1, 1) + 0.114 * x.narrow(1, 2, 1);
}

torch::Tensor gaussian_window() {
  auto g = torch::empty({kSsimWindow}, torch::kFloat64);
  const int r = kSsimWindow / 2;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - r;
    g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
  }
  g /= g.sum();
  return torch::outer(g, g).view({1, 1, kSsimWindow, kSsimWindow});
}

}  // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
  check_pair(a, b, "psnr");
  const double mse = (a.to(torch::kFloat64) - b.to(torch::kFloat64)).square().mean().item<double>();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
  check_pair(a, b, "ssim");
  const auto x = luma(a);
  const auto y = luma(b);
  if (x.size(2) < kSsimWindow || x.size(3) < kSsimWindow) {
    throw DimensionError("ssim: images must be at least 11x11, got " + shape_string(a));
  }
  const auto win = gaussian_window();
  auto filt = [&win](const torch::Tensor& t) { return torch::conv2d(t, win); };
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const auto mx = filt(x);
  const auto my = filt(y);
  const auto sxx = filt(x * x) - mx * mx;
  const auto syy = filt(y * y) - my * my;
  const auto sxy = filt(x * y) - mx * my;
  const auto map = ((2 * mx * my + c1) * (2 * sxy + c2)) /
                   ((mx * mx + my * my + c1) * (sxx + syy + c2));
  return map.mean().item<double>();
}

}  // namespace vfi::metrics
