#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace vfi::test {

inline torch::TensorOptions f64() { return torch::TensorOptions().dtype(torch::kFloat64); }
inline torch::TensorOptions f32() { return torch::TensorOptions().dtype(torch::kFloat32); }

inline torch::Tensor uniform(std::vector<int64_t> shape, double lo, double hi, uint64_t seed,
                             torch::TensorOptions opts = f32()) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return torch::empty(shape, opts.dtype(torch::kFloat64)).uniform_(lo, hi, gen).to(opts.dtype());
}

inline torch::Tensor normal(std::vector<int64_t> shape, double std, uint64_t seed,
                            torch::TensorOptions opts = f32()) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  return (torch::empty(shape, opts.dtype(torch::kFloat64)).normal_(0.0, 1.0, gen) * std)
      .to(opts.dtype());
}

inline double max_abs(const torch::Tensor& a, const torch::Tensor& b) {
  return (a - b).abs().max().item<double>();
}

// Relative error ||g_analytic - g_fd|| / max(||g_analytic||, ||g_fd||) over probed coordinates.
struct GradCheck {
  double rel_error = 0;
  double analytic_norm = 0;
  int probed = 0;
  int nudged = 0;  // probes moved off a kink
};

// Central differences of f at `probes` random coordinates of x (all when probes <= 0 or x is
// small). f must build its graph from x each call; x is a double leaf tensor.
// A probe whose left and right one-sided slopes disagree sits on a kink (leaky ReLU, clamp);
// its coordinate is moved by a small step and both gradients are taken again there.
inline GradCheck check_gradient(const std::function<torch::Tensor()>& f, torch::Tensor x,
                                int probes = 0, uint64_t seed = 1, double h = 1e-6) {
  GradCheck out;
  auto analytic_at = [&] {
    auto value = f();
    auto grads = torch::autograd::grad({value}, {x}, {}, false, false, true);
    return grads[0].defined() ? grads[0].contiguous() : torch::zeros_like(x);
  };
  auto analytic = analytic_at();
  const int64_t count = x.numel();
  std::vector<int64_t> coords;
  if (probes <= 0 || probes >= count) {
    for (int64_t i = 0; i < count; ++i) coords.push_back(i);
  } else {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int64_t> pick(0, count - 1);
    for (int i = 0; i < probes; ++i) coords.push_back(pick(rng));
  }
  double diff2 = 0, a2 = 0, n2 = 0;
  auto flat = x.detach().view({-1});
  for (int64_t i : coords) {
    const double orig = flat[i].item<double>();
    double num = 0, ana = analytic.view({-1})[i].item<double>();
    for (int attempt = 0; attempt < 6; ++attempt) {
      const double at = orig + (attempt == 0 ? 0.0 : (attempt % 2 ? 1 : -1) * 1e-3 * attempt);
      if (attempt > 0) {
        {
          torch::NoGradGuard ng;
          flat[i] = at;
        }
        ana = analytic_at().view({-1})[i].item<double>();
      }
      double f0, step = h, noise = 0;
      bool kink = false;
      {
        torch::NoGradGuard ng;
        f0 = f().item<double>();
        // widen the step while rounding noise in f swamps the difference quotient, but never
        // across a kink
        for (;; step *= 10) {
          flat[i] = at + step;
          const double p = f().item<double>();
          flat[i] = at - step;
          const double m = f().item<double>();
          const double q = (p - m) / (2 * step);
          const double nz = 64 * 2.2e-16 * std::abs(f0) / step;
          const bool k = std::abs((p - f0) - (f0 - m)) / step > 1e-4 * std::abs(q) + nz;
          if (step > h && k) break;
          num = q, noise = nz, kink = k;
          if (k || noise <= 1e-5 * std::abs(num) || step >= 1e3 * h) break;
        }
        flat[i] = at;
      }
      if (!kink) break;
      if (attempt < 5) ++out.nudged;
    }
    {
      torch::NoGradGuard ng;
      flat[i] = orig;
    }
    diff2 += (num - ana) * (num - ana);
    a2 += ana * ana;
    n2 += num * num;
  }
  out.analytic_norm = std::sqrt(a2);
  const double denom = std::max(std::sqrt(a2), std::sqrt(n2));
  out.rel_error = denom > 0 ? std::sqrt(diff2) / denom : 0.0;
  out.probed = static_cast<int>(coords.size());
  return out;
}

// Fixed random readout weights so a scalar loss touches every output element differently.
inline torch::Tensor readout(const torch::Tensor& y, uint64_t seed) {
  auto w = normal(y.sizes().vec(), 1.0, seed, y.options());
  return (y * w).sum();
}

}  // namespace vfi::test
