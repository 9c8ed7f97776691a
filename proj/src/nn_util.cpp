#include "vfi/nn_util.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <cstring>

namespace vfi {

torch::nn::Conv2d make_conv(int64_t in, int64_t out, int64_t kernel, int64_t stride,
                            int64_t dilation, bool bias) {
  const int64_t pad = dilation * (kernel - 1) / 2;
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel)
                               .stride(stride)
                               .padding(pad)
                               .dilation(dilation)
                               .bias(bias));
}

torch::Generator make_generator(uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void init_fan_in(torch::nn::Module& module, uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = make_generator(seed);
  for (auto& p : module.parameters()) {
    if (p.dim() > 1) {
      const int64_t fan_in = p.numel() / p.size(0);
      const auto draw = torch::randn(p.sizes(), gen, torch::dtype(torch::kFloat64));
      p.copy_(draw / std::sqrt(static_cast<double>(fan_in)));
    } else {
      p.zero_();
    }
  }
}

uint64_t state_hash(const torch::nn::Module& module) {
  uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const torch::Tensor& t) {
    const auto c = t.detach().contiguous().cpu();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const size_t n = c.numel() * c.element_size();
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : module.parameters()) feed(p);
  for (const auto& b : module.buffers()) feed(b);
  return h;
}

}  // namespace vfi
