#include "vfi/warp_ops.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "vfi/errors.hpp"

namespace vfi::warp {
namespace {

using torch::indexing::Slice;

// Bilinear neighbours of x + flow(x) for every pixel, ordered pixel-major then corner
// (top-left, top-right, bottom-left, bottom-right). Out-of-frame corners carry weight 0 and a
// clamped (harmless) index.
struct Footprint {
  torch::Tensor index;   // [N, 4*H*W] int64 into the flattened H*W target grid
  torch::Tensor weight;  // [N, 1, 4*H*W]
};

Footprint bilinear_footprint(const torch::Tensor& flow) {
  const int64_t n = flow.size(0);
  const int64_t h = flow.size(2);
  const int64_t w = flow.size(3);
  const auto opts = flow.options();

  const auto xs = torch::arange(w, opts).view({1, 1, w});
  const auto ys = torch::arange(h, opts).view({1, h, 1});
  const auto px = xs + flow.select(1, 0);
  const auto py = ys + flow.select(1, 1);

  const auto x0 = torch::floor(px).detach();
  const auto y0 = torch::floor(py).detach();
  const auto fx = px - x0;
  const auto fy = py - y0;

  const auto x0i = x0.to(torch::kLong);
  const auto y0i = y0.to(torch::kLong);
  const auto x1i = x0i + 1;
  const auto y1i = y0i + 1;

  auto corner = [&](const torch::Tensor& cx, const torch::Tensor& cy, torch::Tensor wgt) {
    const auto valid = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h);
    wgt = wgt * valid.to(wgt.scalar_type());
    auto idx = cy.clamp(0, h - 1) * w + cx.clamp(0, w - 1);
    return std::pair{idx, wgt};
  };
  auto [i00, w00] = corner(x0i, y0i, (1 - fx) * (1 - fy));
  auto [i10, w10] = corner(x1i, y0i, fx * (1 - fy));
  auto [i01, w01] = corner(x0i, y1i, (1 - fx) * fy);
  auto [i11, w11] = corner(x1i, y1i, fx * fy);

  Footprint fp;
  fp.index = torch::stack({i00, i10, i01, i11}, -1).reshape({n, h * w * 4});
  fp.weight = torch::stack({w00, w10, w01, w11}, -1).reshape({n, 1, h * w * 4});
  return fp;
}

void check_pair(const torch::Tensor& src, const torch::Tensor& flow, const char* op) {
  require_nchw(src, std::string(op) + " src");
  require_nchw(flow, std::string(op) + " flow", 2);
  require_same_spatial(src, flow, op);
  require_finite(src, std::string(op) + " src");
  require_finite(flow, std::string(op) + " flow");
}

// Repeat each pixel's value for its four corners: [N, C, H*W] -> [N, C, 4*H*W].
torch::Tensor per_corner(const torch::Tensor& flat) {
  return flat.unsqueeze(-1).expand({flat.size(0), flat.size(1), flat.size(2), 4})
      .reshape({flat.size(0), flat.size(1), flat.size(2) * 4});
}

torch::Tensor scatter_sum(const torch::Tensor& contrib, const torch::Tensor& index, int64_t hw) {
  const auto idx = index.unsqueeze(1).expand({contrib.size(0), contrib.size(1), index.size(1)});
  auto out = torch::zeros({contrib.size(0), contrib.size(1), hw}, contrib.options());
  return out.scatter_add(2, idx, contrib);
}

torch::Tensor normalise(const torch::Tensor& num, const torch::Tensor& den) {
  const auto empty = den < kDivisionEpsilon;
  return torch::where(empty, torch::zeros_like(num), num / den.clamp_min(kDivisionEpsilon));
}

}  // namespace

namespace {

// Bilinear gather with hand-written gradients for src and flow. Corner contributions are added in
// the fixed order top-left, top-right, bottom-left, bottom-right.
template <typename T>
struct Corners {
  int64_t offset[4];
  T weight[4];     // 0 for out-of-frame corners
  T dweight_dx[4];
  T dweight_dy[4];
};

template <typename T>
Corners<T> corners_at(int64_t x, int64_t y, T u, T v, int64_t h, int64_t w) {
  const T px = static_cast<T>(x) + u;
  const T py = static_cast<T>(y) + v;
  const T x0 = std::floor(px);
  const T y0 = std::floor(py);
  const T fx = px - x0;
  const T fy = py - y0;
  const int64_t ix = static_cast<int64_t>(x0);
  const int64_t iy = static_cast<int64_t>(y0);
  Corners<T> c{};
  const int64_t cx[4] = {ix, ix + 1, ix, ix + 1};
  const int64_t cy[4] = {iy, iy, iy + 1, iy + 1};
  const T wt[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  const T dx[4] = {-(1 - fy), 1 - fy, -fy, fy};
  const T dy[4] = {-(1 - fx), -fx, 1 - fx, fx};
  for (int k = 0; k < 4; ++k) {
    const bool valid = cx[k] >= 0 && cx[k] < w && cy[k] >= 0 && cy[k] < h;
    c.offset[k] = valid ? cy[k] * w + cx[k] : 0;
    c.weight[k] = valid ? wt[k] : T(0);
    c.dweight_dx[k] = valid ? dx[k] : T(0);
    c.dweight_dy[k] = valid ? dy[k] : T(0);
  }
  return c;
}

template <typename T>
std::vector<Corners<T>> corner_table(const T* flow, int64_t h, int64_t w) {
  std::vector<Corners<T>> table(h * w);
  const T* fu = flow;
  const T* fv = flow + h * w;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      table[y * w + x] = corners_at<T>(x, y, fu[y * w + x], fv[y * w + x], h, w);
    }
  }
  return table;
}

class BackwardWarpFunction : public torch::autograd::Function<BackwardWarpFunction> {
 public:
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& src,
                               const torch::Tensor& flow) {
    const auto s = src.contiguous();
    const auto f = flow.contiguous();
    ctx->save_for_backward({s, f});
    auto out = torch::empty_like(s);
    const int64_t n = s.size(0), c = s.size(1), h = s.size(2), w = s.size(3);
    AT_DISPATCH_FLOATING_TYPES(s.scalar_type(), "backward_warp", [&] {
      const auto* sp = s.data_ptr<scalar_t>();
      const auto* fp = f.data_ptr<scalar_t>();
      auto* op = out.data_ptr<scalar_t>();
      for (int64_t b = 0; b < n; ++b) {
        const auto table = corner_table<scalar_t>(fp + b * 2 * h * w, h, w);
        for (int64_t ch = 0; ch < c; ++ch) {
          const scalar_t* plane = sp + (b * c + ch) * h * w;
          scalar_t* dst = op + (b * c + ch) * h * w;
          for (int64_t p = 0; p < h * w; ++p) {
            const auto& k = table[p];
            scalar_t acc = k.weight[0] * plane[k.offset[0]];
            acc += k.weight[1] * plane[k.offset[1]];
            acc += k.weight[2] * plane[k.offset[2]];
            acc += k.weight[3] * plane[k.offset[3]];
            dst[p] = acc;
          }
        }
      }
    });
    return out;
  }

  static torch::autograd::tensor_list backward(torch::autograd::AutogradContext* ctx,
                                               torch::autograd::tensor_list grads) {
    const auto saved = ctx->get_saved_variables();
    const auto& s = saved[0];
    const auto& f = saved[1];
    const auto g = grads[0].contiguous();
    auto grad_src = torch::zeros_like(s);
    auto grad_flow = torch::zeros_like(f);
    const int64_t n = s.size(0), c = s.size(1), h = s.size(2), w = s.size(3);
    AT_DISPATCH_FLOATING_TYPES(s.scalar_type(), "backward_warp_grad", [&] {
      const auto* sp = s.data_ptr<scalar_t>();
      const auto* fp = f.data_ptr<scalar_t>();
      const auto* gp = g.data_ptr<scalar_t>();
      auto* gs = grad_src.data_ptr<scalar_t>();
      auto* gf = grad_flow.data_ptr<scalar_t>();
      for (int64_t b = 0; b < n; ++b) {
        const auto table = corner_table<scalar_t>(fp + b * 2 * h * w, h, w);
        scalar_t* gu = gf + b * 2 * h * w;
        scalar_t* gv = gu + h * w;
        for (int64_t ch = 0; ch < c; ++ch) {
          const scalar_t* plane = sp + (b * c + ch) * h * w;
          const scalar_t* gout = gp + (b * c + ch) * h * w;
          scalar_t* gplane = gs + (b * c + ch) * h * w;
          for (int64_t p = 0; p < h * w; ++p) {
            const auto& k = table[p];
            const scalar_t go = gout[p];
            scalar_t du = 0, dv = 0;
            for (int q = 0; q < 4; ++q) {
              gplane[k.offset[q]] += k.weight[q] * go;
              du += k.dweight_dx[q] * plane[k.offset[q]];
              dv += k.dweight_dy[q] * plane[k.offset[q]];
            }
            gu[p] += go * du;
            gv[p] += go * dv;
          }
        }
      }
    });
    return {grad_src, grad_flow};
  }
};

}  // namespace

torch::Tensor backward_warp(const torch::Tensor& src, const torch::Tensor& flow) {
  check_pair(src, flow, "backward_warp");
  if (src.scalar_type() != flow.scalar_type()) {
    throw ValidationError("backward_warp: src and flow dtypes differ");
  }
  return BackwardWarpFunction::apply(src, flow);
}

torch::Tensor forward_splat_avg(const torch::Tensor& src, const torch::Tensor& flow) {
  check_pair(src, flow, "forward_splat_avg");
  const int64_t n = src.size(0), c = src.size(1), h = src.size(2), w = src.size(3);
  const auto fp = bilinear_footprint(flow);
  const auto values = per_corner(src.reshape({n, c, h * w}));
  const auto num = scatter_sum(values * fp.weight, fp.index, h * w);
  const auto den = scatter_sum(fp.weight, fp.index, h * w);
  return normalise(num, den).view({n, c, h, w});
}

torch::Tensor forward_splat_softmax(const torch::Tensor& src, double t, const torch::Tensor& flow,
                                    const torch::Tensor& importance) {
  check_pair(src, flow, "forward_splat_softmax");
  require_nchw(importance, "forward_splat_softmax importance", 1);
  require_same_spatial(src, importance, "forward_splat_softmax importance");
  require_finite(importance, "forward_splat_softmax importance");
  if (!(t >= 0.0 && t <= 1.0)) {
    throw ValidationError("forward_splat_softmax: t must lie in [0, 1], got " + std::to_string(t));
  }
  const int64_t n = src.size(0), c = src.size(1), h = src.size(2), w = src.size(3);
  const auto fp = bilinear_footprint(flow * t);

  const auto z = per_corner(importance.reshape({n, 1, h * w}));
  const auto valid = fp.weight > 0;
  const double neg_inf = -std::numeric_limits<double>::infinity();
  auto shift = torch::zeros({n, 1, h * w}, z.options())
                   .scatter_reduce(2, fp.index.unsqueeze(1),
                                   torch::where(valid, z, torch::full_like(z, neg_inf)).detach(),
                                   "amax", /*include_self=*/false);
  shift = torch::where(torch::isinf(shift), torch::zeros_like(shift), shift);
  const auto weight = fp.weight * torch::exp(z - shift.gather(2, fp.index.unsqueeze(1)));

  const auto values = per_corner(src.reshape({n, c, h * w}));
  const auto num = scatter_sum(values * weight, fp.index, h * w);
  const auto den = scatter_sum(weight, fp.index, h * w);
  return normalise(num, den).view({n, c, h, w});
}

torch::Tensor splat_density(const torch::Tensor& flow) {
  require_nchw(flow, "splat_density flow", 2);
  require_finite(flow, "splat_density flow");
  const int64_t h = flow.size(2), w = flow.size(3);
  const auto fp = bilinear_footprint(flow);
  return scatter_sum(fp.weight, fp.index, h * w).view({flow.size(0), 1, h, w});
}

namespace {
int64_t check_level(const torch::Tensor& t, int level, const char* op) {
  if (level < 0) throw ValidationError(std::string(op) + ": level must be >= 0");
  const int64_t factor = int64_t{1} << level;
  if (t.size(2) % factor != 0 || t.size(3) % factor != 0) {
    throw DimensionError(std::string(op) + ": spatial size " + shape_string(t) +
                         " is not divisible by 2^" + std::to_string(level));
  }
  return factor;
}
}  // namespace

torch::Tensor rescale_flow(const torch::Tensor& flow, int level) {
  require_nchw(flow, "rescale_flow", 2);
  const int64_t factor = check_level(flow, level, "rescale_flow");
  if (level == 0) return flow;
  return torch::avg_pool2d(flow, {factor, factor}) / static_cast<double>(factor);
}

torch::Tensor downscale_map(const torch::Tensor& map, int level) {
  require_nchw(map, "downscale_map");
  const int64_t factor = check_level(map, level, "downscale_map");
  if (level == 0) return map;
  return torch::avg_pool2d(map, {factor, factor});
}

torch::Tensor binary_occlusion_mask(const torch::Tensor& flow, double t, double eps) {
  if (!(eps > 0.0)) throw ValidationError("binary_occlusion_mask: eps must be > 0");
  torch::NoGradGuard no_grad;
  const auto density = splat_density(flow.detach() * t);
  return (density < eps).to(flow.scalar_type());
}

}  // namespace vfi::warp
