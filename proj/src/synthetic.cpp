#include "vfi/synthetic.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "vfi/errors.hpp"

namespace vfi {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Wave {
  double fx, fy, phase, amplitude;
};

struct Texture {
  std::array<double, 3> base{};
  std::array<std::vector<Wave>, 3> waves;

  double eval(int c, double u, double v) const {
    double value = base[c];
    for (const auto& w : waves[c]) value += w.amplitude * std::sin(w.fx * u + w.fy * v + w.phase);
    return value;
  }
};

struct Shape {
  bool disc = true;
  double cx = 0, cy = 0;  // centre at time 0
  double rx = 0, ry = 0;  // radius / half extents
  double dx = 0, dy = 0;  // displacement at time 1
  double angle = 0;       // rotation at time 1
  Texture texture;

  bool contains(double u, double v) const {
    if (disc) return (u * u) / (rx * rx) + (v * v) / (ry * ry) <= 1.0;
    return std::abs(u) <= rx && std::abs(v) <= ry;
  }
  // Local coordinates of image point (x, y) at time s.
  std::pair<double, double> local(double x, double y, double s) const {
    const double px = x - cx - s * dx;
    const double py = y - cy - s * dy;
    const double a = -s * angle;
    return {std::cos(a) * px - std::sin(a) * py, std::sin(a) * px + std::cos(a) * py};
  }
  // Image position of local point (u, v) at time s.
  std::pair<double, double> place(double u, double v, double s) const {
    const double a = s * angle;
    return {cx + s * dx + std::cos(a) * u - std::sin(a) * v,
            cy + s * dy + std::sin(a) * u + std::cos(a) * v};
  }
};

struct Scene {
  Texture background;
  double bx = 0, by = 0;
  std::vector<Shape> shapes;

  // Topmost shape covering (x, y) at time s, or -1.
  int cover(double x, double y, double s) const {
    for (int j = static_cast<int>(shapes.size()) - 1; j >= 0; --j) {
      auto [u, v] = shapes[j].local(x, y, s);
      if (shapes[j].contains(u, v)) return j;
    }
    return -1;
  }

  double color(int c, double x, double y, double s) const {
    const int j = cover(x, y, s);
    if (j >= 0) {
      auto [u, v] = shapes[j].local(x, y, s);
      return shapes[j].texture.eval(c, u, v);
    }
    return background.eval(c, x - s * bx, y - s * by);
  }

  // Displacement of the scene point seen at (x, y) at time `from` when moved to time `to`.
  std::pair<double, double> flow(double x, double y, double from, double to) const {
    const int j = cover(x, y, from);
    if (j >= 0) {
      auto [u, v] = shapes[j].local(x, y, from);
      auto [qx, qy] = shapes[j].place(u, v, to);
      return {qx - x, qy - y};
    }
    return {(to - from) * bx, (to - from) * by};
  }
};

Texture random_texture(std::mt19937_64& rng, double min_period, double max_period, int waves,
                       double amplitude) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Texture tex;
  for (int c = 0; c < 3; ++c) {
    tex.base[c] = 0.25 + 0.5 * unit(rng);
    for (int k = 0; k < waves; ++k) {
      const double period = min_period + (max_period - min_period) * unit(rng);
      const double dir = kTwoPi * unit(rng);
      const double freq = kTwoPi / period;
      tex.waves[c].push_back({freq * std::cos(dir), freq * std::sin(dir), kTwoPi * unit(rng),
                              amplitude * (0.5 + 0.5 * unit(rng)) / waves});
    }
  }
  return tex;
}

Scene make_scene(uint64_t seed, int64_t height, int64_t width, const MotionSpec& m) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto sym = [&](double r) { return (2.0 * unit(rng) - 1.0) * r; };
  const double scale = static_cast<double>(std::min(height, width)) / 64.0;

  Scene scene;
  scene.background = random_texture(rng, 12.0 * scale, 40.0 * scale, 3, 0.35);
  for (int j = 0; j < m.shapes; ++j) {
    Shape s;
    s.disc = unit(rng) < 0.5;
    s.rx = (6.0 + 8.0 * unit(rng)) * scale;
    s.ry = (6.0 + 8.0 * unit(rng)) * scale;
    s.cx = width * (0.25 + 0.5 * unit(rng));
    s.cy = height * (0.25 + 0.5 * unit(rng));
    s.texture = random_texture(rng, 5.0 * scale, 14.0 * scale, 2, 0.3);
    const double sdx = sym(m.max_shape_shift * scale);
    const double sdy = sym(m.max_shape_shift * scale);
    const double rot = sym(m.max_rotation);
    if (m.kind == MotionSpec::Kind::Random) {
      s.dx = sdx;
      s.dy = sdy;
      s.angle = rot;
    }
    scene.shapes.push_back(std::move(s));
  }
  const double bdx = sym(m.max_background_shift * scale);
  const double bdy = sym(m.max_background_shift * scale);
  switch (m.kind) {
    case MotionSpec::Kind::Random:
      scene.bx = bdx;
      scene.by = bdy;
      break;
    case MotionSpec::Kind::Still:
      break;
    case MotionSpec::Kind::Translation:
      scene.bx = m.dx;
      scene.by = m.dy;
      for (auto& s : scene.shapes) {
        s.dx = m.dx;
        s.dy = m.dy;
      }
      break;
  }
  return scene;
}

torch::Tensor render(const Scene& scene, int64_t height, int64_t width, double s) {
  auto img = torch::empty({1, 3, height, width}, torch::kFloat32);
  auto a = img.accessor<float, 4>();
  for (int64_t y = 0; y < height; ++y) {
    for (int64_t x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(scene.color(c, double(x), double(y), s), 0.0, 1.0);
        a[0][c][y][x] = static_cast<float>(std::round(v * 255.0) / 255.0);
      }
    }
  }
  return img;
}

torch::Tensor flow_field(const Scene& scene, int64_t height, int64_t width, double from,
                         double to) {
  auto f = torch::empty({1, 2, height, width}, torch::kFloat32);
  auto a = f.accessor<float, 4>();
  for (int64_t y = 0; y < height; ++y) {
    for (int64_t x = 0; x < width; ++x) {
      auto [u, v] = scene.flow(double(x), double(y), from, to);
      a[0][0][y][x] = static_cast<float>(u);
      a[0][1][y][x] = static_cast<float>(v);
    }
  }
  return f;
}

}  // namespace

Triplet synth_triplet(uint64_t seed, int64_t height, int64_t width, const MotionSpec& motion) {
  if (height < 8 || width < 8) {
    throw ValidationError("synth_triplet: frame size must be at least 8x8, got " +
                          std::to_string(width) + "x" + std::to_string(height));
  }
  if (!(motion.t > 0.0 && motion.t < 1.0)) throw ValidationError("synth_triplet: t outside (0, 1)");
  const Scene scene = make_scene(seed, height, width, motion);
  Triplet tr;
  tr.t = motion.t;
  tr.frame0 = render(scene, height, width, 0.0);
  tr.frame1 = render(scene, height, width, 1.0);
  tr.target = render(scene, height, width, motion.t);
  tr.flow01 = flow_field(scene, height, width, 0.0, 1.0);
  tr.flow10 = flow_field(scene, height, width, 1.0, 0.0);
  return tr;
}

Triplet stack_triplets(const std::vector<Triplet>& items) {
  if (items.empty()) throw ValidationError("stack_triplets: empty batch");
  std::vector<torch::Tensor> f0, f1, tg, a, b;
  for (const auto& it : items) {
    if (it.t != items.front().t) throw ValidationError("stack_triplets: mixed t in one batch");
    f0.push_back(it.frame0);
    f1.push_back(it.frame1);
    tg.push_back(it.target);
    a.push_back(it.flow01);
    b.push_back(it.flow10);
  }
  Triplet out;
  out.t = items.front().t;
  out.frame0 = torch::cat(f0, 0);
  out.frame1 = torch::cat(f1, 0);
  out.target = torch::cat(tg, 0);
  out.flow01 = torch::cat(a, 0);
  out.flow10 = torch::cat(b, 0);
  return out;
}

}  // namespace vfi
