#include <filesystem>
#include <fstream>

#include "binary_io.hpp"
#include "vfi/errors.hpp"
#include "vfi/io.hpp"

namespace vfi::io {

torch::Tensor read_flow_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open flow file '" + path + "'");
  const std::string what = "flow file '" + path + "'";
  const float magic = binary::get_f32(in, what);
  if (magic != kFlowMagic) {
    throw FormatError(what + ": bad magic, expected 202021.25 (\"PIEH\")");
  }
  const int32_t width = binary::get_i32(in, what);
  const int32_t height = binary::get_i32(in, what);
  if (width <= 0 || height <= 0 || int64_t{width} * height > (int64_t{1} << 28)) {
    throw FormatError(what + ": implausible size " + std::to_string(width) + "x" +
                      std::to_string(height));
  }
  auto flow = torch::empty({1, 2, height, width}, torch::kFloat32);
  auto a = flow.accessor<float, 4>();
  for (int32_t y = 0; y < height; ++y) {
    for (int32_t x = 0; x < width; ++x) {
      a[0][0][y][x] = binary::get_f32(in, what);
      a[0][1][y][x] = binary::get_f32(in, what);
    }
  }
  return flow;
}

void write_flow_file(const std::string& path, const torch::Tensor& flow) {
  auto f = flow.dim() == 3 ? flow.unsqueeze(0) : flow;
  if (f.dim() != 4 || f.size(0) != 1 || f.size(1) != 2) {
    throw DimensionError("write_flow_file: expected [1, 2, H, W], got " + shape_string(flow));
  }
  f = f.to(torch::kFloat32).contiguous();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write flow file '" + path + "'");
  const int64_t h = f.size(2), w = f.size(3);
  binary::put_f32(out, kFlowMagic);
  binary::put_i32(out, static_cast<int32_t>(w));
  binary::put_i32(out, static_cast<int32_t>(h));
  auto a = f.accessor<float, 4>();
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      binary::put_f32(out, a[0][0][y][x]);
      binary::put_f32(out, a[0][1][y][x]);
    }
  }
  if (!out) throw IoError("failed writing flow file '" + path + "'");
}

}  // namespace vfi::io
