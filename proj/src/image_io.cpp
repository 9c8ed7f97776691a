#include <opencv2/imgcodecs.hpp>

#include <cmath>

#include "vfi/errors.hpp"
#include "vfi/io.hpp"

namespace vfi::io {

torch::Tensor read_png(const std::string& path) {
  const cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image '" + path + "'");
  if (bgr.depth() != CV_8U) throw FormatError("image '" + path + "' is not 8-bit");
  auto img = torch::empty({1, 3, bgr.rows, bgr.cols}, torch::kFloat32);
  auto a = img.accessor<float, 4>();
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) a[0][c][y][x] = row[x][2 - c] / 255.0f;
    }
  }
  return img;
}

void write_png(const std::string& path, const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(0) != 1 || image.size(1) != 3) {
    throw DimensionError("write_png: expected [1, 3, H, W], got " + shape_string(image));
  }
  const auto img = image.detach().to(torch::kFloat64).clamp(0.0, 1.0).contiguous();
  const int h = static_cast<int>(img.size(2)), w = static_cast<int>(img.size(3));
  cv::Mat bgr(h, w, CV_8UC3);
  auto a = img.accessor<double, 4>();
  for (int y = 0; y < h; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        row[x][2 - c] = static_cast<unsigned char>(std::lround(a[0][c][y][x] * 255.0));
      }
    }
  }
  if (!cv::imwrite(path, bgr)) throw IoError("cannot write image '" + path + "'");
}

}  // namespace vfi::io
