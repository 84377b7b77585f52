#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "har/frame.hpp"

namespace har {

/// Real-valued single-channel raster.
struct ImageF {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  ImageF() = default;
  ImageF(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  explicit ImageF(const Frame& f) : ImageF(f.width, f.height) {
    std::copy(f.pixels.begin(), f.pixels.end(), data.begin());
  }

  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }

  double clamped(int x, int y) const {
    return at(std::clamp(x, 0, width - 1), std::clamp(y, 0, height - 1));
  }

  /// Bilinear sample; coordinates outside the raster are clamped to the border.
  double sample(double x, double y) const {
    x = std::clamp(x, 0.0, static_cast<double>(width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height - 1));
    const int x0 = static_cast<int>(x);
    const int y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    const double top = at(x0, y0) + fx * (at(x1, y0) - at(x0, y0));
    const double bot = at(x0, y1) + fx * (at(x1, y1) - at(x0, y1));
    return top + fy * (bot - top);
  }

  bool contains(double x, double y) const {
    return x >= 0.0 && y >= 0.0 && x <= width - 1 && y <= height - 1;
  }
};

}  // namespace har
