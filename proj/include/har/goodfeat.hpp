#pragma once

// Minimum-eigenvalue ("good features to track") interest point detection.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "har/frame.hpp"
#include "har/image.hpp"

namespace har {

struct Gradients {
  ImageF ix;
  ImageF iy;
};

/// Central differences, zero on the one-pixel border.
template <typename Raster>
Gradients spatial_gradients(const Raster& f) {
  if (f.width < 3 || f.height < 3) throw std::invalid_argument("spatial_gradients: frame smaller than 3x3");
  Gradients g{ImageF(f.width, f.height), ImageF(f.width, f.height)};
  for (int y = 1; y < f.height - 1; ++y) {
    for (int x = 1; x < f.width - 1; ++x) {
      g.ix.at(x, y) = (double(f.at(x + 1, y)) - double(f.at(x - 1, y))) / 2.0;
      g.iy.at(x, y) = (double(f.at(x, y + 1)) - double(f.at(x, y - 1))) / 2.0;
    }
  }
  return g;
}

struct StructureTensor {
  double zxx = 0.0;
  double zxy = 0.0;
  double zyy = 0.0;
};

inline StructureTensor structure_tensor_at(const Gradients& g, int x, int y, int half_window) {
  if (x - half_window < 0 || y - half_window < 0 || x + half_window >= g.ix.width ||
      y + half_window >= g.ix.height)
    throw std::out_of_range("structure_tensor_at: window leaves the frame");
  StructureTensor z;
  for (int dy = -half_window; dy <= half_window; ++dy) {
    for (int dx = -half_window; dx <= half_window; ++dx) {
      const double gx = g.ix.at(x + dx, y + dy);
      const double gy = g.iy.at(x + dx, y + dy);
      z.zxx += gx * gx;
      z.zxy += gx * gy;
      z.zyy += gy * gy;
    }
  }
  return z;
}

/// Smaller eigenvalue of the symmetric 2x2 tensor, clamped at zero.
inline double min_eigenvalue(const StructureTensor& z) {
  const double diff = z.zxx - z.zyy;
  const double lambda = ((z.zxx + z.zyy) - std::sqrt(diff * diff + 4.0 * z.zxy * z.zxy)) / 2.0;
  return std::max(0.0, lambda);
}

struct FeaturePoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;

  bool operator==(const FeaturePoint&) const = default;
};

struct GoodFeatureParams {
  int max_features = 10;
  double quality_rel = 0.05;
  double min_distance = 7.0;
  int half_window = 2;
};

/// Minimum eigenvalue at every pixel whose tensor window fits the frame; zero
/// elsewhere.
inline ImageF min_eigenvalue_map(const Frame& f, int half_window) {
  const Gradients g = spatial_gradients(f);
  const int w = f.width;
  const int h = f.height;
  ImageF out(w, h);

  // Separable box sums. Products of half-integer gradients are exact in
  // double, so the summation order does not affect the result.
  ImageF pxx(w, h), pxy(w, h), pyy(w, h);
  for (std::size_t i = 0; i < pxx.data.size(); ++i) {
    pxx.data[i] = g.ix.data[i] * g.ix.data[i];
    pxy.data[i] = g.ix.data[i] * g.iy.data[i];
    pyy.data[i] = g.iy.data[i] * g.iy.data[i];
  }
  auto box = [&](const ImageF& src) {
    ImageF rows(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = half_window; x < w - half_window; ++x) {
        double s = 0.0;
        for (int d = -half_window; d <= half_window; ++d) s += src.at(x + d, y);
        rows.at(x, y) = s;
      }
    ImageF sums(w, h);
    for (int y = half_window; y < h - half_window; ++y)
      for (int x = half_window; x < w - half_window; ++x) {
        double s = 0.0;
        for (int d = -half_window; d <= half_window; ++d) s += rows.at(x, y + d);
        sums.at(x, y) = s;
      }
    return sums;
  };
  const ImageF sxx = box(pxx), sxy = box(pxy), syy = box(pyy);
  for (int y = half_window; y < h - half_window; ++y)
    for (int x = half_window; x < w - half_window; ++x)
      out.at(x, y) = min_eigenvalue({sxx.at(x, y), sxy.at(x, y), syy.at(x, y)});
  return out;
}

/// Relative threshold, 3x3 non-maximum suppression, then greedy
/// minimum-distance selection in descending score order (ties: lower y, then
/// lower x).
inline std::vector<FeaturePoint> select_features(const ImageF& score, const GoodFeatureParams& p) {
  std::vector<FeaturePoint> out;
  if (p.max_features <= 0) return out;
  const double peak = *std::max_element(score.data.begin(), score.data.end());
  if (!(peak > 0.0)) return out;
  const double threshold = p.quality_rel * peak;

  std::vector<FeaturePoint> candidates;
  for (int y = 0; y < score.height; ++y) {
    for (int x = 0; x < score.width; ++x) {
      const double s = score.at(x, y);
      if (s <= 0.0 || s < threshold) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= score.width || ny >= score.height) continue;
          if (score.at(nx, ny) > s) {
            is_max = false;
            break;
          }
        }
      if (is_max) candidates.push_back({double(x), double(y), s});
    }
  }
  // Candidates were generated in (y, x) order, so a stable sort on score
  // alone realizes the tie rule.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const FeaturePoint& a, const FeaturePoint& b) { return a.score > b.score; });

  const double min_d2 = p.min_distance * p.min_distance;
  for (const auto& c : candidates) {
    bool far_enough = true;
    for (const auto& a : out) {
      const double dx = a.x - c.x, dy = a.y - c.y;
      if (dx * dx + dy * dy < min_d2) {
        far_enough = false;
        break;
      }
    }
    if (!far_enough) continue;
    out.push_back(c);
    if (static_cast<int>(out.size()) == p.max_features) break;
  }
  return out;
}

inline std::vector<FeaturePoint> detect_good_features(const Frame& f, const GoodFeatureParams& p = {}) {
  return select_features(min_eigenvalue_map(f, p.half_window), p);
}

}  // namespace har
