#pragma once

// Pyramidal iterative Lucas-Kanade tracking of sparse points.

#include <array>
#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "har/frame.hpp"
#include "har/goodfeat.hpp"
#include "har/image.hpp"

namespace har {

/// Gaussian pyramid with per-level spatial gradients. Level 0 is the input.
struct Pyramid {
  std::vector<ImageF> levels;
  std::vector<Gradients> gradients;
  int requested_levels = 1;

  std::size_t size() const { return levels.size(); }
};

namespace detail {

// [1 4 6 4 1] / 16, replicated border, then keep even samples.
inline ImageF reduce_level(const ImageF& src) {
  static constexpr std::array<double, 5> k{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  ImageF rows(src.width, src.height);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      double s = 0.0;
      for (int d = -2; d <= 2; ++d) s += k[d + 2] * src.clamped(x + d, y);
      rows.at(x, y) = s;
    }
  const int ow = (src.width + 1) / 2;
  const int oh = (src.height + 1) / 2;
  ImageF out(ow, oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int d = -2; d <= 2; ++d) s += k[d + 2] * rows.clamped(2 * x, 2 * y + d);
      out.at(x, y) = s;
    }
  return out;
}

}  // namespace detail

inline constexpr int kMinPyramidSide = 16;

/// Levels whose coarsest side would drop below 16 pixels are not built.
inline Pyramid build_pyramid(const Frame& f, int levels) {
  Pyramid p;
  p.requested_levels = levels;
  p.levels.emplace_back(f);
  for (int l = 1; l < levels; ++l) {
    const ImageF& prev = p.levels.back();
    if ((prev.width + 1) / 2 < kMinPyramidSide || (prev.height + 1) / 2 < kMinPyramidSide) break;
    p.levels.push_back(detail::reduce_level(prev));
  }
  for (const auto& level : p.levels) {
    if (level.width >= 3 && level.height >= 3) p.gradients.push_back(spatial_gradients(level));
    else p.gradients.push_back({ImageF(level.width, level.height), ImageF(level.width, level.height)});
  }
  return p;
}

enum class TrackStatus { Tracked, LostResidual, LostBounds, LostSingular };

inline std::string_view to_string(TrackStatus s) {
  switch (s) {
    case TrackStatus::Tracked: return "TRACKED";
    case TrackStatus::LostResidual: return "LOST_RESIDUAL";
    case TrackStatus::LostBounds: return "LOST_BOUNDS";
    case TrackStatus::LostSingular: return "LOST_SINGULAR";
  }
  return "?";
}

struct TrackResult {
  double new_x = 0.0;
  double new_y = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  double residual = 0.0;
  TrackStatus status = TrackStatus::LostBounds;

  bool tracked() const { return status == TrackStatus::Tracked; }
};

struct TrackerParams {
  int half_window = 7;
  int levels = 3;
  int max_iterations = 20;
  double convergence_eps = 0.03;
  double residual_max = 12.0;
  /// Singularity floor on min eigenvalue, per window pixel.
  double singular_floor_per_pixel = 1e-4;

  double singular_floor() const {
    const double side = 2.0 * half_window + 1.0;
    return singular_floor_per_pixel * side * side;
  }
};

/// RMS of I(window at p) - J(window at p + d) on full-resolution levels.
inline double window_residual(const ImageF& i, const ImageF& j, double px, double py, double dx,
                              double dy, int half_window) {
  double sum = 0.0;
  int n = 0;
  for (int oy = -half_window; oy <= half_window; ++oy)
    for (int ox = -half_window; ox <= half_window; ++ox) {
      const double diff = i.sample(px + ox, py + oy) - j.sample(px + dx + ox, py + dy + oy);
      sum += diff * diff;
      ++n;
    }
  return std::sqrt(sum / n);
}

inline TrackResult track_point(const Pyramid& pi, const Pyramid& pj, const FeaturePoint& p,
                               const TrackerParams& params = {}) {
  TrackResult r;
  r.new_x = p.x;
  r.new_y = p.y;
  const int hw = params.half_window;
  const ImageF& i0 = pi.levels.front();
  const ImageF& j0 = pj.levels.front();
  auto window_inside = [hw](const ImageF& img, double x, double y) {
    return x - hw >= 0.0 && y - hw >= 0.0 && x + hw <= img.width - 1 && y + hw <= img.height - 1;
  };
  if (!window_inside(i0, p.x, p.y)) {
    r.status = TrackStatus::LostBounds;
    return r;
  }

  const int levels = static_cast<int>(std::min(pi.size(), pj.size()));
  const int side = 2 * hw + 1;
  const double floor = params.singular_floor();
  std::vector<double> tmpl(static_cast<std::size_t>(side) * side);
  std::vector<double> tgx(tmpl.size()), tgy(tmpl.size());

  double gx = 0.0, gy = 0.0;
  for (int l = levels - 1; l >= 0; --l) {
    const double scale = std::ldexp(1.0, -l);
    const double cx = p.x * scale, cy = p.y * scale;
    const ImageF& il = pi.levels[l];
    const ImageF& jl = pj.levels[l];
    const Gradients& grad = pi.gradients[l];

    StructureTensor z;
    std::size_t k = 0;
    for (int oy = -hw; oy <= hw; ++oy)
      for (int ox = -hw; ox <= hw; ++ox, ++k) {
        tmpl[k] = il.sample(cx + ox, cy + oy);
        tgx[k] = grad.ix.sample(cx + ox, cy + oy);
        tgy[k] = grad.iy.sample(cx + ox, cy + oy);
        z.zxx += tgx[k] * tgx[k];
        z.zxy += tgx[k] * tgy[k];
        z.zyy += tgy[k] * tgy[k];
      }
    if (min_eigenvalue(z) < floor) {
      r.status = TrackStatus::LostSingular;
      return r;
    }
    const double det = z.zxx * z.zyy - z.zxy * z.zxy;

    double vx = 0.0, vy = 0.0;
    for (int it = 0; it < params.max_iterations; ++it) {
      const double qx = cx + gx + vx, qy = cy + gy + vy;
      if (!jl.contains(qx, qy)) {
        r.status = TrackStatus::LostBounds;
        return r;
      }
      double ex = 0.0, ey = 0.0;
      k = 0;
      for (int oy = -hw; oy <= hw; ++oy)
        for (int ox = -hw; ox <= hw; ++ox, ++k) {
          const double diff = tmpl[k] - jl.sample(qx + ox, qy + oy);
          ex += diff * tgx[k];
          ey += diff * tgy[k];
        }
      const double sx = (z.zyy * ex - z.zxy * ey) / det;
      const double sy = (z.zxx * ey - z.zxy * ex) / det;
      vx += sx;
      vy += sy;
      if (std::hypot(sx, sy) < params.convergence_eps) break;
    }
    if (l > 0) {
      gx = 2.0 * (gx + vx);
      gy = 2.0 * (gy + vy);
    } else {
      gx += vx;
      gy += vy;
    }
  }

  r.dx = gx;
  r.dy = gy;
  r.new_x = p.x + gx;
  r.new_y = p.y + gy;
  if (!window_inside(j0, r.new_x, r.new_y)) {
    r.status = TrackStatus::LostBounds;
    return r;
  }
  r.residual = window_residual(i0, j0, p.x, p.y, gx, gy, hw);
  r.status = r.residual > params.residual_max ? TrackStatus::LostResidual : TrackStatus::Tracked;
  return r;
}

inline std::vector<TrackResult> track_points(const Pyramid& pi, const Pyramid& pj,
                                             std::span<const FeaturePoint> points,
                                             const TrackerParams& params = {}) {
  std::vector<TrackResult> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(track_point(pi, pj, p, params));
  return out;
}

}  // namespace har
