#pragma once

// Adaptive per-pixel Gaussian mixture background model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "har/frame.hpp"

namespace har {

struct GaussComponent {
  double weight = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

/// Weight over standard deviation.
inline double fitness(const GaussComponent& c) { return c.weight / std::sqrt(c.variance); }

struct BackgroundParams {
  int components = 3;
  double learning_rate = 0.05;
  double background_threshold = 0.7;
  double match_radius = 2.5;
  double initial_variance = 225.0;
  double variance_floor = 4.0;
};

struct ForegroundMask {
  int width = 0;
  int height = 0;
  std::vector<bool> bits;

  ForegroundMask() = default;
  ForegroundMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, false) {}

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true)); }

  /// 0 = background, 255 = foreground.
  Frame to_frame(int index = 0) const {
    Frame f(width, height, index);
    for (std::size_t i = 0; i < bits.size(); ++i) f.pixels[i] = bits[i] ? 255 : 0;
    return f;
  }
};

/// Result of feeding one sample to one pixel's mixture.
struct PixelUpdate {
  bool matched = false;
  bool foreground = true;
};

/// K-component mixture for a single pixel. Components are kept sorted by
/// descending fitness; unused slots carry zero weight and never match.
class PixelMixture {
public:
  explicit PixelMixture(const BackgroundParams& p)
      : components_(static_cast<std::size_t>(p.components), GaussComponent{0.0, 0.0, p.initial_variance}) {}

  const std::vector<GaussComponent>& components() const { return components_; }

  PixelUpdate update(double x, const BackgroundParams& p) {
    const double alpha = p.learning_rate;
    const std::size_t k_count = components_.size();

    std::size_t touched = k_count;
    for (std::size_t k = 0; k < k_count; ++k) {
      const auto& c = components_[k];
      if (c.weight > 0.0 && std::abs(x - c.mean) <= p.match_radius * std::sqrt(c.variance)) {
        touched = k;
        break;
      }
    }
    const bool hit = touched != k_count;

    if (hit) {
      for (auto& c : components_) c.weight *= (1.0 - alpha);
      auto& c = components_[touched];
      c.weight += alpha;
      const double rho = std::min(1.0, alpha / c.weight);
      c.mean = (1.0 - rho) * c.mean + rho * x;
      const double d = x - c.mean;
      c.variance = std::max(p.variance_floor, (1.0 - rho) * c.variance + rho * d * d);
    } else {
      touched = k_count - 1;
      components_[touched] = GaussComponent{alpha, x, p.initial_variance};
      double total = 0.0;
      for (const auto& c : components_) total += c.weight;
      for (auto& c : components_) c.weight /= total;
    }

    // Stable insertion sort by descending fitness, following `touched`.
    for (std::size_t i = 1; i < k_count; ++i) {
      const GaussComponent c = components_[i];
      const bool carrying = touched == i;
      std::size_t j = i;
      while (j > 0 && fitness(components_[j - 1]) < fitness(c)) {
        components_[j] = components_[j - 1];
        if (touched == j - 1) touched = j;
        --j;
      }
      components_[j] = c;
      if (carrying) touched = j;
    }

    PixelUpdate r;
    r.matched = hit;
    if (hit) {
      double cumulative = 0.0;
      for (std::size_t k = 0; k < k_count; ++k) {
        if (k == touched) {
          r.foreground = false;
          break;
        }
        cumulative += components_[k].weight;
        if (cumulative >= p.background_threshold) break;
      }
    }
    return r;
  }

private:
  std::vector<GaussComponent> components_;
};

/// Frame-level model: one PixelMixture per pixel.
class BackgroundModel {
public:
  BackgroundModel(int width, int height, BackgroundParams params = {})
      : width_(width), height_(height), params_(params) {
    if (params.components < 1) throw std::invalid_argument("BackgroundModel: need at least one component");
    if (!(params.learning_rate > 0.0 && params.learning_rate <= 1.0))
      throw std::invalid_argument("BackgroundModel: learning rate must be in (0, 1]");
    if (!(params.variance_floor > 0.0)) throw std::invalid_argument("BackgroundModel: variance floor must be positive");
    pixels_.assign(static_cast<std::size_t>(width) * height, PixelMixture(params_));
  }

  int width() const { return width_; }
  int height() const { return height_; }
  const BackgroundParams& params() const { return params_; }
  const PixelMixture& pixel(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

  ForegroundMask update_and_classify(const Frame& f) {
    if (f.width != width_ || f.height != height_)
      throw std::invalid_argument("BackgroundModel: frame dimensions do not match the model");
    ForegroundMask mask(width_, height_);
    for (std::size_t i = 0; i < pixels_.size(); ++i)
      mask.bits[i] = pixels_[i].update(f.pixels[i], params_).foreground;
    return mask;
  }

private:
  int width_;
  int height_;
  BackgroundParams params_;
  std::vector<PixelMixture> pixels_;
};

/// Plain frame differencing: foreground where |cur - prev| > threshold.
inline ForegroundMask subtract_consecutive(const Frame& prev, const Frame& cur, int threshold) {
  if (prev.width != cur.width || prev.height != cur.height)
    throw std::invalid_argument("subtract_consecutive: frame dimensions differ");
  ForegroundMask mask(cur.width, cur.height);
  for (std::size_t i = 0; i < cur.pixels.size(); ++i)
    mask.bits[i] = std::abs(int(cur.pixels[i]) - int(prev.pixels[i])) > threshold;
  return mask;
}

}  // namespace har
