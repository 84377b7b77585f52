#pragma once

// Synthetic four-class motion corpus: textured patches moving over a
// low-contrast textured background.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "har/action.hpp"
#include "har/frame.hpp"
#include "har/image.hpp"
#include "har/mlp.hpp"

namespace har {

struct SynthParams {
  Resolution size{160, 120};
  int frames = 75;
  int train_per_class = 20;
  int test_per_class = 10;
  std::uint64_t seed = 1;
  double noise_amplitude = 3.0;
};

namespace synth {

/// Blocky random texture; `lo`..`hi` intensity range.
inline ImageF block_texture(SplitMix64& rng, int w, int h, int block, double lo, double hi) {
  const int bw = (w + block - 1) / block, bh = (h + block - 1) / block;
  std::vector<double> cells(static_cast<std::size_t>(bw) * bh);
  for (auto& c : cells) c = rng.uniform(lo, hi);
  ImageF t(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) t.at(x, y) = cells[static_cast<std::size_t>(y / block) * bw + x / block];
  return t;
}

/// Draws `tex` with its top-left corner at (ox, oy); fractional offsets are
/// resampled bilinearly.
/// Separable [1 2 1]/4 blur with clamped borders; softens block edges so
/// sub-pixel motion stays close to a pure translation.
inline ImageF soften(const ImageF& src) {
  ImageF tmp(src.width, src.height), out(src.width, src.height);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      tmp.at(x, y) = 0.25 * src.clamped(x - 1, y) + 0.5 * src.at(x, y) + 0.25 * src.clamped(x + 1, y);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x)
      out.at(x, y) = 0.25 * tmp.clamped(x, y - 1) + 0.5 * tmp.at(x, y) + 0.25 * tmp.clamped(x, y + 1);
  return out;
}

inline ImageF patch_texture(SplitMix64& rng, int w, int h) { return soften(block_texture(rng, w, h, 4, 10.0, 245.0)); }

inline void paste(ImageF& canvas, const ImageF& tex, double ox, double oy) {
  const int x_begin = std::max(0, static_cast<int>(std::ceil(ox)));
  const int x_end = std::min(canvas.width - 1, static_cast<int>(std::floor(ox + tex.width - 1)));
  const int y_begin = std::max(0, static_cast<int>(std::ceil(oy)));
  const int y_end = std::min(canvas.height - 1, static_cast<int>(std::floor(oy + tex.height - 1)));
  for (int y = y_begin; y <= y_end; ++y)
    for (int x = x_begin; x <= x_end; ++x) canvas.at(x, y) = tex.sample(x - ox, y - oy);
}

inline double wrap(double x, double lo, double span) {
  double r = std::fmod(x - lo, span);
  if (r < 0) r += span;
  return lo + r;
}

inline std::uint64_t sequence_seed(std::uint64_t seed, int split, ActionLabel label, int index) {
  SplitMix64 mix(SplitMix64(seed).next() ^ (static_cast<std::uint64_t>(split) << 40) ^
                 (static_cast<std::uint64_t>(index_of(label)) << 32) ^ static_cast<std::uint64_t>(index));
  mix.next();
  return mix.next();
}

}  // namespace synth

/// Ground-truth description of one generated sequence.
struct SynthSequence {
  ActionLabel label = ActionLabel::Walking;
  /// Horizontal speed of the moving patch in px/frame (translation classes),
  /// or oscillation amplitude in px (oscillating classes).
  double speed = 0.0;
  std::vector<Frame> frames;
};

/// walking: 1 px/frame translation; running: 3 px/frame; boxing: a sub-patch
/// oscillating beside a static body (period 10); clapping: two patches
/// converging and diverging (period 16). Speeds and amplitudes are jittered
/// by +-20%.
inline SynthSequence synthesize_sequence(ActionLabel label, std::uint64_t seq_seed, const SynthParams& p) {
  using synth::paste;
  SplitMix64 rng(seq_seed);
  const int W = p.size.width, H = p.size.height;
  const double jitter = rng.uniform(0.8, 1.2);
  const double sx = W / 160.0, sy = H / 120.0;

  const ImageF background = synth::block_texture(rng, W, H, 8, 112.0, 128.0);
  SynthSequence seq;
  seq.label = label;

  const int body_w = static_cast<int>(36 * sx), body_h = static_cast<int>(56 * sy);
  const ImageF body = synth::patch_texture(rng, body_w, body_h);
  const double body_y = rng.uniform(20.0, 40.0) * sy;

  double x0 = 0.0, phase = 0.0;
  ImageF hand_a, hand_b;
  switch (label) {
    case ActionLabel::Walking:
    case ActionLabel::Running:
      seq.speed = (label == ActionLabel::Walking ? 1.0 : 3.0) * jitter * sx;
      x0 = rng.uniform(-body_w, W);
      break;
    case ActionLabel::Boxing:
      seq.speed = 8.0 * jitter * sx;
      x0 = rng.uniform(20.0, 70.0) * sx;
      phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      hand_a = synth::patch_texture(rng, static_cast<int>(22 * sx), static_cast<int>(18 * sy));
      break;
    case ActionLabel::Clapping:
      seq.speed = 24.0 * jitter * sx;
      x0 = rng.uniform(55.0, 105.0) * sx;
      phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      hand_a = synth::patch_texture(rng, static_cast<int>(16 * sx), static_cast<int>(16 * sy));
      hand_b = synth::patch_texture(rng, static_cast<int>(16 * sx), static_cast<int>(16 * sy));
      break;
  }

  for (int t = 0; t < p.frames; ++t) {
    ImageF canvas = background;
    switch (label) {
      case ActionLabel::Walking:
      case ActionLabel::Running: {
        // Two copies half a wrap apart keep one on screen at all times.
        const double span = W + body_w;
        paste(canvas, body, synth::wrap(x0 + seq.speed * t, -body_w, span), body_y);
        paste(canvas, body, synth::wrap(x0 + seq.speed * t + span / 2, -body_w, span), body_y);
        break;
      }
      case ActionLabel::Boxing: {
        paste(canvas, body, x0, body_y);
        const double swing = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / 10.0 + phase);
        paste(canvas, hand_a, x0 + body_w + 2 * sx + seq.speed * swing, body_y + 8 * sy);
        break;
      }
      case ActionLabel::Clapping: {
        const double gap = 4.0 * sx + seq.speed * (0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * t / 16.0 + phase));
        const double hy = body_y + 20 * sy;
        paste(canvas, hand_a, x0 - gap / 2 - hand_a.width, hy);
        paste(canvas, hand_b, x0 + gap / 2, hy);
        break;
      }
    }
    Frame f(W, H, t);
    for (std::size_t i = 0; i < f.pixels.size(); ++i) {
      const double noise = p.noise_amplitude > 0 ? rng.uniform(-p.noise_amplitude, p.noise_amplitude) : 0.0;
      f.pixels[i] = round_intensity(canvas.data[i] + noise);
    }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

/// Writes `<out>/{train,test}/<class>/seq_NNN/frame_NNNN.pgm`.
inline void write_synthetic_corpus(const std::filesystem::path& out, const SynthParams& p) {
  namespace fs = std::filesystem;
  const int counts[2] = {p.train_per_class, p.test_per_class};
  const char* splits[2] = {"train", "test"};
  for (int split = 0; split < 2; ++split) {
    for (ActionLabel label : kAllActions) {
      for (int i = 0; i < counts[split]; ++i) {
        const SynthSequence seq = synthesize_sequence(label, synth::sequence_seed(p.seed, split, label, i), p);
        char name[32];
        std::snprintf(name, sizeof name, "seq_%03d", i);
        const fs::path dir = out / splits[split] / std::string(name_of(label)) / name;
        fs::create_directories(dir);
        for (const Frame& f : seq.frames) {
          std::snprintf(name, sizeof name, "frame_%04d.pgm", f.index);
          write_pgm(dir / name, f);
        }
      }
    }
  }
}

}  // namespace har
