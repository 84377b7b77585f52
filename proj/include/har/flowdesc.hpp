#pragma once

// Per-point motion descriptors built from sparse flow, and their aggregation
// into fixed-length sample vectors.

#include <array>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "har/action.hpp"
#include "har/bgmodel.hpp"
#include "har/frame.hpp"
#include "har/goodfeat.hpp"
#include "har/lkflow.hpp"

namespace har {

inline constexpr int kDescriptorSize = 12;

struct Velocity {
  double u = 0.0;
  double v = 0.0;
};

/// Flow in pixels per frame.
inline Velocity flow_velocity(const TrackResult& r, int frame_step) {
  if (!r.tracked()) throw std::invalid_argument("flow_velocity: point is not tracked");
  if (frame_step < 1) throw std::invalid_argument("flow_velocity: frame step must be >= 1");
  return {r.dx / frame_step, r.dy / frame_step};
}

struct TemporalDerivatives {
  double it = 0.0;
  double ut = 0.0;
  double vt = 0.0;
};

/// `prev` is empty on the first flow step of a track; u_t and v_t are then 0.
inline TemporalDerivatives temporal_derivatives(std::optional<Velocity> prev, Velocity cur,
                                                double intensity_prev, double intensity_cur,
                                                int frame_step) {
  TemporalDerivatives d;
  d.it = (intensity_cur - intensity_prev) / frame_step;
  if (prev) {
    d.ut = (cur.u - prev->u) / frame_step;
    d.vt = (cur.v - prev->v) / frame_step;
  }
  return d;
}

/// Spatial partials of the flow field, J = [[ux, uy], [vx, vy]].
struct FlowJacobian {
  double ux = 0.0;
  double uy = 0.0;
  double vx = 0.0;
  double vy = 0.0;
};

class UntrackableError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Finite-difference Jacobian from four probes at p +- h along each axis.
/// `probe(x, y)` returns the flow at a point, or nullopt when it cannot be
/// tracked. A missing probe falls back to a one-sided difference against the
/// centre; an axis with both probes missing contributes zero partials.
template <typename Probe>
FlowJacobian flow_jacobian(Probe&& probe, double px, double py, double h = 2.0) {
  const std::optional<Velocity> xp = probe(px + h, py);
  const std::optional<Velocity> xm = probe(px - h, py);
  const std::optional<Velocity> yp = probe(px, py + h);
  const std::optional<Velocity> ym = probe(px, py - h);
  if (!xp && !xm && !yp && !ym) throw UntrackableError("flow_jacobian: no probe could be tracked");

  std::optional<std::optional<Velocity>> centre;
  auto centre_flow = [&]() -> const std::optional<Velocity>& {
    if (!centre) centre = probe(px, py);
    return *centre;
  };
  auto axis = [&](const std::optional<Velocity>& plus, const std::optional<Velocity>& minus) -> Velocity {
    if (plus && minus) return {(plus->u - minus->u) / (2 * h), (plus->v - minus->v) / (2 * h)};
    if (!plus && !minus) return {};
    const auto& c = centre_flow();
    if (!c) return {};
    if (plus) return {(plus->u - c->u) / h, (plus->v - c->v) / h};
    return {(c->u - minus->u) / h, (c->v - minus->v) / h};
  };
  const Velocity dx = axis(xp, xm);
  const Velocity dy = axis(yp, ym);
  return {dx.u, dy.u, dx.v, dy.v};
}

struct FlowInvariants {
  double divergence = 0.0;
  double vorticity = 0.0;
  double g_ten = 0.0;
  double s_ten = 0.0;
};

/// Divergence, vorticity, and the second invariants of J and of its
/// symmetric part S.
inline FlowInvariants flow_invariants(const FlowJacobian& j) {
  FlowInvariants f;
  f.divergence = j.ux + j.vy;
  f.vorticity = j.vx - j.uy;
  const double tr = j.ux + j.vy;
  const double tr_j2 = j.ux * j.ux + 2.0 * j.uy * j.vx + j.vy * j.vy;
  f.g_ten = 0.5 * (tr * tr - tr_j2);
  const double s_off = 0.5 * (j.uy + j.vx);
  const double tr_s2 = j.ux * j.ux + 2.0 * s_off * s_off + j.vy * j.vy;
  f.s_ten = 0.5 * (tr * tr - tr_s2);
  return f;
}

/// [x, y, t, I_t, u, v, u_t, v_t, Div, Vor, G_ten, S_ten]
using PointDescriptor = std::array<double, kDescriptorSize>;

struct PointState {
  double x = 0.0;
  double y = 0.0;
  Velocity flow;
  TemporalDerivatives derivatives;
  FlowInvariants invariants;
};

struct WindowGeometry {
  int frame_width = 1;
  int frame_height = 1;
  int step_index = 0;
  int steps_per_window = 1;
};

inline PointDescriptor assemble_descriptor(const PointState& s, const WindowGeometry& g) {
  const double t = g.steps_per_window > 1 ? double(g.step_index) / (g.steps_per_window - 1) : 0.0;
  return {s.x / g.frame_width,        s.y / g.frame_height,
          t,                          s.derivatives.it,
          s.flow.u,                   s.flow.v,
          s.derivatives.ut,           s.derivatives.vt,
          s.invariants.divergence,    s.invariants.vorticity,
          s.invariants.g_ten,         s.invariants.s_ten};
}

struct SampleVector {
  std::vector<double> values;
  std::optional<ActionLabel> label;
};

struct DescriptorParams {
  int feature_size = 10;
  int flow_step = 3;
  double jacobian_offset = 2.0;
  GoodFeatureParams features;
  TrackerParams tracker;
};

/// Per-window diagnostics, filled when requested.
struct WindowTrace {
  int first_frame = 0;
  std::vector<FeaturePoint> features;
  struct Step {
    int from_frame = 0;
    int to_frame = 0;
    std::vector<FeaturePoint> points;
    std::vector<TrackResult> results;
  };
  std::vector<Step> steps;
};

inline int flow_steps_in_window(int window_frames, int flow_step) {
  return (window_frames - 1) / flow_step;
}

/// One sample vector for a window of consecutive frames: features detected on
/// the first frame, tracked every `flow_step` frames, and per slot averaged
/// over the steps where the point is tracked. Slots lost for more than half
/// the steps, and slots without a feature, are zero.
inline SampleVector aggregate_sample(std::span<const Frame> window, const DescriptorParams& params,
                                     const ForegroundMask* gate = nullptr, WindowTrace* trace = nullptr) {
  if (window.empty()) throw std::invalid_argument("aggregate_sample: empty window");
  if (params.feature_size < 1) throw std::invalid_argument("aggregate_sample: feature size must be >= 1");
  if (params.flow_step < 1) throw std::invalid_argument("aggregate_sample: flow step must be >= 1");
  const int steps = flow_steps_in_window(static_cast<int>(window.size()), params.flow_step);
  if (steps < 1) throw std::invalid_argument("aggregate_sample: window holds no flow step");

  const int n_slots = params.feature_size;
  SampleVector out;
  out.values.assign(static_cast<std::size_t>(n_slots) * kDescriptorSize, 0.0);

  GoodFeatureParams fp = params.features;
  fp.max_features = gate ? std::numeric_limits<int>::max() : n_slots;
  std::vector<FeaturePoint> features = detect_good_features(window.front(), fp);
  if (gate) {
    std::erase_if(features, [gate](const FeaturePoint& p) {
      return !gate->at(static_cast<int>(p.x), static_cast<int>(p.y));
    });
    if (static_cast<int>(features.size()) > n_slots) features.resize(static_cast<std::size_t>(n_slots));
  }
  if (trace) {
    trace->first_frame = window.front().index;
    trace->features = features;
    trace->steps.clear();
  }
  if (features.empty()) return out;

  struct Slot {
    FeaturePoint pos;
    bool alive = true;
    std::optional<Velocity> prev_flow;
    PointDescriptor sum{};
    int tracked_steps = 0;
  };
  std::vector<Slot> slots;
  for (const auto& f : features) {
    Slot s;
    s.pos = f;
    slots.push_back(s);
  }

  const int fw = window.front().width;
  const int fh = window.front().height;
  const int step = params.flow_step;
  Pyramid from = build_pyramid(window[0], params.tracker.levels);
  for (int k = 0; k < steps; ++k) {
    const Frame& next_frame = window[static_cast<std::size_t>((k + 1) * step)];
    Pyramid to = build_pyramid(next_frame, params.tracker.levels);
    auto probe = [&](double x, double y) -> std::optional<Velocity> {
      const TrackResult r = track_point(from, to, {x, y, 0.0}, params.tracker);
      if (!r.tracked()) return std::nullopt;
      return flow_velocity(r, step);
    };

    WindowTrace::Step* step_trace = nullptr;
    if (trace) {
      trace->steps.push_back({window[static_cast<std::size_t>(k * step)].index, next_frame.index, {}, {}});
      step_trace = &trace->steps.back();
    }
    for (auto& slot : slots) {
      if (!slot.alive) continue;
      const TrackResult r = track_point(from, to, slot.pos, params.tracker);
      if (step_trace) {
        step_trace->points.push_back(slot.pos);
        step_trace->results.push_back(r);
      }
      if (!r.tracked()) {
        slot.alive = false;
        continue;
      }
      PointState st;
      st.x = slot.pos.x;
      st.y = slot.pos.y;
      st.flow = flow_velocity(r, step);
      st.derivatives = temporal_derivatives(slot.prev_flow, st.flow, from.levels[0].sample(st.x, st.y),
                                            to.levels[0].sample(st.x, st.y), step);
      FlowJacobian jac;
      try {
        jac = flow_jacobian(probe, st.x, st.y, params.jacobian_offset);
      } catch (const UntrackableError&) {
        jac = {};
      }
      st.invariants = flow_invariants(jac);
      const PointDescriptor d = assemble_descriptor(st, {fw, fh, k, steps});
      for (int c = 0; c < kDescriptorSize; ++c) slot.sum[c] += d[c];
      ++slot.tracked_steps;
      slot.prev_flow = st.flow;
      slot.pos = {r.new_x, r.new_y, slot.pos.score};
    }
    from = std::move(to);
  }

  for (std::size_t s = 0; s < slots.size(); ++s) {
    const Slot& slot = slots[s];
    const int lost = steps - slot.tracked_steps;
    if (slot.tracked_steps == 0 || 2 * lost > steps) continue;
    for (int c = 0; c < kDescriptorSize; ++c)
      out.values[s * kDescriptorSize + c] = slot.sum[c] / slot.tracked_steps;
  }
  return out;
}

// Sample files: header `harfv 1 <N> 12`, then one sample per line with an
// optional trailing `label=<class>`.

inline void write_samples(std::ostream& os, std::span<const SampleVector> samples, int feature_size) {
  os << "harfv 1 " << feature_size << ' ' << kDescriptorSize << '\n';
  os << std::setprecision(17);
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < s.values.size(); ++i) os << (i ? " " : "") << s.values[i];
    if (s.label) os << " label=" << name_of(*s.label);
    os << '\n';
  }
}

struct SampleFile {
  int feature_size = 0;
  std::vector<SampleVector> samples;
};

inline SampleFile read_samples(std::istream& is) {
  SampleFile file;
  std::string line;
  if (!std::getline(is, line)) throw DataError("sample file: empty");
  {
    std::istringstream hs(line);
    std::string magic;
    int version = 0, per_point = 0;
    if (!(hs >> magic >> version >> file.feature_size >> per_point) || magic != "harfv")
      throw DataError("sample file: bad header");
    if (version != 1) throw DataError("sample file: unsupported version");
    if (per_point != kDescriptorSize || file.feature_size < 1) throw DataError("sample file: bad dimensions");
  }
  const std::size_t dim = static_cast<std::size_t>(file.feature_size) * kDescriptorSize;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    SampleVector s;
    std::string tok;
    while (ls >> tok) {
      if (tok.rfind("label=", 0) == 0) {
        s.label = parse_action(tok.substr(6));
        if (!s.label) throw DataError("sample file: unknown label " + tok);
        continue;
      }
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size() || !std::isfinite(v)) throw DataError("sample file: bad value " + tok);
      s.values.push_back(v);
    }
    if (s.values.size() != dim) throw DataError("sample file: sample has wrong length");
    file.samples.push_back(std::move(s));
  }
  return file;
}

}  // namespace har
