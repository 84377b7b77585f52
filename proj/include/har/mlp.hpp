#pragma once

// Feedforward multilayer perceptron with a scaled-tanh activation, exact
// backpropagation, and RPROP- batch training.

#include <algorithm>
#include <filesystem>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "har/action.hpp"
#include "har/frame.hpp"

namespace har {

class ModelFormatError : public DataError {
public:
  using DataError::DataError;
};

/// beta * (1 - e^{-ax}) / (1 + e^{-ax}) == beta * tanh(ax / 2).
inline double activation(double x, double a, double beta) {
  const double ax = a * x;
  if (ax > 500.0) return beta;
  if (ax < -500.0) return -beta;
  return beta * std::tanh(0.5 * ax);
}

/// Derivative expressed through the activation value y = f(u).
inline double activation_slope(double y, double a, double beta) {
  return (a / (2.0 * beta)) * (beta * beta - y * y);
}

/// splitmix64: portable across platforms and standard libraries.
class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
  std::uint64_t state_;
};

struct DenseLayer {
  int inputs = 0;
  int outputs = 0;
  std::vector<double> weights;  // outputs x inputs, row-major
  std::vector<double> biases;

  DenseLayer() = default;
  DenseLayer(int in, int out)
      : inputs(in), outputs(out), weights(static_cast<std::size_t>(in) * out, 0.0),
        biases(static_cast<std::size_t>(out), 0.0) {}

  double& w(int o, int i) { return weights[static_cast<std::size_t>(o) * inputs + i]; }
  double w(int o, int i) const { return weights[static_cast<std::size_t>(o) * inputs + i]; }
};

struct MlpModel {
  std::vector<DenseLayer> layers;
  double a = 1.0;
  double beta = 1.0;
  // Input standardization: (x - mean) * scale.
  std::vector<double> input_mean;
  std::vector<double> input_scale;

  MlpModel() = default;

  explicit MlpModel(std::span<const int> layer_sizes, double slope = 1.0, double amplitude = 1.0)
      : a(slope), beta(amplitude) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("MlpModel: need at least input and output layers");
    for (int s : layer_sizes)
      if (s < 1) throw std::invalid_argument("MlpModel: layer sizes must be positive");
    if (!(slope > 0.0) || !(amplitude > 0.0)) throw std::invalid_argument("MlpModel: a and beta must be positive");
    for (std::size_t l = 1; l < layer_sizes.size(); ++l) layers.emplace_back(layer_sizes[l - 1], layer_sizes[l]);
    input_mean.assign(static_cast<std::size_t>(layer_sizes[0]), 0.0);
    input_scale.assign(static_cast<std::size_t>(layer_sizes[0]), 1.0);
  }

  MlpModel(std::initializer_list<int> layer_sizes, double slope = 1.0, double amplitude = 1.0)
      : MlpModel(std::span<const int>(layer_sizes.begin(), layer_sizes.size()), slope, amplitude) {}

  int input_size() const { return layers.front().inputs; }
  int output_size() const { return layers.back().outputs; }

  std::vector<int> layer_sizes() const {
    std::vector<int> s{input_size()};
    for (const auto& l : layers) s.push_back(l.outputs);
    return s;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.biases.size();
    return n;
  }

  /// Visits every weight then bias of each layer, in a fixed order.
  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    for (auto& l : layers) {
      for (auto& w : l.weights) fn(w);
      for (auto& b : l.biases) fn(b);
    }
  }

  /// Uniform in +-1/sqrt(fan_in); biases zero.
  void initialize(std::uint64_t seed) {
    SplitMix64 rng(seed);
    for (auto& l : layers) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.inputs));
      for (auto& w : l.weights) w = rng.uniform(-bound, bound);
      std::fill(l.biases.begin(), l.biases.end(), 0.0);
    }
  }

  std::vector<double> standardize(std::span<const double> input) const {
    if (static_cast<int>(input.size()) != input_size())
      throw std::invalid_argument("MlpModel: input dimension mismatch");
    std::vector<double> x(input.begin(), input.end());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (x[i] - input_mean[i]) * input_scale[i];
    return x;
  }
};

/// Activations of every layer; front() is the input, back() the output.
struct ForwardPass {
  std::vector<std::vector<double>> activations;

  const std::vector<double>& output() const { return activations.back(); }
};

inline ForwardPass forward(const MlpModel& m, std::span<const double> input) {
  if (static_cast<int>(input.size()) != m.input_size())
    throw std::invalid_argument("forward: input dimension mismatch");
  ForwardPass pass;
  pass.activations.emplace_back(input.begin(), input.end());
  for (const auto& layer : m.layers) {
    const auto& x = pass.activations.back();
    std::vector<double> y(static_cast<std::size_t>(layer.outputs));
    for (int o = 0; o < layer.outputs; ++o) {
      const double* row = &layer.weights[static_cast<std::size_t>(o) * layer.inputs];
      double u = layer.biases[static_cast<std::size_t>(o)];
      for (int i = 0; i < layer.inputs; ++i) u += row[i] * x[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(o)] = activation(u, m.a, m.beta);
    }
    pass.activations.push_back(std::move(y));
  }
  return pass;
}

/// Same shape as the model's layers; holds dE/dw and dE/db.
struct Gradient {
  std::vector<DenseLayer> layers;

  static Gradient zeros_like(const MlpModel& m) {
    Gradient g;
    for (const auto& l : m.layers) g.layers.emplace_back(l.inputs, l.outputs);
    return g;
  }

  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    for (auto& l : layers) {
      for (auto& w : l.weights) fn(w);
      for (auto& b : l.biases) fn(b);
    }
  }

  void add(const Gradient& other) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (std::size_t i = 0; i < layers[l].weights.size(); ++i) layers[l].weights[i] += other.layers[l].weights[i];
      for (std::size_t i = 0; i < layers[l].biases.size(); ++i) layers[l].biases[i] += other.layers[l].biases[i];
    }
  }
};

/// Accumulates the gradient of 0.5 * |output - target|^2 into `grad` and
/// returns that loss.
inline double backprop_accumulate(const MlpModel& m, std::span<const double> input,
                                  std::span<const double> target, Gradient& grad) {
  if (static_cast<int>(target.size()) != m.output_size())
    throw std::invalid_argument("backprop: target dimension mismatch");
  const ForwardPass pass = forward(m, input);
  const auto& y = pass.output();

  double loss = 0.0;
  std::vector<double> delta(y.size());
  for (std::size_t o = 0; o < y.size(); ++o) {
    const double err = y[o] - target[o];
    loss += 0.5 * err * err;
    delta[o] = err * activation_slope(y[o], m.a, m.beta);
  }

  for (std::size_t l = m.layers.size(); l-- > 0;) {
    const DenseLayer& layer = m.layers[l];
    DenseLayer& g = grad.layers[l];
    const auto& x = pass.activations[l];
    for (int o = 0; o < layer.outputs; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      g.biases[static_cast<std::size_t>(o)] += d;
      double* row = &g.weights[static_cast<std::size_t>(o) * layer.inputs];
      for (int i = 0; i < layer.inputs; ++i) row[i] += d * x[static_cast<std::size_t>(i)];
    }
    if (l == 0) break;
    std::vector<double> prev(static_cast<std::size_t>(layer.inputs), 0.0);
    for (int o = 0; o < layer.outputs; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      const double* row = &layer.weights[static_cast<std::size_t>(o) * layer.inputs];
      for (int i = 0; i < layer.inputs; ++i) prev[static_cast<std::size_t>(i)] += row[i] * d;
    }
    for (std::size_t i = 0; i < prev.size(); ++i) prev[i] *= activation_slope(x[i], m.a, m.beta);
    delta = std::move(prev);
  }
  return loss;
}

inline Gradient backprop(const MlpModel& m, std::span<const double> input, std::span<const double> target) {
  Gradient g = Gradient::zeros_like(m);
  backprop_accumulate(m, input, target, g);
  return g;
}

struct RpropParams {
  double eta_plus = 1.2;
  double eta_minus = 0.5;
  double delta_initial = 0.1;
  double delta_min = 1e-6;
  double delta_max = 50.0;
};

/// Per-parameter step sizes and last gradients, flattened in
/// MlpModel::for_each_parameter order.
struct RpropState {
  RpropParams params;
  std::vector<double> step;
  std::vector<double> previous_gradient;

  RpropState() = default;
  RpropState(std::size_t parameter_count, RpropParams p)
      : params(p), step(parameter_count, p.delta_initial), previous_gradient(parameter_count, 0.0) {
    if (!(p.eta_minus > 0.0 && p.eta_minus < 1.0 && p.eta_plus > 1.0))
      throw std::invalid_argument("RpropState: need 0 < eta- < 1 < eta+");
    if (!(p.delta_min > 0.0 && p.delta_min <= p.delta_initial && p.delta_initial <= p.delta_max))
      throw std::invalid_argument("RpropState: need 0 < delta_min <= delta_0 <= delta_max");
  }
  explicit RpropState(const MlpModel& m, RpropParams p = {}) : RpropState(m.parameter_count(), p) {}
};

/// One RPROP- update of a single parameter.
inline void rprop_update(double& weight, double gradient, double& step, double& previous,
                         const RpropParams& p) {
  const double sign_product = previous * gradient;
  if (sign_product > 0.0) {
    step = std::min(step * p.eta_plus, p.delta_max);
  } else if (sign_product < 0.0) {
    step = std::max(step * p.eta_minus, p.delta_min);
    gradient = 0.0;
  }
  if (gradient > 0.0) weight -= step;
  else if (gradient < 0.0) weight += step;
  previous = gradient;
}

/// RPROP- over a flat parameter vector.
inline void rprop_step(std::span<double> params, std::span<const double> grads, RpropState& s) {
  if (params.size() != grads.size() || params.size() != s.step.size())
    throw std::invalid_argument("rprop_step: shape mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    rprop_update(params[i], grads[i], s.step[i], s.previous_gradient[i], s.params);
}

inline void rprop_step(MlpModel& m, Gradient& grads, RpropState& s) {
  if (s.step.size() != m.parameter_count()) throw std::invalid_argument("rprop_step: shape mismatch");
  std::vector<double> flat;
  flat.reserve(s.step.size());
  grads.for_each_parameter([&](double& g) { flat.push_back(g); });
  if (flat.size() != s.step.size()) throw std::invalid_argument("rprop_step: shape mismatch");
  std::size_t i = 0;
  m.for_each_parameter([&](double& w) {
    rprop_update(w, flat[i], s.step[i], s.previous_gradient[i], s.params);
    ++i;
  });
}

struct TrainingSample {
  std::vector<double> input;
  ActionLabel label = ActionLabel::Boxing;
};

struct TrainParams {
  int epochs = 100;
  RpropParams rprop;
  /// Target magnitude as a fraction of beta.
  double target_level = 0.9;
};

struct TrainResult {
  MlpModel model;
  std::vector<double> loss_trace;
};

inline std::vector<double> one_hot_target(int label, int classes, double level) {
  std::vector<double> t(static_cast<std::size_t>(classes), -level);
  t[static_cast<std::size_t>(label)] = level;
  return t;
}

/// Per-input mean and inverse standard deviation. With `period` > 0, inputs
/// whose indices agree modulo `period` share one pooled estimate (slots of
/// the same descriptor component). Spreads below `min_spread` are replaced
/// by `min_spread`, so near-constant inputs are not blown up.
inline void fit_standardization(MlpModel& m, std::span<const TrainingSample> data, int period = 0,
                                double min_spread = 0.0) {
  const std::size_t dim = static_cast<std::size_t>(m.input_size());
  const std::size_t groups = period > 0 ? static_cast<std::size_t>(period) : dim;
  if (dim % groups != 0) throw std::invalid_argument("fit_standardization: period must divide the input size");
  const double n = static_cast<double>(data.size()) * static_cast<double>(dim / groups);
  std::vector<double> mean(groups, 0.0), var(groups, 0.0);
  for (const auto& s : data)
    for (std::size_t i = 0; i < dim; ++i) mean[i % groups] += s.input[i];
  for (auto& v : mean) v /= n;
  for (const auto& s : data)
    for (std::size_t i = 0; i < dim; ++i) {
      const double d = s.input[i] - mean[i % groups];
      var[i % groups] += d * d;
    }
  m.input_mean.resize(dim);
  m.input_scale.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const double sd = std::max(std::sqrt(var[i % groups] / n), min_spread);
    m.input_mean[i] = mean[i % groups];
    m.input_scale[i] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
}

/// Full-batch RPROP on a model whose weights are already initialized. The
/// standardization stored in `m` is applied to every input. Loss per epoch is
/// the batch sum of squared errors before that epoch's update.
inline TrainResult train(MlpModel m, std::span<const TrainingSample> data, const TrainParams& p) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  const int classes = m.output_size();
  std::vector<int> per_class(static_cast<std::size_t>(classes), 0);
  for (const auto& s : data) {
    if (static_cast<int>(s.input.size()) != m.input_size())
      throw std::invalid_argument("train: sample dimension mismatch");
    const int c = index_of(s.label);
    if (c < 0 || c >= classes) throw std::invalid_argument("train: label outside the output layer");
    ++per_class[static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < classes; ++c)
    if (per_class[static_cast<std::size_t>(c)] == 0)
      throw std::invalid_argument("train: class " + std::to_string(c) + " has no samples");

  std::vector<std::vector<double>> inputs, targets;
  for (const auto& s : data) {
    inputs.push_back(m.standardize(s.input));
    targets.push_back(one_hot_target(index_of(s.label), classes, p.target_level * m.beta));
  }

  TrainResult result;
  RpropState state(m, p.rprop);
  for (int epoch = 0; epoch < p.epochs; ++epoch) {
    Gradient g = Gradient::zeros_like(m);
    double loss = 0.0;
    for (std::size_t n = 0; n < inputs.size(); ++n) loss += 2.0 * backprop_accumulate(m, inputs[n], targets[n], g);
    result.loss_trace.push_back(loss);
    rprop_step(m, g, state);
  }
  result.model = std::move(m);
  return result;
}

/// Batch sum of squared errors (same convention as the training trace).
inline double batch_loss(const MlpModel& m, std::span<const TrainingSample> data, double target_level = 0.9) {
  double loss = 0.0;
  for (const auto& s : data) {
    const auto y = forward(m, m.standardize(s.input)).output();
    const auto t = one_hot_target(index_of(s.label), m.output_size(), target_level * m.beta);
    for (std::size_t o = 0; o < y.size(); ++o) loss += (y[o] - t[o]) * (y[o] - t[o]);
  }
  return loss;
}

struct Prediction {
  ActionLabel label = ActionLabel::Boxing;
  std::vector<double> scores;
};

/// Argmax over outputs; ties go to the lowest index.
inline int argmax(std::span<const double> v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(best)]) best = i;
  return best;
}

inline Prediction predict(const MlpModel& m, std::span<const double> sample) {
  if (m.output_size() != kNumActions) throw std::invalid_argument("predict: model does not have 4 outputs");
  Prediction p;
  p.scores = forward(m, m.standardize(sample)).output();
  p.label = static_cast<ActionLabel>(argmax(p.scores));
  return p;
}

// Model file:
//   harmlp 1
//   <layer sizes>
//   <a> <beta>
//   <input means> <input scales>
//   per layer: one line per weight-matrix row, then one line of biases

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_row(std::ostream& os, std::span<const double> row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) os << ' ';
    os << format_double(row[i]);
  }
  os << '\n';
}

inline std::vector<double> parse_row(const std::string& line, std::size_t expected, const char* what) {
  std::vector<double> row;
  std::istringstream ls(line);
  std::string tok;
  while (ls >> tok) {
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) throw ModelFormatError(std::string("model: malformed number in ") + what);
    if (!std::isfinite(v)) throw ModelFormatError(std::string("model: non-finite value in ") + what);
    row.push_back(v);
  }
  if (row.size() != expected)
    throw ModelFormatError(std::string("model: ") + what + " has " + std::to_string(row.size()) +
                           " values, expected " + std::to_string(expected));
  return row;
}

}  // namespace detail

inline void save_model(std::ostream& os, const MlpModel& m) {
  os << "harmlp 1\n";
  const auto sizes = m.layer_sizes();
  for (std::size_t i = 0; i < sizes.size(); ++i) os << (i ? " " : "") << sizes[i];
  os << '\n' << detail::format_double(m.a) << ' ' << detail::format_double(m.beta) << '\n';
  std::vector<double> stats(m.input_mean);
  stats.insert(stats.end(), m.input_scale.begin(), m.input_scale.end());
  detail::write_row(os, stats);
  for (const auto& l : m.layers) {
    for (int o = 0; o < l.outputs; ++o)
      detail::write_row(os, std::span<const double>(&l.weights[static_cast<std::size_t>(o) * l.inputs],
                                                    static_cast<std::size_t>(l.inputs)));
    detail::write_row(os, l.biases);
  }
}

inline MlpModel load_model(std::istream& is) {
  std::string line;
  auto next_line = [&](const char* what) -> const std::string& {
    if (!std::getline(is, line)) throw ModelFormatError(std::string("model: missing ") + what);
    return line;
  };
  {
    std::istringstream hs(next_line("header"));
    std::string magic;
    int version = 0;
    if (!(hs >> magic >> version) || magic != "harmlp") throw ModelFormatError("model: bad header");
    if (version != 1) throw ModelFormatError("model: unsupported version " + std::to_string(version));
  }
  std::vector<int> sizes;
  {
    std::istringstream ls(next_line("layer sizes"));
    int s = 0;
    while (ls >> s) sizes.push_back(s);
    if (!ls.eof()) throw ModelFormatError("model: malformed layer sizes");
    if (sizes.size() < 2 || std::any_of(sizes.begin(), sizes.end(), [](int v) { return v < 1; }))
      throw ModelFormatError("model: invalid layer sizes");
  }
  const auto ab = detail::parse_row(next_line("activation parameters"), 2, "activation parameters");
  if (!(ab[0] > 0.0) || !(ab[1] > 0.0)) throw ModelFormatError("model: a and beta must be positive");
  MlpModel m(std::span<const int>(sizes), ab[0], ab[1]);
  const std::size_t dim = static_cast<std::size_t>(sizes[0]);
  const auto stats = detail::parse_row(next_line("standardization"), 2 * dim, "standardization");
  m.input_mean.assign(stats.begin(), stats.begin() + static_cast<std::ptrdiff_t>(dim));
  m.input_scale.assign(stats.begin() + static_cast<std::ptrdiff_t>(dim), stats.end());
  for (auto& l : m.layers) {
    for (int o = 0; o < l.outputs; ++o) {
      const auto row = detail::parse_row(next_line("weight row"), static_cast<std::size_t>(l.inputs), "weight row");
      std::copy(row.begin(), row.end(), l.weights.begin() + static_cast<std::ptrdiff_t>(o) * l.inputs);
    }
    l.biases = detail::parse_row(next_line("biases"), static_cast<std::size_t>(l.outputs), "biases");
  }
  while (std::getline(is, line))
    if (line.find_first_not_of(" \t\r") != std::string::npos)
      throw ModelFormatError("model: trailing data after last layer");
  return m;
}

inline void save_model(const std::filesystem::path& path, const MlpModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  save_model(os, m);
}

inline MlpModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return load_model(is);
}

}  // namespace har
