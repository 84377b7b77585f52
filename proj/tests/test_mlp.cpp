#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "har/mlp.hpp"

using namespace har;

namespace {

std::vector<double> random_vector(SplitMix64& rng, std::size_t n, double lo = -1, double hi = 1) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

double half_sq_error(const MlpModel& m, const std::vector<double>& x, const std::vector<double>& t) {
  const auto y = forward(m, x).output();
  double e = 0;
  for (std::size_t i = 0; i < y.size(); ++i) e += 0.5 * (y[i] - t[i]) * (y[i] - t[i]);
  return e;
}

std::vector<double> flat_parameters(MlpModel m) {
  std::vector<double> out;
  m.for_each_parameter([&](double& w) { out.push_back(w); });
  return out;
}

std::string saved(const MlpModel& m) {
  std::ostringstream os;
  save_model(os, m);
  return os.str();
}

MlpModel loaded(const std::string& text) {
  std::istringstream is(text);
  return load_model(is);
}

}  // namespace

TEST(Activation, Examples) {
  EXPECT_EQ(activation(0.0, 1.0, 1.0), 0.0);
  EXPECT_NEAR(activation(20.0, 2.0, 1.0), 1.0, 1e-12);
  EXPECT_NEAR(activation(0.7, 2.0, 1.0), std::tanh(0.7), 1e-15);
  EXPECT_EQ(activation(1e6, 1.0, 2.5), 2.5);
  EXPECT_EQ(activation(-1e6, 1.0, 2.5), -2.5);
  // The printed ratio form, away from overflow.
  for (double x : {-3.0, -0.4, 0.1, 2.2}) {
    const double a = 1.7, b = 1.3;
    EXPECT_NEAR(activation(x, a, b), b * (1 - std::exp(-a * x)) / (1 + std::exp(-a * x)), 1e-14);
  }
}

TEST(Activation, SlopeAtZeroAndEverywhere) {
  const double a = 1.4, b = 2.0, eps = 1e-6;
  const double fd0 = (activation(eps, a, b) - activation(-eps, a, b)) / (2 * eps);
  EXPECT_NEAR(fd0, a * b / 2, 1e-8);
  for (double x : {-2.0, -0.5, 0.3, 1.9}) {
    const double fd = (activation(x + eps, a, b) - activation(x - eps, a, b)) / (2 * eps);
    EXPECT_NEAR(activation_slope(activation(x, a, b), a, b), fd, 1e-8);
  }
}

TEST(Forward, ZeroNetAndSingleNeuron) {
  MlpModel z{3, 4, 2};
  const ForwardPass zp = forward(z, std::vector<double>{1, -2, 3});
  for (double y : zp.output()) EXPECT_EQ(y, 0.0);
  MlpModel one{1, 1};
  one.layers[0].w(0, 0) = 1.0;
  EXPECT_EQ(forward(one, std::vector<double>{0.0}).output()[0], 0.0);
  EXPECT_THROW(forward(one, std::vector<double>{0.0, 1.0}), std::invalid_argument);
}

TEST(Forward, HandEvaluated221) {
  MlpModel m({2, 2, 1}, 1.5, 1.2);
  m.layers[0].w(0, 0) = 0.3;
  m.layers[0].w(0, 1) = -0.7;
  m.layers[0].w(1, 0) = 1.1;
  m.layers[0].w(1, 1) = 0.4;
  m.layers[0].biases = {0.05, -0.2};
  m.layers[1].w(0, 0) = -0.9;
  m.layers[1].w(0, 1) = 0.6;
  m.layers[1].biases = {0.1};
  const double x0 = 0.8, x1 = -1.3;
  auto f = [](double u) { return 1.2 * (1 - std::exp(-1.5 * u)) / (1 + std::exp(-1.5 * u)); };
  const double h0 = f(0.3 * x0 - 0.7 * x1 + 0.05), h1 = f(1.1 * x0 + 0.4 * x1 - 0.2);
  const double y = f(-0.9 * h0 + 0.6 * h1 + 0.1);
  const ForwardPass p = forward(m, std::vector<double>{x0, x1});
  ASSERT_EQ(p.activations.size(), 3u);
  EXPECT_NEAR(p.activations[1][0], h0, 1e-12);
  EXPECT_NEAR(p.activations[1][1], h1, 1e-12);
  EXPECT_NEAR(p.output()[0], y, 1e-12);
}

TEST(Model, ConstructionErrors) {
  EXPECT_THROW(MlpModel({4}), std::invalid_argument);
  EXPECT_THROW(MlpModel({4, 0, 2}), std::invalid_argument);
  EXPECT_THROW(MlpModel({4, 2}, 0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(MlpModel({4, 2}, 1.0, -1.0), std::invalid_argument);
  MlpModel m{120, 200, 4};
  EXPECT_EQ(m.layer_sizes(), (std::vector<int>{120, 200, 4}));
  EXPECT_EQ(m.parameter_count(), 120u * 200 + 200 + 200 * 4 + 4);
}

TEST(Model, InitializationBounds) {
  MlpModel m{50, 8, 4};
  m.initialize(9);
  for (const auto& l : m.layers) {
    const double bound = 1.0 / std::sqrt(double(l.inputs));
    for (double w : l.weights) {
      EXPECT_LE(std::fabs(w), bound);
    }
    for (double b : l.biases) EXPECT_EQ(b, 0.0);
  }
  MlpModel n{50, 8, 4};
  n.initialize(9);
  EXPECT_EQ(flat_parameters(m), flat_parameters(n));
}

TEST(Backprop, ZeroAtTarget) {
  MlpModel m{3, 4, 2};
  m.initialize(1);
  const std::vector<double> x{0.2, -0.5, 0.9};
  const auto y = forward(m, x).output();
  Gradient g = backprop(m, x, y);
  g.for_each_parameter([](double& v) { EXPECT_EQ(v, 0.0); });
}

TEST(Backprop, ZeroNetOnlyOutputBias) {
  MlpModel m{3, 4, 2};
  Gradient g = backprop(m, std::vector<double>{0, 0, 0}, std::vector<double>{0.9, -0.9});
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    for (double w : g.layers[l].weights) EXPECT_EQ(w, 0.0);
    for (double b : g.layers[l].biases) {
      if (l + 1 == g.layers.size()) {
        EXPECT_NE(b, 0.0);
      } else {
        EXPECT_EQ(b, 0.0);
      }
    }
  }
  EXPECT_THROW(backprop(m, std::vector<double>{0, 0, 0}, std::vector<double>{1}), std::invalid_argument);
}

TEST(Backprop, MatchesFiniteDifferences) {
  SplitMix64 rng(77);
  for (int trial = 0; trial < 30; ++trial) {
    const int in = 1 + static_cast<int>(rng.next() % 4), hid = 1 + static_cast<int>(rng.next() % 5);
    const int out = 1 + static_cast<int>(rng.next() % 3);
    MlpModel m({in, hid, out}, rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0));
    m.for_each_parameter([&](double& w) { w = rng.uniform(-1.5, 1.5); });
    ASSERT_LE(m.parameter_count(), 50u);
    const auto x = random_vector(rng, static_cast<std::size_t>(in), -2, 2);
    const auto t = random_vector(rng, static_cast<std::size_t>(out));
    Gradient g = backprop(m, x, t);
    std::vector<double> analytic;
    g.for_each_parameter([&](double& v) { analytic.push_back(v); });
    std::size_t k = 0;
    const double eps = 1e-5;
    MlpModel probe = m;
    probe.for_each_parameter([&](double& w) {
      const double keep = w;
      w = keep + eps;
      const double ep = half_sq_error(probe, x, t);
      w = keep - eps;
      const double em = half_sq_error(probe, x, t);
      w = keep;
      const double numeric = (ep - em) / (2 * eps);
      const double scale = std::max({std::fabs(numeric), std::fabs(analytic[k]), 1e-6});
      EXPECT_LT(std::fabs(numeric - analytic[k]) / scale, 1e-4) << "trial " << trial << " param " << k;
      ++k;
    });
  }
}

TEST(Rprop, SingleParameterRules) {
  RpropParams p;
  double w = 1.0, step = p.delta_initial, prev = 0.0;
  rprop_update(w, 2.0, step, prev, p);
  EXPECT_DOUBLE_EQ(w, 1.0 - 0.1);
  EXPECT_EQ(step, 0.1);
  rprop_update(w, 0.5, step, prev, p);
  EXPECT_DOUBLE_EQ(step, 0.1 * 1.2);
  EXPECT_DOUBLE_EQ(w, 0.9 - 0.12);
  // Sign flip: step shrinks, no move, and the stored gradient is zero.
  const double before = w;
  rprop_update(w, -3.0, step, prev, p);
  EXPECT_DOUBLE_EQ(step, 0.12 * 0.5);
  EXPECT_EQ(w, before);
  EXPECT_EQ(prev, 0.0);
  // Next step has no sign test, so the step is kept and used.
  rprop_update(w, -1.0, step, prev, p);
  EXPECT_DOUBLE_EQ(step, 0.06);
  EXPECT_DOUBLE_EQ(w, before + 0.06);
  // Zero gradient: no move.
  const double w2 = w;
  rprop_update(w, 0.0, step, prev, p);
  EXPECT_EQ(w, w2);
}

TEST(Rprop, StepBounds) {
  RpropParams p;
  p.delta_max = 2.0;
  p.delta_min = 1e-3;
  SplitMix64 rng(4);
  std::vector<double> w(20, 0.0), g(20);
  RpropState s(20, p);
  for (int t = 0; t < 2000; ++t) {
    // Long same-sign runs and alternating runs.
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = (t / 100) % 2 ? (t % 2 ? 1.0 : -1.0) : rng.uniform(0.1, 1.0);
    rprop_step(w, g, s);
    for (double d : s.step) {
      ASSERT_GE(d, p.delta_min);
      ASSERT_LE(d, p.delta_max);
    }
  }
  EXPECT_THROW(rprop_step(std::span<double>(w.data(), 3), g, s), std::invalid_argument);
}

TEST(Rprop, InvalidParameters) {
  RpropParams p;
  p.eta_minus = 1.0;
  EXPECT_THROW(RpropState(4, p), std::invalid_argument);
  p = {};
  p.eta_plus = 0.9;
  EXPECT_THROW(RpropState(4, p), std::invalid_argument);
  p = {};
  p.delta_initial = 100.0;
  EXPECT_THROW(RpropState(4, p), std::invalid_argument);
}

TEST(Rprop, DiagonalQuadraticsScaleFree) {
  SplitMix64 rng(21);
  const std::size_t n = 12;
  std::vector<double> c(n), target(n), w(n, 0.0), g(n);
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = std::pow(10.0, rng.uniform(-4, 4));
    target[i] = rng.uniform(-5, 5);
  }
  RpropParams p;
  RpropState s(n, p);
  for (int t = 0; t < 500; ++t) {
    for (std::size_t i = 0; i < n; ++i) g[i] = 2 * c[i] * (w[i] - target[i]);
    rprop_step(w, g, s);
  }
  for (std::size_t i = 0; i < n; ++i) EXPECT_LT(std::fabs(w[i] - target[i]), 10 * p.delta_min) << "c=" << c[i];
}

TEST(Rprop, ModelStepMatchesFlatStep) {
  MlpModel m{3, 2, 2};
  m.initialize(3);
  Gradient g = backprop(m, std::vector<double>{1, 2, 3}, std::vector<double>{0.9, -0.9});
  std::vector<double> flat = flat_parameters(m), grads;
  g.for_each_parameter([&](double& v) { grads.push_back(v); });
  RpropState a(m), b(m);
  rprop_step(m, g, a);
  rprop_step(flat, grads, b);
  EXPECT_EQ(flat_parameters(m), flat);
}

TEST(Train, SeparableTwoClass) {
  SplitMix64 rng(8);
  std::vector<TrainingSample> data;
  for (int i = 0; i < 20; ++i) {
    // Margin 1 around the line x + y = 0.
    const int cls = i % 2;
    double x, y;
    do {
      x = rng.uniform(-3, 3);
      y = rng.uniform(-3, 3);
    } while ((cls ? (x + y) : -(x + y)) < std::sqrt(2.0));
    data.push_back({{x, y}, cls ? ActionLabel::Clapping : ActionLabel::Boxing});
  }
  MlpModel m{2, 5, 2};
  m.initialize(2);
  TrainParams p;
  p.epochs = 200;
  TrainResult r = train(m, data, p);
  ASSERT_EQ(r.loss_trace.size(), 200u);
  int correct = 0;
  for (const auto& s : data) correct += argmax(forward(r.model, s.input).output()) == index_of(s.label);
  EXPECT_EQ(correct, 20);
}

TEST(Train, FourCornersConverges) {
  std::vector<TrainingSample> data;
  for (int c = 0; c < 4; ++c) data.push_back({one_hot_target(c, 4, 0.9), kAllActions[static_cast<std::size_t>(c)]});
  MlpModel m{4, 6, 4};
  m.initialize(5);
  TrainParams p;
  p.epochs = 300;
  TrainResult r = train(m, data, p);
  // Sign flips overshoot, so single epochs can go up; the trend cannot.
  EXPECT_LT(r.loss_trace[100], 1e-3 * r.loss_trace[5]);
  EXPECT_LT(batch_loss(r.model, data), 1e-3);
}

TEST(Train, ZeroEpochsAndDeterminism) {
  std::vector<TrainingSample> data;
  SplitMix64 rng(3);
  for (int i = 0; i < 16; ++i) data.push_back({random_vector(rng, 6), kAllActions[static_cast<std::size_t>(i % 4)]});
  MlpModel m{6, 5, 4};
  m.initialize(11);
  TrainParams p;
  p.epochs = 0;
  TrainResult r = train(m, data, p);
  EXPECT_EQ(flat_parameters(r.model), flat_parameters(m));
  EXPECT_TRUE(r.loss_trace.empty());
  p.epochs = 40;
  EXPECT_EQ(flat_parameters(train(m, data, p).model), flat_parameters(train(m, data, p).model));
}

TEST(Train, Errors) {
  MlpModel m{2, 3, 4};
  TrainParams p;
  EXPECT_THROW(train(m, std::vector<TrainingSample>{}, p), std::invalid_argument);
  std::vector<TrainingSample> three{{{0, 0}, ActionLabel::Boxing}, {{0, 1}, ActionLabel::Clapping}, {{1, 0}, ActionLabel::Running}};
  EXPECT_THROW(train(m, three, p), std::invalid_argument);
  auto bad_dim = three;
  bad_dim.push_back({{1, 1, 1}, ActionLabel::Walking});
  EXPECT_THROW(train(m, bad_dim, p), std::invalid_argument);
  MlpModel two{2, 3, 2};
  EXPECT_THROW(train(two, three, p), std::invalid_argument);
}

TEST(Train, TargetsAreScaledByBeta) {
  const auto t = one_hot_target(2, 4, 0.9 * 2.0);
  EXPECT_EQ(t, (std::vector<double>{-1.8, -1.8, 1.8, -1.8}));
}

TEST(Standardization, PerInput) {
  MlpModel m{3, 2, 4};
  std::vector<TrainingSample> d{{{1, 10, 5}, ActionLabel::Boxing}, {{3, 30, 5}, ActionLabel::Boxing}};
  fit_standardization(m, d);
  EXPECT_EQ(m.input_mean, (std::vector<double>{2, 20, 5}));
  EXPECT_DOUBLE_EQ(m.input_scale[0], 1.0);
  EXPECT_DOUBLE_EQ(m.input_scale[1], 0.1);
  EXPECT_EQ(m.input_scale[2], 1.0);
  const auto x = m.standardize(std::vector<double>{3, 10, 7});
  EXPECT_EQ(x, (std::vector<double>{1, -1, 2}));
  EXPECT_THROW(m.standardize(std::vector<double>{1}), std::invalid_argument);
}

TEST(Standardization, PooledByPeriodWithFloor) {
  SplitMix64 rng(6);
  const int period = 3, dim = 12;
  MlpModel m{dim, 2, 4};
  std::vector<TrainingSample> d;
  for (int i = 0; i < 10; ++i) {
    auto v = random_vector(rng, dim);
    for (int k = 0; k < dim; ++k) v[static_cast<std::size_t>(k)] *= (k % period == 0 ? 50.0 : k % period == 1 ? 0.01 : 3.0);
    d.push_back({v, ActionLabel::Boxing});
  }
  const double floor = 0.5;
  fit_standardization(m, d, period, floor);
  for (int g = 0; g < period; ++g) {
    double sum = 0, sq = 0;
    int n = 0;
    for (const auto& s : d)
      for (int k = g; k < dim; k += period) {
        sum += s.input[static_cast<std::size_t>(k)];
        ++n;
      }
    const double mean = sum / n;
    for (const auto& s : d)
      for (int k = g; k < dim; k += period) sq += std::pow(s.input[static_cast<std::size_t>(k)] - mean, 2);
    const double sd = std::max(std::sqrt(sq / n), floor);
    for (int k = g; k < dim; k += period) {
      EXPECT_NEAR(m.input_mean[static_cast<std::size_t>(k)], mean, 1e-12);
      EXPECT_NEAR(m.input_scale[static_cast<std::size_t>(k)], 1.0 / sd, 1e-12);
    }
  }
  // Tiny-spread group is held at the floor.
  EXPECT_EQ(m.input_scale[1], 1.0 / floor);
  EXPECT_THROW(fit_standardization(m, d, 5), std::invalid_argument);
}

TEST(Predict, ArgmaxAndTies) {
  EXPECT_EQ(argmax(std::vector<double>{0.8, -0.2, -0.3, -0.1}), 0);
  EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5, 0, 0}), 0);
  EXPECT_EQ(argmax(std::vector<double>{0, 0.2, 0.2, 0.1}), 1);
  MlpModel m{3, 4};
  m.layers[0].biases = {0.1, -0.4, 0.7, 0.3};
  Prediction p = predict(m, std::vector<double>{0, 0, 0});
  EXPECT_EQ(p.label, ActionLabel::Running);
  ASSERT_EQ(p.scores.size(), 4u);
  m.layers[0].biases = {0.5, 0.5, 0, 0};
  EXPECT_EQ(predict(m, std::vector<double>{0, 0, 0}).label, ActionLabel::Boxing);
  EXPECT_THROW(predict(m, std::vector<double>{0, 0}), std::invalid_argument);
  EXPECT_THROW(predict(MlpModel{3, 2}, std::vector<double>{0, 0, 0}), std::invalid_argument);
}

TEST(Predict, InvariantUnderIncreasingTransforms) {
  SplitMix64 rng(2);
  for (int i = 0; i < 500; ++i) {
    auto v = random_vector(rng, 4);
    const int base = argmax(v);
    std::vector<double> scaled, cubed, shifted;
    const double c = rng.uniform(0.01, 100);
    for (double x : v) {
      scaled.push_back(c * x);
      cubed.push_back(x * x * x);
      shifted.push_back(x + 7.0);
    }
    ASSERT_EQ(argmax(scaled), base);
    ASSERT_EQ(argmax(cubed), base);
    ASSERT_EQ(argmax(shifted), base);
  }
}

TEST(ModelFile, RoundTripIsExact) {
  MlpModel m({120, 200, 4}, 1.3, 0.8);
  m.initialize(17);
  SplitMix64 rng(5);
  for (auto& b : m.layers[0].biases) b = rng.uniform(-1, 1) / 3.0;
  m.input_mean = random_vector(rng, 120, -10, 10);
  m.input_scale = random_vector(rng, 120, 0.1, 3);
  const MlpModel r = loaded(saved(m));
  EXPECT_EQ(r.layer_sizes(), m.layer_sizes());
  EXPECT_EQ(r.a, m.a);
  EXPECT_EQ(r.beta, m.beta);
  EXPECT_EQ(r.input_mean, m.input_mean);
  EXPECT_EQ(r.input_scale, m.input_scale);
  EXPECT_EQ(flat_parameters(r), flat_parameters(m));
  for (int i = 0; i < 100; ++i) {
    const auto x = random_vector(rng, 120, -5, 5);
    ASSERT_EQ(predict(r, x).scores, predict(m, x).scores);
  }
}

TEST(ModelFile, FileRoundTrip) {
  MlpModel m{4, 3, 4};
  m.initialize(1);
  const auto path = std::filesystem::temp_directory_path() / ("har_model_" + std::to_string(::getpid()) + ".txt");
  save_model(path, m);
  EXPECT_EQ(flat_parameters(load_model(path)), flat_parameters(m));
  std::filesystem::remove(path);
  EXPECT_THROW(load_model(path), DataError);
}

TEST(ModelFile, Errors) {
  MlpModel m{2, 2};
  m.initialize(1);
  const std::string good = saved(m);
  EXPECT_NO_THROW(loaded(good));
  EXPECT_THROW(loaded(""), ModelFormatError);
  EXPECT_THROW(loaded("harmlq 1\n"), ModelFormatError);
  EXPECT_THROW(loaded("harmlp 2\n2 2\n1 1\n0 0 1 1\n0 0\n0 0\n0 0\n"), ModelFormatError);
  // Layer sizes claim 3 inputs but rows carry 2 weights.
  EXPECT_THROW(loaded("harmlp 1\n3 2\n1 1\n0 0 0 1 1 1\n0 0\n0 0\n0 0\n"), ModelFormatError);
  EXPECT_THROW(loaded("harmlp 1\n2 2\n1 1\n0 0 1 1\n0 nan\n0 0\n0 0\n"), ModelFormatError);
  EXPECT_THROW(loaded("harmlp 1\n2 2\n1 1\n0 0 1 1\n0 0x\n0 0\n0 0\n"), ModelFormatError);
  EXPECT_THROW(loaded("harmlp 1\n2 2\n0 1\n0 0 1 1\n0 0\n0 0\n0 0\n"), ModelFormatError);
  EXPECT_THROW(loaded("harmlp 1\n2\n1 1\n"), ModelFormatError);
  EXPECT_THROW(loaded("harmlp 1\n2 2\n1 1\n0 0 1 1\n0 0\n0 0\n"), ModelFormatError);
  EXPECT_THROW(loaded(good + "1 2 3\n"), ModelFormatError);
  EXPECT_NO_THROW(loaded(good + "\n  \n"));
}
