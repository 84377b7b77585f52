#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "har/bgmodel.hpp"
#include "har/mlp.hpp"
#include "oracles.hpp"

using namespace har;

namespace {

using test::RefPixel;

Frame constant(int w, int h, int v) { return Frame(w, h, 0, static_cast<std::uint8_t>(v)); }

void expect_matches(const PixelMixture& m, const RefPixel& r) {
  ASSERT_EQ(m.components().size(), r.comps.size());
  for (std::size_t k = 0; k < r.comps.size(); ++k) {
    const auto& a = m.components()[k];
    const auto& b = r.comps[k];
    EXPECT_NEAR(a.weight, b.w, 1e-9 * std::max(1.0, std::fabs(b.w)));
    EXPECT_NEAR(a.mean, b.mu, 1e-9 * std::max(1.0, std::fabs(b.mu)));
    EXPECT_NEAR(a.variance, b.var, 1e-9 * std::max(1.0, std::fabs(b.var)));
  }
}

}  // namespace

TEST(Fitness, Examples) {
  EXPECT_DOUBLE_EQ(fitness({0.5, 0.0, 4.0}), 0.25);
  EXPECT_DOUBLE_EQ(fitness({0.0, 10.0, 9.0}), 0.0);
  EXPECT_DOUBLE_EQ(fitness({1.0, 3.0, 1.0}), 1.0);
}

TEST(BackgroundModel, ConstantSequenceBecomesBackground) {
  BackgroundModel m(8, 6);
  ForegroundMask first = m.update_and_classify(constant(8, 6, 77));
  EXPECT_EQ(first.count(), 48u);
  for (int i = 1; i < 30; ++i) m.update_and_classify(constant(8, 6, 77));
  EXPECT_EQ(m.update_and_classify(constant(8, 6, 77)).count(), 0u);
}

TEST(BackgroundModel, JumpIsForeground) {
  BackgroundModel m(4, 4);
  for (int i = 0; i < 30; ++i) m.update_and_classify(constant(4, 4, 50));
  Frame f = constant(4, 4, 50);
  f.at(2, 1) = 200;
  ForegroundMask mask = m.update_and_classify(f);
  EXPECT_EQ(mask.count(), 1u);
  EXPECT_TRUE(mask.at(2, 1));
}

TEST(BackgroundModel, ScalarTraceMatchesReference) {
  BackgroundParams p;
  BackgroundModel m(1, 1, p);
  RefPixel ref(p.components, p.learning_rate, p.background_threshold, p.match_radius, p.initial_variance,
               p.variance_floor);
  std::vector<int> inputs(20, 50);
  inputs.insert(inputs.end(), 5, 200);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const bool fg = m.update_and_classify(constant(1, 1, inputs[t])).at(0, 0);
    const bool ref_fg = ref.step(inputs[t]);
    EXPECT_EQ(fg, ref_fg) << "frame " << t + 1;
    if (t >= 20) {
      EXPECT_TRUE(fg) << "frame " << t + 1;
    }
    expect_matches(m.pixel(0, 0), ref);
  }
}

TEST(BackgroundModel, RandomTracesMatchReference) {
  SplitMix64 rng(99);
  for (int trial = 0; trial < 40; ++trial) {
    BackgroundParams p;
    p.components = 1 + static_cast<int>(rng.next() % 5);
    p.learning_rate = rng.uniform(0.01, 0.3);
    p.background_threshold = rng.uniform(0.3, 0.95);
    BackgroundModel m(1, 1, p);
    RefPixel ref(p.components, p.learning_rate, p.background_threshold, p.match_radius, p.initial_variance,
                 p.variance_floor);
    double level = rng.uniform(0, 255);
    for (int t = 0; t < 100; ++t) {
      if (rng.uniform() < 0.1) level = rng.uniform(0, 255);
      const int x = std::clamp(static_cast<int>(level + rng.uniform(-6, 6)), 0, 255);
      const bool fg = m.update_and_classify(constant(1, 1, x)).at(0, 0);
      ASSERT_EQ(fg, ref.step(x)) << "trial " << trial << " step " << t;
      expect_matches(m.pixel(0, 0), ref);
      if (HasFailure()) return;
    }
  }
}

TEST(BackgroundModel, WeightsSumToOneAndSorted) {
  BackgroundModel m(6, 5);
  SplitMix64 rng(5);
  for (int t = 0; t < 80; ++t) {
    Frame f(6, 5);
    for (auto& p : f.pixels) p = static_cast<std::uint8_t>(rng.next() % 4 == 0 ? rng.next() % 256 : 60 + rng.next() % 5);
    m.update_and_classify(f);
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 6; ++x) {
        const auto& c = m.pixel(x, y).components();
        double sum = 0;
        for (const auto& k : c) {
          sum += k.weight;
          ASSERT_GE(k.variance, m.params().variance_floor);
          ASSERT_GE(k.weight, 0.0);
          ASSERT_LE(k.weight, 1.0);
        }
        ASSERT_NEAR(sum, 1.0, 1e-6);
        for (std::size_t k = 1; k < c.size(); ++k) ASSERT_GE(fitness(c[k - 1]), fitness(c[k]));
      }
  }
}

TEST(BackgroundModel, MeanConverges) {
  BackgroundParams p;
  BackgroundModel m(1, 1, p);
  m.update_and_classify(constant(1, 1, 20));
  const int frames = static_cast<int>(std::ceil(3.0 / p.learning_rate));
  for (int t = 0; t < frames; ++t) m.update_and_classify(constant(1, 1, 30));
  EXPECT_NEAR(m.pixel(0, 0).components().front().mean, 30.0, 1.0);
}

TEST(BackgroundModel, DimensionMismatch) {
  BackgroundModel m(4, 4);
  EXPECT_THROW(m.update_and_classify(constant(4, 5, 0)), std::invalid_argument);
}

TEST(BackgroundModel, MaskExport) {
  ForegroundMask mask(2, 1);
  mask.bits[1] = true;
  EXPECT_EQ(mask.to_frame().pixels, (std::vector<std::uint8_t>{0, 255}));
}

TEST(SubtractConsecutive, Examples) {
  Frame a = constant(5, 5, 100);
  EXPECT_EQ(subtract_consecutive(a, a, 15).count(), 0u);
  Frame b = a;
  b.at(3, 2) = 140;
  ForegroundMask m = subtract_consecutive(a, b, 15);
  EXPECT_EQ(m.count(), 1u);
  EXPECT_TRUE(m.at(3, 2));
  Frame c = constant(5, 5, 255), z = constant(5, 5, 0);
  EXPECT_EQ(subtract_consecutive(z, c, 255).count(), 0u);
  EXPECT_THROW(subtract_consecutive(a, constant(4, 5, 0), 1), std::invalid_argument);
}
