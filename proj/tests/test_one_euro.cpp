#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "posefit/error.hpp"
#include "posefit/one_euro.hpp"
#include "support/oracles.hpp"

using namespace posefit;

TEST(OneEuro, StageParameters) {
  const OneEuroParams k = default_params(FilterStage::keypoints);
  const OneEuroParams l = default_params(FilterStage::local3d);
  const OneEuroParams g = default_params(FilterStage::global3d);
  EXPECT_EQ(k.fc_min, 1.7);
  EXPECT_EQ(k.beta, 0.3);
  EXPECT_EQ(l.fc_min, 0.8);
  EXPECT_EQ(l.beta, 0.4);
  EXPECT_EQ(g.fc_min, 20.0);
  EXPECT_EQ(g.beta, 0.4);
  for (const auto& p : {k, l, g}) EXPECT_EQ(p.d_cutoff, 1.0);
  EXPECT_EQ(default_params(FilterStage::local3d).fc_min, l.fc_min);
}

TEST(OneEuro, FirstSamplePassesAndConstantStays) {
  OneEuroFilter f(default_params(FilterStage::keypoints), 2);
  const double s[2] = {3.25, -7.5};
  auto out = f.step(s, 0.0);
  EXPECT_EQ(out[0], 3.25);
  EXPECT_EQ(out[1], -7.5);
  for (int i = 1; i < 50; ++i) {
    out = f.step(s, i / 30.0);
    EXPECT_NEAR(out[0], 3.25, 1e-12);
    EXPECT_NEAR(out[1], -7.5, 1e-12);
  }
}

TEST(OneEuro, StepSignalByHand) {
  // Five samples at 30 Hz, (1.7, 0.3), derivative cutoff 1 Hz.
  OneEuroFilter f({1.7, 0.3, 1.0}, 1);
  const double xs[5] = {0.0, 0.0, 10.0, 10.0, 10.0};
  const double te = 1.0 / 30.0;
  auto alpha = [&](double fc) { return 1.0 / (1.0 + 1.0 / (2.0 * std::numbers::pi * fc * te)); };
  double xhat = 0.0, dxhat = 0.0;
  EXPECT_EQ(f.step(std::span<const double>(xs, 1), 0.0)[0], 0.0);
  for (int i = 1; i < 5; ++i) {
    const double dx = (xs[i] - xhat) / te;
    dxhat = alpha(1.0) * dx + (1.0 - alpha(1.0)) * dxhat;
    const double a = alpha(1.7 + 0.3 * std::abs(dxhat));
    xhat = a * xs[i] + (1.0 - a) * xhat;
    EXPECT_NEAR(f.step(std::span<const double>(xs + i, 1), i * te)[0], xhat, 1e-9) << i;
  }
}

TEST(OneEuro, MatchesScalarTranscriptionWithIrregularClock) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> gap(0.01, 0.06);
  std::normal_distribution<double> g(0.0, 5.0);
  for (const OneEuroParams p : {OneEuroParams{1.7, 0.3, 1.0}, OneEuroParams{0.8, 0.4, 1.0},
                                OneEuroParams{20.0, 0.4, 1.0}, OneEuroParams{2.0, 0.0, 3.0}}) {
    OneEuroFilter f(p, 3);
    oracle::ScalarOneEuro ref[3] = {{p.fc_min, p.beta, p.d_cutoff},
                                    {p.fc_min, p.beta, p.d_cutoff},
                                    {p.fc_min, p.beta, p.d_cutoff}};
    double t = 0.0;
    for (int i = 0; i < 500; ++i) {
      t += gap(rng);
      const double s[3] = {100.0 * std::sin(t) + g(rng), g(rng), i < 250 ? 0.0 : 500.0};
      const auto out = f.step(s, t);
      for (int c = 0; c < 3; ++c) EXPECT_NEAR(out[c], ref[c](s[c], t), 1e-9);
    }
  }
}

TEST(OneEuro, HugeCutoffIsNearlyTransparent) {
  // One smoothing step lags by (1 - alpha) of the jump, 1 / (2 pi fc te) of the range at most.
  const double fc = 1e6, te = 1.0 / 30.0;
  const double lag = 1.0 / (1.0 + 2.0 * std::numbers::pi * fc * te);
  OneEuroFilter f({fc, 0.0, 1.0}, 1);
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    worst = std::max(worst, std::abs(f.step(std::span<const double>(&x, 1), i * te)[0] - x));
  }
  EXPECT_GT(worst, 0.0);
  EXPECT_LE(worst, lag * 200.0 * (1.0 + 1e-9));
}

TEST(OneEuro, MonotoneInputStaysInsideObservedRange) {
  std::mt19937_64 rng(24);
  std::uniform_real_distribution<double> step(0.0, 20.0);
  for (const auto stage : {FilterStage::keypoints, FilterStage::local3d, FilterStage::global3d}) {
    OneEuroFilter f(default_params(stage), 1);
    double x = -50.0, first = x;
    for (int i = 0; i < 300; ++i) {
      if (i > 0) x += step(rng);
      const double y = f.step(std::span<const double>(&x, 1), i / 30.0)[0];
      EXPECT_GE(y, first);
      EXPECT_LE(y, x);
    }
  }
}

TEST(OneEuro, Deterministic) {
  std::mt19937_64 rng(25);
  std::normal_distribution<double> g(0.0, 30.0);
  std::vector<double> xs(400);
  for (auto& x : xs) x = g(rng);
  OneEuroFilter a(default_params(FilterStage::local3d), 2), b(default_params(FilterStage::local3d), 2);
  for (int i = 0; i < 200; ++i) {
    const std::span<const double> s(xs.data() + 2 * i, 2);
    const auto ya = a.step(s, i / 30.0);
    const auto yb = b.step(s, i / 30.0);
    EXPECT_EQ(std::memcmp(ya.data(), yb.data(), 2 * sizeof(double)), 0);
  }
}

TEST(OneEuro, SmoothsNoise) {
  // Without the speed term the 1.7 Hz cutoff removes most of the frame-to-frame noise.
  OneEuroFilter f({1.7, 0.0, 1.0}, 1);
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g(0.0, 5.0);
  double raw_acc = 0.0, out_acc = 0.0, prev_raw[2] = {0, 0}, prev_out[2] = {0, 0};
  for (int i = 0; i < 600; ++i) {
    const double x = 200.0 + g(rng);
    const double y = f.step(std::span<const double>(&x, 1), i / 30.0)[0];
    if (i >= 2) {
      raw_acc += std::abs(x - 2 * prev_raw[0] + prev_raw[1]);
      out_acc += std::abs(y - 2 * prev_out[0] + prev_out[1]);
    }
    prev_raw[1] = prev_raw[0];
    prev_raw[0] = x;
    prev_out[1] = prev_out[0];
    prev_out[0] = y;
  }
  EXPECT_LT(out_acc, 0.5 * raw_acc);
}

TEST(OneEuro, InactiveChannelsPassThroughAndRestart) {
  OneEuroFilter f({1.0, 0.0, 1.0}, 2);
  const double a[2] = {0.0, 0.0};
  f.step(a, 0.0);
  const double b[2] = {10.0, 10.0};
  const std::vector<bool> mask{true, false};
  const auto out = f.step(b, 1.0 / 30.0, &mask);
  EXPECT_GT(out[0], 0.0);
  EXPECT_LT(out[0], 10.0);
  EXPECT_EQ(out[1], 10.0);
  // Channel 1 restarts from its next sample.
  const double c[2] = {10.0, 40.0};
  EXPECT_EQ(f.step(c, 2.0 / 30.0)[1], 40.0);
}

TEST(OneEuro, RejectsBadInput) {
  EXPECT_THROW(OneEuroFilter({0.0, 0.3, 1.0}, 1), ContractError);
  EXPECT_THROW(OneEuroFilter({1.0, -0.1, 1.0}, 1), ContractError);
  EXPECT_THROW(OneEuroFilter({1.0, 0.3, 0.0}, 1), ContractError);
  OneEuroFilter f({1.0, 0.3, 1.0}, 2);
  const double s[2] = {1.0, 2.0};
  f.step(s, 1.0);
  EXPECT_THROW(f.step(s, 1.0), ContractError);
  EXPECT_THROW(f.step(s, 0.5), ContractError);
  const double wrong[3] = {1.0, 2.0, 3.0};
  EXPECT_THROW(f.step(wrong, 2.0), ContractError);
  f.reset();
  EXPECT_EQ(f.step(s, 0.1)[1], 2.0);
}
