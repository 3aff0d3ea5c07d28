// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "rose/autodiff/ops.hpp"
#include "rose/error.hpp"
#include "rose/field.hpp"
#include "rose/losses.hpp"
#include "rose/render.hpp"
#include "test_support.hpp"

namespace rose::losses {
namespace {

using testing::gradient_error;
using testing::random_tensor;

TEST(ToneCurve, AnalyticPoints) {
  EXPECT_NEAR(tone_curve(0.0), 0.0, 1e-15);
  EXPECT_NEAR(tone_curve(1.0), 1.0, 1e-15);
  EXPECT_NEAR(tone_curve(0.5), 0.5, 1e-15);
}

TEST(ToneCurve, MatchesArbitraryPrecisionValues) {
  // 0.5 - sin(asin(1 - 2x) / 3) evaluated with 30 significant digits.
  const std::pair<double, double> table[] = {
      {0.01, 0.05890313577819525414}, {0.05, 0.1353503621715837797},  {0.1, 0.19580010565909171749},
      {0.2, 0.28714072541674046142},  {0.3, 0.36325749109056761358},  {0.4, 0.43293107714773176375},
      {0.45, 0.46661706316236775946},
  };
  for (auto [x, want] : table) {
    EXPECT_NEAR(tone_curve(x), want, 1e-15) << "x = " << x;
    EXPECT_GT(tone_curve(x), x);
  }
}

TEST(ToneCurve, MonotoneOnRandomPairs) {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    double a = rng.uniform(), b = rng.uniform();
    if (a > b) std::swap(a, b);
    EXPECT_LE(tone_curve(a), tone_curve(b));
  }
}

TEST(ToneCurve, OutOfDomain) {
  EXPECT_THROW(tone_curve(1.2), DomainError);
  EXPECT_THROW(tone_curve(Tensor::from_data({2}, {0.5, -0.1}), false), DomainError);
  const auto clamped = tone_curve(Tensor::from_data({2}, {1.5, -0.1}), true);
  EXPECT_NEAR(clamped[0], 1.0, 1e-15);
  EXPECT_NEAR(clamped[1], 0.0, 1e-15);
}

TEST(ToneCurve, GradientAtPointThreeMatchesFiniteDifferences) {
  const auto x = Tensor::from_data({1}, {0.3}, true);
  EXPECT_LT(gradient_error([](auto& in) { return ad::sum(tone_curve(in[0], false)); }, {x}), 1e-6);
  Rng rng(2);
  const auto xs = random_tensor({16}, rng, 0.05, 0.95);
  EXPECT_LT(gradient_error([](auto& in) { return ad::sum(ad::square(tone_curve(in[0], true))); }, {xs}), 1e-6);
}

TEST(Mse, ZeroWhenPredictionEqualsTarget) {
  LossConfig cfg;
  const auto obs = Tensor::from_data({2, 3}, {0.1, 0.2, 0.05, 0.0, 0.3, 0.15});
  const auto pred = reconstruction_target(obs, cfg);
  EXPECT_EQ(loss_mse(pred, obs, cfg).item(), 0.0);
}

TEST(Mse, ConstantOffsetGivesThreeDeltaSquared) {
  LossConfig cfg;
  Rng rng(3);
  const auto obs = random_tensor({10, 3}, rng, 0.0, 0.3, false);
  const double delta = 0.03;
  const auto pred = reconstruction_target(obs, cfg) + delta;
  EXPECT_NEAR(loss_mse(pred, obs, cfg).item(), 3 * delta * delta, 1e-15);
}

TEST(Mse, FourRayHandOracle) {
  LossConfig cfg;
  const std::vector<double> obs{0.02, 0.05, 0.10, 0.20, 0.0, 0.01, 0.3, 0.12, 0.07, 0.15, 0.15, 0.15};
  const std::vector<double> pred{0.1, 0.2, 0.3, 0.25, 0.05, 0.0, 0.4, 0.3, 0.2, 0.3, 0.3, 0.3};
  double want = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double t = 0.5 - std::sin(std::asin(1.0 - 2.0 * (obs[i] + 1e-3)) / 3.0);
    want += (pred[i] - t) * (pred[i] - t);
  }
  want /= 4.0;
  const auto got = loss_mse(Tensor::from_data({4, 3}, pred), Tensor::from_data({4, 3}, obs), cfg).item();
  EXPECT_NEAR(got, want, 1e-15);
}

TEST(Mse, CurveCanBeDisabled) {
  LossConfig cfg;
  cfg.tone_curve = false;
  const auto obs = Tensor::from_data({1, 3}, {0.1, 0.2, 0.3});
  EXPECT_NEAR(loss_mse(Tensor::from_data({1, 3}, {0.2, 0.2, 0.3}), obs, cfg).item(), 0.01, 1e-15);
}

TEST(Ic, ConstantImages) {
  LossConfig cfg;
  EXPECT_NEAR(loss_ic(Tensor::full({8, 3}, 0.45), cfg).item(), 0.0, 1e-30);
  EXPECT_NEAR(loss_ic(Tensor::zeros({8, 3}), cfg).item(), 0.2025, 1e-15);
}

TEST(Ic, MixedBatch) {
  LossConfig cfg;
  const auto c = Tensor::from_data({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  EXPECT_NEAR(loss_ic(c, cfg).item(), 0.01, 1e-15);  // mean 0.35
  EXPECT_THROW(loss_ic(Tensor::zeros({0, 3}), cfg), ShapeError);
}

TEST(Total, Weighting) {
  LossConfig cfg;
  EXPECT_NEAR(loss_total(Tensor::scalar(1.0), Tensor::scalar(1.0), cfg).item(), 1.001, 1e-15);
  cfg.lambda_ic = 0.0;
  EXPECT_EQ(loss_total(Tensor::scalar(0.7), Tensor::scalar(5.0), cfg).item(), 0.7);
}

TEST(Total, GradientMatchesFiniteDifferences) {
  LossConfig cfg;
  cfg.lambda_ic = 0.5;
  Rng rng(4);
  const auto c_nor = random_tensor({5, 3}, rng, 0.1, 0.9);
  const auto illum = random_tensor({5, 1}, rng, 0.1, 0.5);
  const auto obs = random_tensor({5, 3}, rng, 0.0, 0.2, false);
  EXPECT_LT(gradient_error(
                [&](auto& in) {
                  return loss_total(loss_mse(in[0] * in[1], obs, cfg), loss_ic(in[0], cfg), cfg);
                },
                {c_nor, illum}),
            1e-6);
}

TEST(Total, GradientReachesColorAndIlluminanceBranches) {
  field::FieldConfig fc;
  fc.n_freq_pos = 2;
  fc.n_freq_dir = 1;
  fc.width = 16;
  fc.depth = 2;
  fc.skip = 0;
  fc.lrd_rank = 4;
  fc.lrd_filters = 4;
  Rng rng(5);
  const field::RoseField coarse(fc, rng), fine(fc, rng);
  Camera cam;
  cam.width = cam.height = 4;
  cam.camera_angle_x = 0.8;
  cam.c2w(2, 3) = 3.0;
  std::vector<std::size_t> ids{0, 5, 10, 15};
  const auto rays = rays_for_pixels(cam, ids, 1.0, 5.0);
  const auto out = render::render_pipeline(coarse, fine, rays, {8, 8, false}, &rng);
  LossConfig cfg;
  const auto obs = Tensor::full({4, 3}, 0.1);
  loss_total(loss_mse(out.fine.c_low, obs, cfg), loss_ic(out.fine.c_nor, cfg), cfg).backward();
  auto norm_of = [&](const std::string& prefix) {
    double s = 0.0;
    for (const auto& p : fine.parameters("fine")) {
      if (p.name.rfind(prefix, 0) != 0 || !p.tensor.has_grad()) continue;
      for (double g : p.tensor.grad()) s += g * g;
    }
    return s;
  };
  EXPECT_GT(norm_of("fine.color"), 0.0);
  EXPECT_GT(norm_of("fine.illum"), 0.0);
  EXPECT_GT(norm_of("fine.lrd"), 0.0);
  EXPECT_GT(norm_of("fine.fx"), 0.0);
}

TEST(Tv, HandValueAndGradient) {
  const auto i = Tensor::from_data({2, 3}, {0.1, 0.3, 0.2, 0.5, 0.5, 0.5});
  // ray 0: 0.2^2 + 0.1^2 = 0.05, ray 1: 0 -> mean 0.025
  EXPECT_NEAR(loss_tv(i).item(), 0.025, 1e-15);
  Rng rng(6);
  EXPECT_LT(gradient_error([](auto& in) { return loss_tv(in[0]); }, {random_tensor({3, 5}, rng)}), 1e-6);
}

}  // namespace
}  // namespace rose::losses
