// SPDX-License-Identifier: Apache-2.0
#include "rose/losses.hpp"

#include <cmath>

#include "rose/autodiff/ops.hpp"
#include "rose/error.hpp"

namespace rose::losses {

void LossConfig::validate() const {
  if (!(e_target > 0.0 && e_target < 1.0)) throw ConfigError("e_target must lie in (0, 1)");
  if (!(lambda_ic >= 0.0)) throw ConfigError("lambda_ic must be non-negative");
  if (!(eps_tone > 0.0)) throw ConfigError("eps_tone must be positive");
}

double tone_curve(double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("tone curve input " + std::to_string(x) + " outside [0, 1]");
  return 0.5 - std::sin(std::asin(1.0 - 2.0 * x) / 3.0);
}

Tensor tone_curve(const Tensor& x, bool clamp) {
  Tensor in = x;
  if (clamp) {
    in = ad::clamp(x, 0.0, 1.0);
  } else {
    for (double v : x.data()) {
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("tone curve input " + std::to_string(v) + " outside [0, 1]");
    }
  }
  const Tensor inner = ad::asin(ad::add_scalar(ad::scale(in, -2.0), 1.0));
  return ad::add_scalar(ad::neg(ad::sin(ad::scale(inner, 1.0 / 3.0))), 0.5);
}

Tensor reconstruction_target(const Tensor& observed, const LossConfig& config) {
  if (!config.tone_curve) return observed;
  return tone_curve(ad::add_scalar(observed, config.eps_tone), config.tone_clamp);
}

Tensor loss_mse(const Tensor& c_low_pred, const Tensor& c_low_obs, const LossConfig& config) {
  if (c_low_pred.shape() != c_low_obs.shape() || c_low_pred.rank() != 2) {
    throw ShapeError("loss_mse: prediction " + ad::shape_to_string(c_low_pred.shape()) + " vs observation " +
                     ad::shape_to_string(c_low_obs.shape()));
  }
  if (c_low_pred.dim(0) == 0) throw ShapeError("loss_mse: empty batch");
  Tensor target;
  {
    ad::NoGradGuard no_grad;
    target = reconstruction_target(c_low_obs, config);
  }
  const double rays = static_cast<double>(c_low_pred.dim(0));
  return ad::scale(ad::sum(ad::square(ad::sub(c_low_pred, target))), 1.0 / rays);
}

Tensor loss_ic(const Tensor& c_nor_pred, const LossConfig& config) {
  if (c_nor_pred.size() == 0) throw ShapeError("loss_ic: empty batch");
  return ad::square(ad::add_scalar(ad::mean(c_nor_pred), -config.e_target));
}

Tensor loss_total(const Tensor& mse, const Tensor& ic, const LossConfig& config) {
  return ad::add(mse, ad::scale(ic, config.lambda_ic));
}

Tensor loss_tv(const Tensor& illum) {
  if (illum.rank() != 2) throw ShapeError("loss_tv expects [B, N], got " + ad::shape_to_string(illum.shape()));
  const std::size_t b = illum.dim(0);
  const std::size_t n = illum.dim(1);
  if (b == 0) throw ShapeError("loss_tv: empty batch");
  if (n < 2) return Tensor::scalar(0.0);
  // Forward-difference operator as an [N, N-1] matrix.
  std::vector<double> diff(n * (n - 1), 0.0);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    diff[j * (n - 1) + j] = -1.0;
    diff[(j + 1) * (n - 1) + j] = 1.0;
  }
  const Tensor d = ad::matmul(illum, Tensor::from_data({n, n - 1}, std::move(diff)));
  return ad::scale(ad::sum(ad::square(d)), 1.0 / static_cast<double>(b));
}

}  // namespace rose::losses
