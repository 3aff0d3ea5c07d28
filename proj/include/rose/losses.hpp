// SPDX-License-Identifier: Apache-2.0
//
// Training objective: tone-balanced low-light reconstruction plus an
// illumination-correction term that fixes the brightness of the restored
// normal-light rendering.
#pragma once

#include "rose/autodiff/tensor.hpp"

namespace rose::losses {

using ad::Tensor;

struct LossConfig {
  double e_target = 0.45;   // desired mean normal-light intensity
  double lambda_ic = 1e-3;  // weight of the illumination-correction term
  double eps_tone = 1e-3;   // offset added to observations before the tone curve
  bool tone_clamp = true;   // clamp obs + eps into [0, 1] before the curve
  // Apply the inverse tone curve to observations. Disable for data that is
  // already linear in scene radiance (the synthetic generator's output).
  bool tone_curve = true;

  void validate() const;
};

/// phi(x) = 1/2 - sin(asin(1 - 2x) / 3), defined on [0, 1].
double tone_curve(double x);
/// Elementwise phi. With `clamp` inputs are clipped to [0, 1] first,
/// otherwise out-of-range inputs raise DomainError.
Tensor tone_curve(const Tensor& x, bool clamp);

/// Observation-side target phi(obs + eps) (or obs when the curve is off).
Tensor reconstruction_target(const Tensor& observed, const LossConfig& config);

/// sum_r ||pred_r - target_r||^2 / B for [B, 3] inputs.
Tensor loss_mse(const Tensor& c_low_pred, const Tensor& c_low_obs, const LossConfig& config);
/// (mean of all entries of c_nor - e)^2. Throws on an empty batch.
Tensor loss_ic(const Tensor& c_nor_pred, const LossConfig& config);
/// mse + lambda * ic.
Tensor loss_total(const Tensor& mse, const Tensor& ic, const LossConfig& config);

/// Ablation hook: mean over rays of the summed squared difference between
/// consecutive illuminance samples along each ray. `illum` is [B, N].
Tensor loss_tv(const Tensor& illum);

}  // namespace rose::losses
