// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rose/autodiff/tensor.hpp"

namespace rose::ad {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

void zero_grads(ParameterList& params);
std::size_t parameter_count(const ParameterList& params);

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam update with bias correction. Moments are lazily sized on the
/// first call. Gradients are left in place.
void adam_step(ParameterList& params, AdamState& state, double lr);

struct CosineSchedule {
  double base_lr = 5e-4;
  std::uint64_t period = 2500;
  double floor_lr = 0.0;
  // Restart the cosine every `period` steps; otherwise decay once and hold
  // floor_lr afterwards.
  bool cyclic = true;
};

double cosine_lr(const CosineSchedule& schedule, std::uint64_t step);

}  // namespace rose::ad
