// SPDX-License-Identifier: Apache-2.0
#include "rose/autodiff/optim.hpp"

#include <cmath>
#include <numbers>

#include "rose/error.hpp"

namespace rose::ad {

void zero_grads(ParameterList& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

void adam_step(ParameterList& params, AdamState& state, double lr) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw Error("adam_step: parameter '" + p.name + "' has no gradient");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.size(), 0.0);
      state.v.emplace_back(p.tensor.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw Error("adam_step: optimizer state tracks " + std::to_string(state.m.size()) + " tensors, got " +
                std::to_string(params.size()));
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto value = params[p].tensor.mutable_data();
    const auto grad = params[p].tensor.grad();
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.size() != value.size()) throw Error("adam_step: moment shape mismatch for '" + params[p].name + "'");
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

double cosine_lr(const CosineSchedule& schedule, std::uint64_t step) {
  if (schedule.period == 0) throw ConfigError("cosine schedule period must be positive");
  double phase;
  if (schedule.cyclic) {
    phase = static_cast<double>(step % schedule.period) / static_cast<double>(schedule.period);
  } else {
    phase = step >= schedule.period ? 1.0 : static_cast<double>(step) / static_cast<double>(schedule.period);
  }
  return schedule.floor_lr +
         (schedule.base_lr - schedule.floor_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * phase));
}

}  // namespace rose::ad
