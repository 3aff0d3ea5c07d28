// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rose/autodiff/ops.hpp"
#include "rose/autodiff/tensor.hpp"
#include "rose/random.hpp"

namespace rose::testing {

using ad::Shape;
using ad::Tensor;

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  std::vector<double> v(ad::num_elements(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(shape, std::move(v), requires_grad);
}

/// Relative error ||a - n|| / (||a|| + ||n||) between the analytic gradient
/// of `f` (a scalar) and central differences, maximized over inputs.
/// Inputs with all-zero analytic and numeric gradients count as 0.
inline double gradient_error(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                             double h = 1e-6) {
  for (auto& t : inputs) t.zero_grad();
  f(inputs).backward();
  double worst = 0.0;
  for (auto& t : inputs) {
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    analytic.resize(t.size(), 0.0);
    std::vector<double> numeric(t.size());
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = data[i];
      double plus, minus;
      {
        ad::NoGradGuard guard;
        data[i] = saved + h;
        plus = f(inputs).item();
        data[i] = saved - h;
        minus = f(inputs).item();
      }
      data[i] = saved;
      numeric[i] = (plus - minus) / (2.0 * h);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::sqrt(na) + std::sqrt(nn);
    if (denom > 0.0) worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("rose_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rose::testing
