// SPDX-License-Identifier: Apache-2.0
#include "rose/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "rose/error.hpp"

namespace rose {

std::uint64_t Rng::index(std::uint64_t n) {
  if (n == 0) throw Error("Rng::index: empty range");
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

void Rng::set_state(const std::string& state) {
  std::istringstream in(state);
  std::mt19937_64 engine;
  in >> engine;
  if (in.fail()) throw FormatError("malformed RNG state");
  engine_ = engine;
}

}  // namespace rose
