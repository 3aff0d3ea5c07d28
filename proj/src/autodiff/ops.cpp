// SPDX-License-Identifier: Apache-2.0
#include "rose/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gemm.hpp"
#include "rose/error.hpp"

namespace rose::ad {

using detail::make_result;

namespace {

using Strides = std::vector<std::size_t>;

// Per-axis element strides of `in` when viewed with shape `out`; zero on
// broadcast axes.
Strides broadcast_strides(const Shape& in, const Shape& out) {
  Strides strides(out.size(), 0);
  const std::size_t offset = out.size() - in.size();
  std::size_t stride = 1;
  for (std::size_t i = in.size(); i-- > 0;) {
    strides[offset + i] = (in[i] == 1 && out[offset + i] != 1) ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

// Calls f(out_index, a_index, b_index) for every output element in
// row-major order.
template <class F>
void for_each_broadcast(const Shape& out, const Strides& sa, const Strides& sb, F&& f) {
  const std::size_t total = num_elements(out);
  if (total == 0) return;
  if (out.empty()) {
    f(0, 0, 0);
    return;
  }
  const std::size_t rank = out.size();
  const std::size_t inner = out[rank - 1];
  const std::size_t ia_step = sa[rank - 1];
  const std::size_t ib_step = sb[rank - 1];
  std::vector<std::size_t> counter(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t o = 0; o < total; o += inner) {
    for (std::size_t j = 0; j < inner; ++j) f(o + j, ia + j * ia_step, ib + j * ib_step);
    // Advance the outer counters.
    for (std::size_t axis = rank - 1; axis-- > 0;) {
      ++counter[axis];
      ia += sa[axis];
      ib += sb[axis];
      if (counter[axis] < out[axis]) break;
      ia -= sa[axis] * counter[axis];
      ib -= sb[axis] * counter[axis];
      counter[axis] = 0;
    }
  }
}

template <class Fwd, class GradA, class GradB>
Tensor binary(const Tensor& a, const Tensor& b, Fwd fwd, GradA grad_a, GradB grad_b) {
  const auto& sa_shape = a.shape();
  const auto& sb_shape = b.shape();
  const auto av = a.data();
  const auto bv = b.data();
  if (sa_shape == sb_shape) {
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
    return make_result(sa_shape, std::move(out), {a, b}, [grad_a, grad_b](Node& self) {
      Node& na = *self.inputs[0];
      Node& nb = *self.inputs[1];
      const auto& g = self.grad;
      if (na.requires_grad) {
        auto& ga = na.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += grad_a(na.value[i], nb.value[i], self.value[i], g[i]);
      }
      if (nb.requires_grad) {
        auto& gb = nb.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += grad_b(na.value[i], nb.value[i], self.value[i], g[i]);
      }
    });
  }
  Shape out_shape = broadcast_shapes(sa_shape, sb_shape);
  Strides sa = broadcast_strides(sa_shape, out_shape);
  Strides sb = broadcast_strides(sb_shape, out_shape);
  std::vector<double> out(num_elements(out_shape));
  for_each_broadcast(out_shape, sa, sb,
                     [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = fwd(av[ia], bv[ib]); });
  return make_result(out_shape, std::move(out), {a, b},
                     [grad_a, grad_b, out_shape, sa, sb](Node& self) {
                       Node& na = *self.inputs[0];
                       Node& nb = *self.inputs[1];
                       const auto& g = self.grad;
                       if (na.requires_grad) {
                         auto& ga = na.ensure_grad();
                         for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                           ga[ia] += grad_a(na.value[ia], nb.value[ib], self.value[o], g[o]);
                         });
                       }
                       if (nb.requires_grad) {
                         auto& gb = nb.ensure_grad();
                         for_each_broadcast(out_shape, sa, sb, [&](std::size_t o, std::size_t ia, std::size_t ib) {
                           gb[ib] += grad_b(na.value[ia], nb.value[ib], self.value[o], g[o]);
                         });
                       }
                     });
}

// deriv(x, y) returns dy/dx at input x with output y.
template <class Fwd, class Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
  return make_result(a.shape(), std::move(out), {a}, [deriv](Node& self) {
    Node& na = *self.inputs[0];
    auto& ga = na.ensure_grad();
    const auto& g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (g[i] != 0.0) ga[i] += g[i] * deriv(na.value[i], self.value[i]);
    }
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_to_string(t.shape()));
  }
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("cannot broadcast shapes " + shape_to_string(a) + " and " + shape_to_string(b));
    }
    out[i] = ea == 1 ? eb : ea;
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x + y; }, [](double, double, double, double g) { return g; },
      [](double, double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x - y; }, [](double, double, double, double g) { return g; },
      [](double, double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x * y; }, [](double, double y, double, double g) { return g * y; },
      [](double x, double, double, double g) { return g * x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x / y; }, [](double, double y, double, double g) { return g / y; },
      [](double, double y, double out, double g) { return -g * out / y; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(b, 2, "matmul rhs");
  if (a.rank() < 2) throw ShapeError("matmul lhs must have rank >= 2, got " + shape_to_string(a.shape()));
  const std::size_t k = a.shape().back();
  if (k != b.dim(0)) {
    throw ShapeError("matmul inner extents differ: " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  const std::size_t n = b.dim(1);
  const std::size_t m = a.size() / std::max<std::size_t>(k, 1);
  Shape out_shape = a.shape();
  out_shape.back() = n;
  std::vector<double> out(m * n);
  kernels::gemm(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  return make_result(std::move(out_shape), std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    if (na.requires_grad) {
      std::vector<double> bt(k * n);
      kernels::transpose(nb.value.data(), bt.data(), k, n);
      kernels::gemm(self.grad.data(), bt.data(), na.ensure_grad().data(), m, n, k, true);
    }
    if (nb.requires_grad) {
      kernels::gemm_tn(na.value.data(), self.grad.data(), nb.ensure_grad().data(), m, k, n, true);
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(x, 2, "linear input");
  require_rank(weight, 2, "linear weight");
  require_rank(bias, 1, "linear bias");
  const std::size_t m = x.dim(0);
  const std::size_t k = x.dim(1);
  const std::size_t n = weight.dim(1);
  if (weight.dim(0) != k || bias.dim(0) != n) {
    throw ShapeError("linear shapes incompatible: input " + shape_to_string(x.shape()) + ", weight " +
                     shape_to_string(weight.shape()) + ", bias " + shape_to_string(bias.shape()));
  }
  std::vector<double> out(m * n);
  const auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * n);
  kernels::gemm(x.data().data(), weight.data().data(), out.data(), m, k, n, true);
  return make_result({m, n}, std::move(out), {x, weight, bias}, [m, k, n](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nw = *self.inputs[1];
    Node& nb = *self.inputs[2];
    const auto& g = self.grad;
    if (nx.requires_grad) {
      std::vector<double> wt(k * n);
      kernels::transpose(nw.value.data(), wt.data(), k, n);
      kernels::gemm(g.data(), wt.data(), nx.ensure_grad().data(), m, n, k, true);
    }
    if (nw.requires_grad) {
      kernels::gemm_tn(nx.value.data(), g.data(), nw.ensure_grad().data(), m, k, n, true);
    }
    if (nb.requires_grad) {
      auto& gb = nb.ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0);
  const std::size_t n = a.dim(1);
  std::vector<double> out(m * n);
  kernels::transpose(a.data().data(), out.data(), m, n);
  return make_result({n, m}, std::move(out), {a}, [m, n](Node& self) {
    Node& na = *self.inputs[0];
    auto& ga = na.ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
    }
  });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double x : a.data()) {
    if (!(x > 0.0)) throw DomainError("log: input must be positive, got " + std::to_string(x));
  }
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sin(const Tensor& a) {
  return unary(
      a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary(
      a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Tensor asin(const Tensor& a) {
  for (double x : a.data()) {
    if (!(x >= -1.0 && x <= 1.0)) throw DomainError("asin: input " + std::to_string(x) + " outside [-1, 1]");
  }
  return unary(
      a, [](double x) { return std::asin(x); },
      [](double x, double) {
        const double r = 1.0 - x * x;
        return r > 0.0 ? 1.0 / std::sqrt(r) : std::numeric_limits<double>::infinity();
      });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, [](double x) { return stable_sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return stable_sigmoid(x); });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary(
      a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor softmax(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("softmax needs at least one axis");
  const std::size_t cols = a.shape().back();
  const std::size_t rows = cols ? a.size() / cols : 0;
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = av.data() + r * cols;
    double* y = out.data() + r * cols;
    const double mx = *std::max_element(x, x + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    for (std::size_t j = 0; j < cols; ++j) y[j] /= total;
  }
  return make_result(a.shape(), std::move(out), {a}, [rows, cols](Node& self) {
    auto& ga = self.inputs[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * cols;
      const double* g = self.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < cols; ++j) ga[r * cols + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double x : a.data()) total += x;
  return make_result({}, {total}, {a}, [](Node& self) {
    auto& ga = self.inputs[0]->ensure_grad();
    const double g = self.grad[0];
    for (auto& v : ga) v += g;
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim) {
  const auto& shape = a.shape();
  if (axis >= shape.size()) {
    throw ShapeError("sum_axis: axis " + std::to_string(axis) + " out of range for " + shape_to_string(shape));
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];
  Shape out_shape = shape;
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  const auto av = a.data();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      const double* src = av.data() + (o * len + l) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  return make_result(std::move(out_shape), std::move(out), {a}, [outer, inner, len](Node& self) {
    auto& ga = self.inputs[0]->ensure_grad();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t l = 0; l < len; ++l) {
        double* dst = ga.data() + (o * len + l) * inner;
        const double* g = self.grad.data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += g[i];
      }
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_to_string(first));
  }
  std::vector<std::size_t> extents;
  std::size_t total_axis = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) {
      throw ShapeError("concat: shape " + shape_to_string(s) + " incompatible with " + shape_to_string(first) +
                       " along axis " + std::to_string(axis));
    }
    extents.push_back(s[axis]);
    total_axis += s[axis];
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[axis] = total_axis;
  std::vector<double> out(outer * total_axis * inner);
  const std::size_t out_row = total_axis * inner;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto src = parts[p].data();
    const std::size_t row = extents[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(src.data() + o * row, row, out.data() + o * out_row + offset);
    }
    offset += row;
  }
  return make_result(std::move(out_shape), std::move(out), parts, [extents, outer, inner, out_row](Node& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < self.inputs.size(); ++p) {
      Node& np = *self.inputs[p];
      const std::size_t row = extents[p] * inner;
      if (np.requires_grad) {
        auto& gp = np.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          const double* g = self.grad.data() + o * out_row + off;
          double* dst = gp.data() + o * row;
          for (std::size_t i = 0; i < row; ++i) dst[i] += g[i];
        }
      }
      off += row;
    }
  });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (num_elements(shape) != a.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(a.shape()) + " to " + shape_to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(shape, std::move(out), {a}, [](Node& self) {
    auto& ga = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  if (broadcast_shapes(a.shape(), shape) != shape) {
    throw ShapeError("cannot broadcast " + shape_to_string(a.shape()) + " to " + shape_to_string(shape));
  }
  Strides sa = broadcast_strides(a.shape(), shape);
  Strides none(shape.size(), 0);
  const auto av = a.data();
  std::vector<double> out(num_elements(shape));
  for_each_broadcast(shape, sa, none, [&](std::size_t o, std::size_t ia, std::size_t) { out[o] = av[ia]; });
  return make_result(shape, std::move(out), {a}, [shape, sa, none](Node& self) {
    auto& ga = self.inputs[0]->ensure_grad();
    for_each_broadcast(shape, sa, none, [&](std::size_t o, std::size_t ia, std::size_t) { ga[ia] += self.grad[o]; });
  });
}

Tensor exclusive_cumsum(const Tensor& a) {
  if (a.rank() == 0) throw ShapeError("exclusive_cumsum needs at least one axis");
  const std::size_t cols = a.shape().back();
  const std::size_t rows = cols ? a.size() / cols : 0;
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double running = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      out[r * cols + j] = running;
      running += av[r * cols + j];
    }
  }
  return make_result(a.shape(), std::move(out), {a}, [rows, cols](Node& self) {
    auto& ga = self.inputs[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double running = 0.0;
      for (std::size_t j = cols; j-- > 0;) {
        ga[r * cols + j] += running;
        running += self.grad[r * cols + j];
      }
    }
  });
}

}  // namespace rose::ad
