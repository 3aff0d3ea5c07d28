// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations on rose::ad::Tensor.
//
// Binary elementwise ops broadcast numpy-style: shapes are right-aligned and
// each pair of extents must match or one of them must be 1.
#pragma once

#include <vector>

#include "rose/autodiff/tensor.hpp"

namespace rose::ad {

Shape broadcast_shapes(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }

/// a: [..., m, k] (leading axes folded into rows), b: [k, n] -> [..., m, n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// x: [rows, in], weight: [in, out], bias: [out] -> x * weight + bias.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
/// 2-D transpose.
Tensor transpose(const Tensor& a);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
/// Throws DomainError if any element lies outside [-1, 1].
Tensor asin(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
/// Gradient is passed through where lo <= a <= hi, zero elsewhere.
Tensor clamp(const Tensor& a, double lo, double hi);

/// Softmax over the last axis.
Tensor softmax(const Tensor& a);

/// Sum / mean of every element, returned as a scalar (shape []).
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim = false);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor broadcast_to(const Tensor& a, const Shape& shape);

/// out[..., n] = sum_{j<n} a[..., j] along the last axis.
Tensor exclusive_cumsum(const Tensor& a);

}  // namespace rose::ad
