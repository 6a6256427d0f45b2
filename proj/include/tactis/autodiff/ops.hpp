#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tactis/autodiff/tensor.hpp"

namespace tactis::ad {

/// Fill value used by attention masking before a softmax.
inline constexpr double kMaskFill = -1e9;
/// Variance epsilon inside layer_norm's square root.
inline constexpr double kLayerNormEps = 1e-5;

// Elementwise binary operations with numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, double b);
Tensor mul(const Tensor& a, double b);
Tensor neg(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return mul(b, a); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

/// (m,k)x(k,n); (...,m,k)x(k,n); or (...,m,k)x(...,k,n) with equal batch dims.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, std::size_t axis, bool keepdim = false);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// log(1 + e^x), evaluated without overflow.
Tensor softplus(const Tensor& x);
Tensor tanh(const Tensor& x);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
Tensor logsumexp(const Tensor& x, std::size_t axis, bool keepdim = false);
/// Normalizes each row along the last axis to zero mean and unit variance.
Tensor layer_norm(const Tensor& x);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x, std::size_t axis_a, std::size_t axis_b);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor broadcast_to(const Tensor& x, const Shape& shape);
/// Replaces entries where mask != 0 by `value`. `mask` has x's element count.
Tensor masked_fill(const Tensor& x, std::span<const std::uint8_t> mask, double value);
/// Rows of x (along axis 0) at the given indices.
Tensor index_select(const Tensor& x, std::span<const std::size_t> indices);
/// For x of shape (..., B): out[r] = x[r, indices[r]], shape (...).
Tensor take_along_last(const Tensor& x, std::span<const std::size_t> indices);

}  // namespace tactis::ad
