#pragma once

#include "patchlens/tensor.hpp"

namespace patchlens {

enum class GeluVariant { erf, tanh };

/// c[i][j] = sum_t a[i][t] * b[t][j]; both operands rank 2.
Tensor matmul(const Tensor& a, const Tensor& b);

/// x[m x k] * w[k x n] + bias[n].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

/// Softmax over the trailing dimension, max-subtracted.
Tensor softmax_rows(const Tensor& x);

/// Per-row normalisation over the trailing dimension with population
/// variance: (x - mean) / sqrt(var + eps) * gamma + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);

Tensor gelu(const Tensor& x, GeluVariant variant = GeluVariant::erf);

float gelu_scalar(float x, GeluVariant variant = GeluVariant::erf);

/// Elementwise a + b; shapes must match.
Tensor add(const Tensor& a, const Tensor& b);

}  // namespace patchlens
