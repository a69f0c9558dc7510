#include "patchlens/numerics.hpp"

#include <cmath>
#include <numbers>

#include "patchlens/kernels.hpp"

namespace patchlens {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_to_string(t.shape()));
  }
}

std::size_t trailing(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw ShapeError(std::string(op) + ": rank-0 input has no trailing dimension");
  return x.shape().back();
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  Tensor c({m, n});
  const auto& kt = kernels::active();
  // i-t-j order keeps the inner loop a contiguous axpy over a row of b.
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = c.row(i).data();
    for (std::size_t t = 0; t < k; ++t) {
      kt.axpy(a.at(i, t), b.row(t).data(), crow, n);
    }
  }
  return c;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  Tensor y = matmul(x, w);
  if (bias.numel() != y.dim(1)) {
    throw ShapeError("linear: bias " + shape_to_string(bias.shape()) + " does not match output width " +
                     std::to_string(y.dim(1)));
  }
  const auto& kt = kernels::active();
  for (std::size_t i = 0; i < y.dim(0); ++i) kt.add(bias.data().data(), y.row(i).data(), y.dim(1));
  return y;
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t n = trailing(x, "softmax_rows");
  if (n == 0) throw ShapeError("softmax_rows: empty trailing dimension in " + shape_to_string(x.shape()));
  Tensor y = x;
  const auto& kt = kernels::active();
  auto data = y.data();
  for (std::size_t off = 0; off < data.size(); off += n) {
    float* row = data.data() + off;
    const float m = kt.max(row, n);
    float sum = 0.0f;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - m);
      sum += row[j];
    }
    kt.scale(1.0f / sum, row, n);
  }
  return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  const std::size_t d = trailing(x, "layer_norm");
  if (d == 0) throw ShapeError("layer_norm: empty trailing dimension");
  if (gamma.numel() != d || beta.numel() != d) {
    throw ShapeError("layer_norm: gamma " + shape_to_string(gamma.shape()) + " / beta " +
                     shape_to_string(beta.shape()) + " do not match width " + std::to_string(d));
  }
  if (!(eps > 0.0f)) throw std::invalid_argument("layer_norm: eps must be positive");
  Tensor y = x;
  auto data = y.data();
  const auto g = gamma.data();
  const auto b = beta.data();
  for (std::size_t off = 0; off < data.size(); off += d) {
    float* row = data.data() + off;
    float mean = 0.0f;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (std::size_t j = 0; j < d; ++j) {
      const float c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) row[j] = (row[j] - mean) * inv * g[j] + b[j];
  }
  return y;
}

float gelu_scalar(float x, GeluVariant variant) {
  if (variant == GeluVariant::tanh) {
    constexpr float k = 0.7978845608028654f;  // sqrt(2/pi)
    return 0.5f * x * (1.0f + std::tanh(k * (x + 0.044715f * x * x * x)));
  }
  return 0.5f * x * (1.0f + std::erf(x / std::numbers::sqrt2_v<float>));
}

Tensor gelu(const Tensor& x, GeluVariant variant) {
  Tensor y = x;
  for (float& v : y.data()) v = gelu_scalar(v, variant);
  return y;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  Tensor c = a;
  kernels::active().add(b.data().data(), c.data().data(), c.numel());
  return c;
}

}  // namespace patchlens
