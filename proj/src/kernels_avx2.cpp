#include <immintrin.h>

#include "patchlens/kernels.hpp"

namespace patchlens::kernels::detail {
namespace {

constexpr std::size_t kLanes = 8;

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

float dot_avx2(const float* x, const float* y, std::size_t n) {
  const std::size_t rounds = n / kLanes;
  __m256 acc = _mm256_setzero_ps();
  for (std::size_t r = 0; r < rounds; ++r) {
    const __m256 a = _mm256_loadu_ps(x + r * kLanes);
    const __m256 b = _mm256_loadu_ps(y + r * kLanes);
    acc = _mm256_fmadd_ps(a, b, acc);
  }
  float result = hsum(acc);
  for (std::size_t i = rounds * kLanes; i < n; ++i) result += x[i] * y[i];
  return result;
}

void axpy_avx2(float alpha, const float* x, float* y, std::size_t n) {
  const std::size_t rounds = n / kLanes;
  const __m256 a = _mm256_set1_ps(alpha);
  for (std::size_t r = 0; r < rounds; ++r) {
    const __m256 xv = _mm256_loadu_ps(x + r * kLanes);
    const __m256 yv = _mm256_loadu_ps(y + r * kLanes);
    _mm256_storeu_ps(y + r * kLanes, _mm256_fmadd_ps(a, xv, yv));
  }
  for (std::size_t i = rounds * kLanes; i < n; ++i) y[i] += alpha * x[i];
}

void add_avx2(const float* x, float* y, std::size_t n) {
  const std::size_t rounds = n / kLanes;
  for (std::size_t r = 0; r < rounds; ++r) {
    const __m256 xv = _mm256_loadu_ps(x + r * kLanes);
    const __m256 yv = _mm256_loadu_ps(y + r * kLanes);
    _mm256_storeu_ps(y + r * kLanes, _mm256_add_ps(xv, yv));
  }
  for (std::size_t i = rounds * kLanes; i < n; ++i) y[i] += x[i];
}

void scale_avx2(float alpha, float* x, std::size_t n) {
  const std::size_t rounds = n / kLanes;
  const __m256 a = _mm256_set1_ps(alpha);
  for (std::size_t r = 0; r < rounds; ++r) {
    _mm256_storeu_ps(x + r * kLanes, _mm256_mul_ps(a, _mm256_loadu_ps(x + r * kLanes)));
  }
  for (std::size_t i = rounds * kLanes; i < n; ++i) x[i] *= alpha;
}

float max_avx2(const float* x, std::size_t n) {
  const std::size_t rounds = n / kLanes;
  float m = x[0];
  if (rounds > 0) {
    __m256 acc = _mm256_loadu_ps(x);
    for (std::size_t r = 1; r < rounds; ++r) acc = _mm256_max_ps(acc, _mm256_loadu_ps(x + r * kLanes));
    alignas(32) float lanes[kLanes];
    _mm256_store_ps(lanes, acc);
    m = lanes[0];
    for (float v : lanes) m = v > m ? v : m;
  }
  for (std::size_t i = rounds * kLanes; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t{Isa::avx2, dot_avx2, axpy_avx2, add_avx2, scale_avx2, max_avx2};
  return t;
}

}  // namespace patchlens::kernels::detail
