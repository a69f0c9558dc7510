#include <arm_neon.h>

#include "patchlens/kernels.hpp"

namespace patchlens::kernels::detail {
namespace {

constexpr std::size_t kLanes = 4;

float dot_neon(const float* x, const float* y, std::size_t n) {
  const std::size_t rounds = n / kLanes;
  float32x4_t acc = vdupq_n_f32(0.0f);
  for (std::size_t r = 0; r < rounds; ++r) {
    acc = vfmaq_f32(acc, vld1q_f32(x + r * kLanes), vld1q_f32(y + r * kLanes));
  }
  float result = vaddvq_f32(acc);
  for (std::size_t i = rounds * kLanes; i < n; ++i) result += x[i] * y[i];
  return result;
}

void axpy_neon(float alpha, const float* x, float* y, std::size_t n) {
  const std::size_t rounds = n / kLanes;
  const float32x4_t a = vdupq_n_f32(alpha);
  for (std::size_t r = 0; r < rounds; ++r) {
    vst1q_f32(y + r * kLanes, vfmaq_f32(vld1q_f32(y + r * kLanes), a, vld1q_f32(x + r * kLanes)));
  }
  for (std::size_t i = rounds * kLanes; i < n; ++i) y[i] += alpha * x[i];
}

void add_neon(const float* x, float* y, std::size_t n) {
  const std::size_t rounds = n / kLanes;
  for (std::size_t r = 0; r < rounds; ++r) {
    vst1q_f32(y + r * kLanes, vaddq_f32(vld1q_f32(y + r * kLanes), vld1q_f32(x + r * kLanes)));
  }
  for (std::size_t i = rounds * kLanes; i < n; ++i) y[i] += x[i];
}

void scale_neon(float alpha, float* x, std::size_t n) {
  const std::size_t rounds = n / kLanes;
  for (std::size_t r = 0; r < rounds; ++r) {
    vst1q_f32(x + r * kLanes, vmulq_n_f32(vld1q_f32(x + r * kLanes), alpha));
  }
  for (std::size_t i = rounds * kLanes; i < n; ++i) x[i] *= alpha;
}

float max_neon(const float* x, std::size_t n) {
  const std::size_t rounds = n / kLanes;
  float m = x[0];
  if (rounds > 0) {
    float32x4_t acc = vld1q_f32(x);
    for (std::size_t r = 1; r < rounds; ++r) acc = vmaxq_f32(acc, vld1q_f32(x + r * kLanes));
    m = vmaxvq_f32(acc);
  }
  for (std::size_t i = rounds * kLanes; i < n; ++i) m = x[i] > m ? x[i] : m;
  return m;
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable t{Isa::neon, dot_neon, axpy_neon, add_neon, scale_neon, max_neon};
  return t;
}

}  // namespace patchlens::kernels::detail
