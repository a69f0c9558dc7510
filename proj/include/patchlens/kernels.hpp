#pragma once

// Inner-loop float kernels with one scalar reference implementation and
// optional SIMD variants. The variant is picked once at startup from the
// running CPU; tests can pin any available variant to check equivalence.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace patchlens::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  /// sum_i x[i] * y[i]
  float (*dot)(const float* x, const float* y, std::size_t n);
  /// y[i] += alpha * x[i]
  void (*axpy)(float alpha, const float* x, float* y, std::size_t n);
  /// y[i] += x[i]
  void (*add)(const float* x, float* y, std::size_t n);
  /// x[i] *= alpha
  void (*scale)(float alpha, float* x, std::size_t n);
  /// max_i x[i]; n >= 1
  float (*max)(const float* x, std::size_t n);
};

/// True when the variant was compiled in and the CPU supports it.
bool available(Isa isa);
std::vector<Isa> available_isas();

/// Best variant for this CPU.
Isa detect();

const KernelTable& table(Isa isa);

/// Table used by the numerics layer. Defaults to `detect()`.
const KernelTable& active();
Isa active_isa();
void set_active(Isa isa);

/// Pins the active variant for the lifetime of the guard.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_active(isa); }
  ~ScopedIsa() { set_active(previous_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa previous_;
};

// Span conveniences over the active table.
inline float dot(std::span<const float> x, std::span<const float> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  active().axpy(alpha, x.data(), y.data(), y.size());
}
inline void add(std::span<const float> x, std::span<float> y) { active().add(x.data(), y.data(), y.size()); }
inline void scale(float alpha, std::span<float> x) { active().scale(alpha, x.data(), x.size()); }
inline float max(std::span<const float> x) { return active().max(x.data(), x.size()); }

namespace detail {
const KernelTable& scalar_table();
#if defined(PATCHLENS_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(PATCHLENS_HAVE_NEON)
const KernelTable& neon_table();
#endif
}  // namespace detail

}  // namespace patchlens::kernels
