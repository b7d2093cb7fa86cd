#include "bsattn/detail/kernels.hpp"

namespace bsattn::detail {

#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
#define BSATTN_CLONES __attribute__((target_clones("avx512f", "avx2", "default")))
#else
#define BSATTN_CLONES
#endif

BSATTN_CLONES void axpy(float a, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

BSATTN_CLONES void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

}  // namespace bsattn::detail
