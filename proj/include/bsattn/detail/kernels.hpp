#pragma once

#include <cstddef>

namespace bsattn::detail {

// y[i] += a * x[i]. Elementwise, so every vector width rounds identically;
// the implementation is cloned per ISA and dispatched at load time.
void axpy(float a, const float* x, float* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);

// Sequential dot product, i = 0 .. n-1 in order. Accumulation order matches
// a column of axpy calls that start from zero.
template <typename T>
T dot_sequential(const T* a, const T* b, std::size_t n) {
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace bsattn::detail
