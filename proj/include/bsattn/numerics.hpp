#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace bsattn {

using RealVector = std::vector<double>;

// p_i = exp(z_i - max z) / sum_j exp(z_j - max z). Throws ArgumentError on
// empty or non-finite input.
RealVector stable_softmax(std::span<const double> z);

// Row-vector product g^T J with the softmax Jacobian J = diag(p) - p p^T,
// evaluated in closed form as p * (g - <g, p>).
RealVector softmax_vjp(std::span<const double> p, std::span<const double> g);

using ScalarFunction = std::function<double(std::span<const double>)>;

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
// Throws OracleError carrying the coordinate when f is not finite there.
RealVector finite_difference_grad(const ScalarFunction& f, std::span<const double> x, double h);

// SplitMix64 used as a counter-based generator: draw n (n = 0, 1, ...) is
// mix64(seed + (n + 1) * 0x9E3779B97F4A7C15), with the standard SplitMix64
// finalizer. Doubles take the top 53 bits. Normals use Box-Muller on two
// consecutive uniform draws, no caching of the second variate.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64();
  // Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal(double mean = 0.0, double stddev = 1.0);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  void fill_uniform(std::span<double> out, double lo, double hi);
  void fill_normal(std::span<double> out, double stddev);

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

namespace detail {

// In-place max-subtracted softmax. Works on float and double rows.
template <typename T>
void softmax_inplace(std::span<T> z) {
  T peak = z[0];
  for (T v : z) peak = std::max(peak, v);
  T sum = T(0);
  for (T& v : z) {
    v = std::exp(v - peak);
    sum += v;
  }
  const T inv = T(1) / sum;
  for (T& v : z) v *= inv;
}

// out = p * (g - <g, p>); out may alias g.
inline void softmax_vjp_into(std::span<const double> p, std::span<const double> g,
                             std::span<double> out) {
  double dot = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) dot += g[i] * p[i];
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] * (g[i] - dot);
}

}  // namespace detail

}  // namespace bsattn
