#include "bsattn/numerics.hpp"

#include <numbers>
#include <string>

#include "bsattn/errors.hpp"

namespace bsattn {

RealVector stable_softmax(std::span<const double> z) {
  if (z.empty()) throw ArgumentError("stable_softmax: empty input");
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z[i]))
      throw ArgumentError("stable_softmax: non-finite entry at index " + std::to_string(i));
  }
  RealVector p(z.begin(), z.end());
  detail::softmax_inplace(std::span<double>(p));
  return p;
}

RealVector softmax_vjp(std::span<const double> p, std::span<const double> g) {
  if (p.size() != g.size())
    throw ArgumentError("softmax_vjp: length mismatch (" + std::to_string(p.size()) + " vs " +
                        std::to_string(g.size()) + ")");
  RealVector out(p.size());
  detail::softmax_vjp_into(p, g, out);
  return out;
}

RealVector finite_difference_grad(const ScalarFunction& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw ArgumentError("finite_difference_grad: step must be positive");
  RealVector probe(x.begin(), x.end());
  RealVector grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f(probe);
    probe[i] = saved - h;
    const double down = f(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw OracleError("finite_difference_grad: non-finite evaluation at coordinate " +
                            std::to_string(i),
                        i);
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  std::uint64_t z = seed_ + counter_ * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::normal(double mean, double stddev) {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ArgumentError("Rng::below: empty range");
  return next_u64() % n;
}

void Rng::fill_uniform(std::span<double> out, double lo, double hi) {
  for (double& v : out) v = uniform(lo, hi);
}

void Rng::fill_normal(std::span<double> out, double stddev) {
  for (double& v : out) v = normal(0.0, stddev);
}

}  // namespace bsattn
