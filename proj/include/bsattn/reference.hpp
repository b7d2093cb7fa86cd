#pragma once

// Brute-force forwards in extended precision, written from the window
// definitions rather than sharing code with the kernels. The gradient
// checker differentiates these numerically: in double, a central difference
// with h = 1e-6 carries ~1e-10 of rounding noise, which swamps small
// gradient coordinates.

#include <functional>
#include <span>
#include <vector>

#include "bsattn/block.hpp"

namespace bsattn::reference {

using Real = long double;

// Attention over channeled rows laid out [t][c][d]. For aa/maa/sa there is
// one channel; for llsa there are A+1.
std::vector<Real> attention(const AttentionMode& mode, std::span<const Real> q, std::span<const Real> k,
                            std::span<const Real> v, std::size_t n_frames, std::size_t dim);

// Block parameters flattened in for_each_tensor order.
std::vector<Real> flatten(const BlockParams& p);

// Encoder block forward on channeled input [t][c][model_dim].
std::vector<Real> block(const AttentionMode& mode, std::span<const Real> params, std::span<const Real> x,
                        std::size_t n_frames, std::size_t model_dim, std::size_t n_heads, std::size_t ffn_dim);

using RealFunction = std::function<Real(std::span<const Real>)>;

// (f(x + h e_i) - f(x - h e_i)) / 2h for every i, evaluated in Real.
std::vector<double> central_difference(const RealFunction& f, std::span<const double> x, double h);

}  // namespace bsattn::reference
