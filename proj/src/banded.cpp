#include "bsattn/banded.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bsattn/detail/kernels.hpp"
#include "bsattn/numerics.hpp"

namespace bsattn {

template <typename T>
BandedScores<T>::BandedScores(std::size_t n_frames, BandSpec band, std::uint64_t input_fingerprint)
    : n_(n_frames),
      band_(band),
      fingerprint_(input_fingerprint),
      probs_(labels::kBandedScores, n_frames * band.receptive_field()),
      lo_(n_frames),
      hi_(n_frames) {
  const std::size_t b = band.look_back;
  const std::size_t w = band.receptive_field();
  for (std::size_t t = 0; t < n_; ++t) {
    lo_[t] = t >= b ? 0 : b - t;
    hi_[t] = std::min(w, n_ - t + b);
  }
}

template <typename T>
SaForwardResult<T> sa_forward(const BasicAttentionInputs<T>& inp, BandSpec band) {
  inp.validate();
  const std::size_t n = inp.n_frames();
  const std::size_t dk = inp.key_dim();
  const std::size_t dv = inp.value_dim();

  BandedScores<T> scores(n, band, fingerprint(inp));

  std::vector<T> keys_t(dk * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < dk; ++i) keys_t[i * n + j] = inp.keys(j, i);

  const T scale = T(1) / std::sqrt(static_cast<T>(dk));
  BasicFrameSequence<T> out(n, dv);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = scores.valid_lo(t);
    const std::size_t count = scores.valid_hi(t) - lo;
    const std::size_t start = static_cast<std::size_t>(scores.column_time(t, lo));
    T* z = scores.row(t).data() + lo;
    auto q = inp.queries.row(t);
    for (std::size_t i = 0; i < dk; ++i) detail::axpy(q[i], keys_t.data() + i * n + start, z, count);
    for (std::size_t j = 0; j < count; ++j) z[j] *= scale;
    detail::softmax_inplace(std::span<T>(z, count));
    auto y = out.row(t);
    for (std::size_t j = 0; j < count; ++j)
      detail::axpy(z[j], inp.values.row(start + j).data(), y.data(), dv);
  }
  return {std::move(out), std::move(scores)};
}

template <typename T>
BasicFrameSequence<T> sa_weighted_sum(const BasicFrameSequence<T>& values,
                                      const BandedScores<T>& scores) {
  if (values.n_frames() != scores.n_frames())
    throw ArgumentError("sa_weighted_sum: values and scores differ in n_frames");
  const std::size_t dv = values.dim();
  BasicFrameSequence<T> out(values.n_frames(), dv);
  for (std::size_t t = 0; t < values.n_frames(); ++t) {
    const std::size_t lo = scores.valid_lo(t);
    const std::size_t start = static_cast<std::size_t>(scores.column_time(t, lo));
    auto p = scores.valid_row(t);
    auto y = out.row(t);
    for (std::size_t j = 0; j < p.size(); ++j)
      detail::axpy(p[j], values.row(start + j).data(), y.data(), dv);
  }
  return out;
}

GradTriple sa_backward(const AttentionInputs& inp, BandSpec band,
                       const BandedScores<double>& cache, const FrameSequence& d_output) {
  inp.validate();
  const std::size_t n = inp.n_frames();
  const std::size_t dk = inp.key_dim();
  const std::size_t dv = inp.value_dim();
  if (cache.n_frames() != n || cache.band() != band)
    throw StateError("sa_backward: cache was produced for a different shape or band");
  if (cache.input_fingerprint() != fingerprint(inp))
    throw StateError("sa_backward: cache was produced from different inputs");
  if (d_output.n_frames() != n || d_output.dim() != dv)
    throw ArgumentError("sa_backward: d_output shape mismatch");

  const std::size_t a_frames = band.look_ahead;
  const std::size_t b_frames = band.look_back;
  const std::size_t w = band.receptive_field();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  // dz_n: upstream gradient pulled back through value mixing and softmax.
  TrackedBuffer<double> dz(labels::kBandedGradScores, n * w);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = cache.valid_lo(t);
    const std::size_t count = cache.valid_hi(t) - lo;
    const std::size_t start = static_cast<std::size_t>(cache.column_time(t, lo));
    auto dy = d_output.row(t);
    std::span<double> row(dz.data() + t * w + lo, count);
    for (std::size_t j = 0; j < count; ++j)
      row[j] = detail::dot_sequential(dy.data(), inp.values.row(start + j).data(), dv);
    detail::softmax_vjp_into(cache.valid_row(t), row, row);
  }

  GradTriple g{FrameSequence(n, dk), FrameSequence(n, dk), FrameSequence(n, dv)};

  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = cache.valid_lo(t);
    const std::size_t count = cache.valid_hi(t) - lo;
    const std::size_t start = static_cast<std::size_t>(cache.column_time(t, lo));
    auto dq = g.d_queries.row(t);
    for (std::size_t j = 0; j < count; ++j)
      detail::axpy(dz[t * w + lo + j] * scale, inp.keys.row(start + j).data(), dq.data(), dk);
  }

  // Gathers over the output frames whose windows contain t.
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t n_lo = t >= a_frames ? t - a_frames : 0;
    const std::size_t n_hi = std::min(n - 1, t + b_frames);
    auto dvt = g.d_values.row(t);
    auto dkt = g.d_keys.row(t);
    for (std::size_t m = n_lo; m <= n_hi; ++m) {
      const std::size_t col = t + b_frames - m;
      detail::axpy(cache.row(m)[col], d_output.row(m).data(), dvt.data(), dv);
      detail::axpy(dz[m * w + col] * scale, inp.queries.row(m).data(), dkt.data(), dk);
    }
  }
  return g;
}

template class BandedScores<float>;
template class BandedScores<double>;
template SaForwardResult<float> sa_forward(const BasicAttentionInputs<float>&, BandSpec);
template SaForwardResult<double> sa_forward(const BasicAttentionInputs<double>&, BandSpec);
template BasicFrameSequence<float> sa_weighted_sum(const BasicFrameSequence<float>&,
                                                   const BandedScores<float>&);
template BasicFrameSequence<double> sa_weighted_sum(const BasicFrameSequence<double>&,
                                                    const BandedScores<double>&);

}  // namespace bsattn
