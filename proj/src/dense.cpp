#include "bsattn/dense.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bsattn/detail/kernels.hpp"
#include "bsattn/numerics.hpp"

namespace bsattn {

BandMask::BandMask(std::size_t n_frames, BandSpec band)
    : n_(n_frames), band_(band), bits_(n_frames * n_frames, false) {
  if (n_frames == 0) throw ArgumentError("build_band_mask: n_frames must be >= 1");
  for (std::size_t t = 0; t < n_; ++t) {
    const std::size_t lo = t >= band.look_back ? t - band.look_back : 0;
    const std::size_t hi = std::min(n_ - 1, t + band.look_ahead);
    for (std::size_t j = lo; j <= hi; ++j) bits_[t * n_ + j] = true;
  }
}

std::size_t BandMask::row_count(std::size_t t) const {
  std::size_t count = 0;
  for (std::size_t j = 0; j < n_; ++j) count += bits_[t * n_ + j] ? 1 : 0;
  return count;
}

std::uint64_t BandMask::count_true() const {
  return static_cast<std::uint64_t>(std::count(bits_.begin(), bits_.end(), true));
}

BandMask build_band_mask(std::size_t n_frames, BandSpec band) { return BandMask(n_frames, band); }

namespace {

template <typename T>
DenseForwardResult<T> dense_forward(const BasicAttentionInputs<T>& inp, const BandMask* mask) {
  inp.validate();
  const std::size_t n = inp.n_frames();
  const std::size_t dk = inp.key_dim();
  const std::size_t dv = inp.value_dim();
  if (mask != nullptr && mask->n_frames() != n)
    throw ArgumentError("maa_forward: mask built for " + std::to_string(mask->n_frames()) +
                        " frames, inputs have " + std::to_string(n));

  DenseScoreCache<T> cache;
  cache.n_frames = n;
  if (mask != nullptr) cache.band = mask->band();
  cache.input_fingerprint = fingerprint(inp);
  cache.probs = TrackedBuffer<T>(labels::kDenseScores, n * n);

  // Keys transposed to d_k x N_T so a score row is a sum of contiguous axpys.
  std::vector<T> keys_t(dk * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < dk; ++i) keys_t[i * n + j] = inp.keys(j, i);

  const T scale = T(1) / std::sqrt(static_cast<T>(dk));
  BasicFrameSequence<T> out(n, dv);
  for (std::size_t t = 0; t < n; ++t) {
    T* z = cache.probs.data() + t * n;
    auto q = inp.queries.row(t);
    for (std::size_t i = 0; i < dk; ++i) {
      detail::axpy(q[i], keys_t.data() + i * n, z, n);
    }
    for (std::size_t j = 0; j < n; ++j) z[j] *= scale;
    if (mask != nullptr) {
      for (std::size_t j = 0; j < n; ++j)
        if (!mask->allowed(t, j)) z[j] = static_cast<T>(kMaskedScore);
    }
    detail::softmax_inplace(std::span<T>(z, n));
    auto y = out.row(t);
    for (std::size_t j = 0; j < n; ++j) detail::axpy(z[j], inp.values.row(j).data(), y.data(), dv);
  }
  return {std::move(out), std::move(cache)};
}

GradTriple dense_backward(const AttentionInputs& inp, const BandMask* mask,
                          const DenseScoreCache<double>& cache, const FrameSequence& d_output) {
  inp.validate();
  const std::size_t n = inp.n_frames();
  const std::size_t dk = inp.key_dim();
  const std::size_t dv = inp.value_dim();
  if (cache.n_frames != n || cache.probs.size() != n * n)
    throw StateError("dense backward: cache shape does not match inputs");
  if (cache.input_fingerprint != fingerprint(inp))
    throw StateError("dense backward: cache was produced from different inputs");
  if (mask != nullptr) {
    if (!cache.band || *cache.band != mask->band() || mask->n_frames() != n)
      throw StateError("maa_backward: cache was produced with a different mask");
  } else if (cache.band) {
    throw StateError("aa_backward: cache comes from a masked forward");
  }
  if (d_output.n_frames() != n || d_output.dim() != dv)
    throw ArgumentError("dense backward: d_output shape mismatch");

  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  GradTriple g{FrameSequence(n, dk), FrameSequence(n, dk), FrameSequence(n, dv)};
  std::vector<double> dz(n);
  for (std::size_t t = 0; t < n; ++t) {
    auto a = cache.row(t);
    auto dy = d_output.row(t);
    for (std::size_t j = 0; j < n; ++j) {
      auto v = inp.values.row(j);
      double s = 0.0;
      for (std::size_t i = 0; i < dv; ++i) s += dy[i] * v[i];
      dz[j] = s;
      auto dvj = g.d_values.row(j);
      for (std::size_t i = 0; i < dv; ++i) dvj[i] += a[j] * dy[i];
    }
    // Masked columns carry a == 0, so the Jacobian product zeroes them.
    detail::softmax_vjp_into(a, dz, dz);
    auto q = inp.queries.row(t);
    auto dq = g.d_queries.row(t);
    for (std::size_t j = 0; j < n; ++j) {
      const double w = dz[j] * scale;
      if (w == 0.0) continue;
      auto k = inp.keys.row(j);
      auto dkj = g.d_keys.row(j);
      for (std::size_t i = 0; i < dk; ++i) {
        dq[i] += w * k[i];
        dkj[i] += w * q[i];
      }
    }
  }
  return g;
}

}  // namespace

template <typename T>
BasicFrameSequence<T> aa_forward(const BasicAttentionInputs<T>& inp) {
  return dense_forward<T>(inp, nullptr).output;
}

template <typename T>
DenseForwardResult<T> aa_forward_with_cache(const BasicAttentionInputs<T>& inp) {
  return dense_forward<T>(inp, nullptr);
}

template <typename T>
DenseForwardResult<T> maa_forward(const BasicAttentionInputs<T>& inp, const BandMask& mask) {
  return dense_forward<T>(inp, &mask);
}

GradTriple maa_backward(const AttentionInputs& inp, const BandMask& mask,
                        const DenseScoreCache<double>& cache, const FrameSequence& d_output) {
  return dense_backward(inp, &mask, cache, d_output);
}

GradTriple aa_backward(const AttentionInputs& inp, const DenseScoreCache<double>& cache,
                       const FrameSequence& d_output) {
  return dense_backward(inp, nullptr, cache, d_output);
}

template BasicFrameSequence<float> aa_forward(const BasicAttentionInputs<float>&);
template BasicFrameSequence<double> aa_forward(const BasicAttentionInputs<double>&);
template DenseForwardResult<float> aa_forward_with_cache(const BasicAttentionInputs<float>&);
template DenseForwardResult<double> aa_forward_with_cache(const BasicAttentionInputs<double>&);
template DenseForwardResult<float> maa_forward(const BasicAttentionInputs<float>&, const BandMask&);
template DenseForwardResult<double> maa_forward(const BasicAttentionInputs<double>&,
                                                const BandMask&);

}  // namespace bsattn
