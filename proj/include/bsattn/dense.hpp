#pragma once

// Dense acausal attention (AA) and masked acausal attention (MAA).
//
// These kernels compute all N_T x N_T scores and are the correctness and
// memory oracle for the banded kernels. They are written to be plainly
// correct; the loop order only keeps the inner loops contiguous.

#include <cstdint>
#include <optional>
#include <vector>

#include "bsattn/accounting.hpp"
#include "bsattn/frames.hpp"

namespace bsattn {

// Value written over masked scores before the softmax. Underflows to an
// exact zero probability after max subtraction.
inline constexpr double kMaskedScore = -1e30;

class BandMask {
 public:
  BandMask(std::size_t n_frames, BandSpec band);

  std::size_t n_frames() const noexcept { return n_; }
  const BandSpec& band() const noexcept { return band_; }
  bool allowed(std::size_t t, std::size_t j) const { return bits_[t * n_ + j]; }
  std::size_t row_count(std::size_t t) const;
  std::uint64_t count_true() const;

 private:
  std::size_t n_;
  BandSpec band_;
  std::vector<bool> bits_;
};

// Row t is true on [max(0, t - B), min(N_T - 1, t + A)].
BandMask build_band_mask(std::size_t n_frames, BandSpec band);

// Post-softmax probabilities of a dense forward, N_T x N_T.
template <typename T>
struct DenseScoreCache {
  std::size_t n_frames = 0;
  std::optional<BandSpec> band;  // set for MAA, empty for AA
  std::uint64_t input_fingerprint = 0;
  TrackedBuffer<T> probs;

  std::span<const T> row(std::size_t t) const { return {probs.data() + t * n_frames, n_frames}; }
};

template <typename T>
struct DenseForwardResult {
  BasicFrameSequence<T> output;
  DenseScoreCache<T> cache;
};

// y_t = V^T softmax(K q_t / sqrt(d_k)) over every frame.
template <typename T>
BasicFrameSequence<T> aa_forward(const BasicAttentionInputs<T>& inp);

template <typename T>
DenseForwardResult<T> aa_forward_with_cache(const BasicAttentionInputs<T>& inp);

// Computes all N_T^2 scores, overwrites masked ones with kMaskedScore, then
// softmax and value mixing. The cache keeps the probabilities.
template <typename T>
DenseForwardResult<T> maa_forward(const BasicAttentionInputs<T>& inp, const BandMask& mask);

// Exact gradient of maa_forward composed with <d_output, .>.
GradTriple maa_backward(const AttentionInputs& inp, const BandMask& mask,
                        const DenseScoreCache<double>& cache, const FrameSequence& d_output);

GradTriple aa_backward(const AttentionInputs& inp, const DenseScoreCache<double>& cache,
                       const FrameSequence& d_output);

constexpr std::uint64_t maa_score_elements(std::uint64_t n_frames) { return n_frames * n_frames; }

}  // namespace bsattn
