#pragma once

// Streaming Attention: banded scaled dot-product attention that computes and
// stores only the A + B + 1 scores of each frame's window.
//
// Column convention: column j of row t holds the score against time
// t - B + j. Windows are clipped to [0, N_T - 1]; clipped columns are
// exactly zero and the softmax runs over the valid extent only.

#include <cstdint>
#include <vector>

#include "bsattn/accounting.hpp"
#include "bsattn/frames.hpp"

namespace bsattn {

template <typename T>
class BandedScores {
 public:
  BandedScores() = default;
  BandedScores(std::size_t n_frames, BandSpec band, std::uint64_t input_fingerprint);

  std::size_t n_frames() const noexcept { return n_; }
  const BandSpec& band() const noexcept { return band_; }
  std::size_t width() const noexcept { return band_.receptive_field(); }
  std::uint64_t input_fingerprint() const noexcept { return fingerprint_; }

  // Valid columns of row t are [valid_lo(t), valid_hi(t)).
  std::size_t valid_lo(std::size_t t) const { return lo_[t]; }
  std::size_t valid_hi(std::size_t t) const { return hi_[t]; }
  // Absolute time of column j in row t (may be out of range for clipped columns).
  std::ptrdiff_t column_time(std::size_t t, std::size_t j) const {
    return static_cast<std::ptrdiff_t>(t + j) - static_cast<std::ptrdiff_t>(band_.look_back);
  }

  std::span<T> row(std::size_t t) { return {probs_.data() + t * width(), width()}; }
  std::span<const T> row(std::size_t t) const { return {probs_.data() + t * width(), width()}; }
  std::span<const T> valid_row(std::size_t t) const {
    return row(t).subspan(lo_[t], hi_[t] - lo_[t]);
  }
  std::size_t allocated_elements() const noexcept { return probs_.size(); }

 private:
  std::size_t n_ = 0;
  BandSpec band_{};
  std::uint64_t fingerprint_ = 0;
  TrackedBuffer<T> probs_;
  std::vector<std::size_t> lo_;
  std::vector<std::size_t> hi_;
};

template <typename T>
struct SaForwardResult {
  BasicFrameSequence<T> output;
  BandedScores<T> scores;
};

// y_t = sum_{j=-B}^{A} a_t[j + B] v_{t+j} with a_t the softmax over the
// clipped window. Allocates exactly sa_score_elements() score values and no
// N_T x N_T buffer.
template <typename T>
SaForwardResult<T> sa_forward(const BasicAttentionInputs<T>& inp, BandSpec band);

// Value mixing from an existing probability cache (the second half of
// sa_forward). Used by harness self-tests that tamper with a cache.
template <typename T>
BasicFrameSequence<T> sa_weighted_sum(const BasicFrameSequence<T>& values,
                                      const BandedScores<T>& scores);

// Exact gradient of sa_forward composed with <d_output, .>. Throws
// StateError when the cache was not produced from these inputs and band.
//
//   d_values[t]  gathers a_n[t - n + B] * d_output[n]      for n in [t - A, t + B]
//   d_queries[t] = (1/sqrt(d_k)) sum_j dz_t[j] k_{t-B+j}    (local to t)
//   d_keys[t]    gathers dz_n[t - n + B] q_n / sqrt(d_k)    for n in [t - A, t + B]
//
// where dz_n is d_output[n] pushed through the value mixing and the softmax
// Jacobian of row n.
GradTriple sa_backward(const AttentionInputs& inp, BandSpec band,
                       const BandedScores<double>& cache, const FrameSequence& d_output);

constexpr std::uint64_t sa_score_elements(std::uint64_t n_frames, BandSpec band) {
  return n_frames * band.receptive_field();
}

}  // namespace bsattn
