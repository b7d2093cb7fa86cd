#pragma once

// Low Latency Streaming Attention.
//
// Every frame carries A + 1 channels; channel c is the variant of the frame
// computed with exactly c frames of look-ahead. Output (t, c) is rooted at
// the anchor s = t - (A - c) and attends to
//
//   { (u, A)         : u in [s - B, s] }      look-back, channel A
//   { (s + j, A - j) : j in [1, A] }          look-ahead, decreasing channel
//
// clipped to [0, N_T - 1]. Column j of a row maps to time s - B + j. The
// outputs (s, A), (s + 1, A - 1), ..., (s + A, 0) share one key/value set, so
// output (t, c) only depends on raw input frames <= t + c and stacking layers
// does not add latency.

#include <cstdint>
#include <vector>

#include "bsattn/accounting.hpp"
#include "bsattn/frames.hpp"

namespace bsattn {

class ChanneledSequence {
 public:
  ChanneledSequence() = default;
  ChanneledSequence(std::size_t n_frames, std::size_t n_channels, std::size_t dim);

  std::size_t n_frames() const noexcept { return n_; }
  std::size_t n_channels() const noexcept { return c_; }
  std::size_t dim() const noexcept { return d_; }
  bool empty() const noexcept { return n_ == 0; }

  std::span<double> at(std::size_t t, std::size_t c) { return {data_.data() + (t * c_ + c) * d_, d_}; }
  std::span<const double> at(std::size_t t, std::size_t c) const {
    return {data_.data() + (t * c_ + c) * d_, d_};
  }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const ChanneledSequence& o) const {
    return n_ == o.n_ && c_ == o.c_ && d_ == o.d_;
  }

 private:
  std::size_t n_ = 0;
  std::size_t c_ = 0;
  std::size_t d_ = 0;
  std::vector<double> data_;
};

double max_abs_diff(const ChanneledSequence& a, const ChanneledSequence& b);
std::uint64_t fingerprint(const ChanneledSequence& seq, std::uint64_t hash = kFnvOffset);

struct LlsaInputs {
  ChanneledSequence queries;
  ChanneledSequence keys;
  ChanneledSequence values;

  std::size_t n_frames() const noexcept { return queries.n_frames(); }
  std::size_t n_channels() const noexcept { return queries.n_channels(); }
  // Throws ArgumentError on shape mismatch or when the channel count is not
  // band.look_ahead + 1.
  void validate(BandSpec band) const;
};

struct ChanneledGrad {
  ChanneledSequence d_queries;
  ChanneledSequence d_keys;
  ChanneledSequence d_values;
};

// Copies x into each of the A + 1 channels (first-layer input).
ChanneledSequence channelize(const FrameSequence& x, std::size_t look_ahead);

// Channel c as a plain sequence. Throws ArgumentError when c is out of range.
FrameSequence select_output_channel(const ChanneledSequence& y, std::size_t c);

struct LlsaSlot {
  std::ptrdiff_t time;
  std::size_t channel;
};

// Key/value slot read by column `column` of output (t, c). The time may fall
// outside the sequence; such columns are clipped.
LlsaSlot llsa_window_slot(std::size_t t, std::size_t c, std::size_t column, BandSpec band);

class LlsaScores {
 public:
  LlsaScores() = default;
  LlsaScores(std::size_t n_frames, BandSpec band, std::uint64_t input_fingerprint);

  std::size_t n_frames() const noexcept { return n_; }
  std::size_t n_channels() const noexcept { return band_.look_ahead + 1; }
  const BandSpec& band() const noexcept { return band_; }
  std::size_t width() const noexcept { return band_.receptive_field(); }
  std::uint64_t input_fingerprint() const noexcept { return fingerprint_; }

  std::size_t valid_lo(std::size_t t, std::size_t c) const { return lo_[t * n_channels() + c]; }
  std::size_t valid_hi(std::size_t t, std::size_t c) const { return hi_[t * n_channels() + c]; }
  std::span<double> row(std::size_t t, std::size_t c) {
    return {probs_.data() + (t * n_channels() + c) * width(), width()};
  }
  std::span<const double> row(std::size_t t, std::size_t c) const {
    return {probs_.data() + (t * n_channels() + c) * width(), width()};
  }
  std::size_t allocated_elements() const noexcept { return probs_.size(); }
  // Scores actually evaluated (valid columns summed over all rows).
  std::uint64_t score_evaluations() const noexcept { return evaluations_; }

 private:
  std::size_t n_ = 0;
  BandSpec band_{};
  std::uint64_t fingerprint_ = 0;
  std::uint64_t evaluations_ = 0;
  TrackedBuffer<double> probs_;
  std::vector<std::size_t> lo_;
  std::vector<std::size_t> hi_;
};

struct LlsaForwardResult {
  ChanneledSequence output;
  LlsaScores scores;
};

LlsaForwardResult llsa_forward(const LlsaInputs& inp, BandSpec band);

// Exact gradient of llsa_forward composed with <d_output, .>. Value and key
// gradients of slot (t, c2) accumulate over every output (n, c1) whose
// window contains that slot; query gradients are local to (t, c).
ChanneledGrad llsa_backward(const LlsaInputs& inp, BandSpec band, const LlsaScores& cache,
                            const ChanneledSequence& d_output);

// Allocation count of the channeled score cache, ignoring edge clipping:
// (A + 1) * N_T * (A + B + 1).
constexpr std::uint64_t llsa_score_elements(std::uint64_t n_frames, BandSpec band) {
  return (band.look_ahead + 1) * n_frames * band.receptive_field();
}

}  // namespace bsattn
