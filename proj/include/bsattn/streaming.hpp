#pragma once

// Frame-in / frame-out inference over an encoder stack.
//
// SA and MAA layers keep a ring of projected keys/values (A+B+1 frames) and
// a queue of frames still waiting for look-ahead. LLSA runs along
// diagonals: raw frame r completes every slot (t, c) with t + c = r in every
// layer at once, so the designated output t = r - A leaves after A frames
// regardless of depth. AA has no finite horizon; it buffers the stream and
// runs the offline stack at flush.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "bsattn/block.hpp"
#include "bsattn/numerics.hpp"

namespace bsattn {

inline constexpr double kDefaultFrameDuration = 0.020;

// Total look-ahead of an L-layer stack in frames. nullopt means unbounded
// (AA needs the whole sequence). Throws ArgumentError when n_layers == 0.
std::optional<std::size_t> latency_frames(AttentionKind kind, std::size_t look_ahead,
                                          std::size_t n_layers);
std::optional<std::size_t> latency_frames(const AttentionMode& mode, std::size_t n_layers);

struct LatencyReport {
  std::optional<std::size_t> frames;
  std::optional<double> seconds;  // frames * frame_duration
};

LatencyReport latency_report(AttentionKind kind, std::size_t look_ahead, std::size_t n_layers,
                             double frame_duration = kDefaultFrameDuration);

class StreamState {
 public:
  StreamState(StreamState&&) noexcept;
  StreamState& operator=(StreamState&&) noexcept;
  ~StreamState();

  // Ingests one frame; returns the output for frame ingested-1-latency once
  // its look-ahead is complete. Throws ArgumentError on a dimension mismatch
  // and StateError after flush.
  std::optional<RealVector> push(std::span<const double> frame);
  // Remaining outputs, computed with windows truncated at the last frame.
  // The stream is closed afterwards; a second flush returns nothing.
  std::vector<RealVector> flush();

  const AttentionMode& mode() const;
  std::size_t n_layers() const;
  std::size_t model_dim() const;
  std::size_t ingested() const;
  std::size_t emitted() const;
  bool finished() const;
  std::optional<std::size_t> declared_latency_frames() const;
  double frame_duration() const;
  LatencyReport latency() const;

  // Frames (times) whose state a layer holds right now / at most so far.
  // LLSA counts every held channel slot.
  std::size_t retained_frames(std::size_t layer) const;
  std::size_t peak_retained_frames(std::size_t layer) const;

 private:
  struct Impl;
  explicit StreamState(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;

  friend StreamState stream_init(const EncoderStack&, const AttentionMode&, double);
};

// Throws ConfigError on an invalid stack, mode or frame duration.
StreamState stream_init(const EncoderStack& stack, const AttentionMode& mode,
                        double frame_duration = kDefaultFrameDuration);
std::optional<RealVector> stream_push(StreamState& state, std::span<const double> frame);
std::vector<RealVector> stream_flush(StreamState& state);

// Runs the offline stack on a seeded N(0,1) signal and on a copy whose frame
// perturb_index moves by epsilon times a seeded N(0,1) direction. Returns the first
// output time (designated channel) differing by more than 1e-12, or nullopt.
std::optional<std::size_t> causality_probe(const EncoderStack& stack, const AttentionMode& mode,
                                           std::size_t n_frames, std::size_t perturb_index,
                                           double epsilon = 1e-3, std::uint64_t seed = 0);

}  // namespace bsattn
