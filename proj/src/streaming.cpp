#include "bsattn/streaming.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bsattn/accounting.hpp"
#include "bsattn/detail/kernels.hpp"
#include "bsattn/errors.hpp"

namespace bsattn {

std::optional<std::size_t> latency_frames(AttentionKind kind, std::size_t look_ahead,
                                          std::size_t n_layers) {
  if (n_layers == 0) throw ArgumentError("latency_frames: n_layers must be >= 1");
  switch (kind) {
    case AttentionKind::aa: return std::nullopt;
    case AttentionKind::maa:
    case AttentionKind::sa: return n_layers * look_ahead;
    case AttentionKind::llsa: return look_ahead;
  }
  return std::nullopt;
}

std::optional<std::size_t> latency_frames(const AttentionMode& mode, std::size_t n_layers) {
  mode.validate();
  return latency_frames(mode.kind, mode.band ? mode.band->look_ahead : 0, n_layers);
}

LatencyReport latency_report(AttentionKind kind, std::size_t look_ahead, std::size_t n_layers,
                             double frame_duration) {
  LatencyReport r;
  r.frames = latency_frames(kind, look_ahead, n_layers);
  if (r.frames) r.seconds = static_cast<double>(*r.frames) * frame_duration;
  return r;
}

namespace {

struct KvRef {
  const double* k;
  const double* v;
};

// One attention row over keys/values listed in time order, all heads.
// Same accumulation order as the offline kernels.
void attend_row(const BlockParams& p, const double* q, const std::vector<KvRef>& window,
                std::vector<double>& scores, std::span<double> merged) {
  const std::size_t hd = p.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::ranges::fill(merged, 0.0);
  scores.resize(window.size());
  for (std::size_t h = 0; h < p.n_heads; ++h) {
    const std::size_t off = h * hd;
    for (std::size_t j = 0; j < window.size(); ++j)
      scores[j] = detail::dot_sequential(q + off, window[j].k + off, hd) * scale;
    detail::softmax_inplace(std::span<double>(scores));
    for (std::size_t j = 0; j < window.size(); ++j)
      detail::axpy(scores[j], window[j].v + off, merged.data() + off, hd);
  }
}

class BandedLayer {
 public:
  BandedLayer(const BlockParams& p, BandSpec band)
      : p_(&p),
        band_(band),
        cap_(band.receptive_field()),
        pend_(band.look_ahead + 1),
        keys_(labels::kStreamState, cap_ * p.model_dim),
        values_(labels::kStreamState, cap_ * p.model_dim),
        xs_(labels::kStreamState, pend_ * p.model_dim),
        qs_(labels::kStreamState, pend_ * p.model_dim),
        merged_(p.model_dim) {}

  std::optional<RealVector> ingest(std::span<const double> x) {
    const std::size_t d = p_->model_dim;
    const std::size_t t = received_;
    block_project_row(*p_, x, row_);
    std::ranges::copy(row_.k, keys_.data() + (t % cap_) * d);
    std::ranges::copy(row_.v, values_.data() + (t % cap_) * d);
    std::ranges::copy(x, xs_.data() + (t % pend_) * d);
    std::ranges::copy(row_.q, qs_.data() + (t % pend_) * d);
    ++received_;
    peak_ = std::max(peak_, retained());
    if (t < band_.look_ahead) return std::nullopt;
    return output(t - band_.look_ahead, t);
  }

  std::vector<RealVector> flush() {
    std::vector<RealVector> out;
    while (produced_ < received_) out.push_back(output(produced_, received_ - 1));
    return out;
  }

  std::size_t retained() const { return std::min(received_, cap_); }
  std::size_t peak() const { return peak_; }

 private:
  RealVector output(std::size_t u, std::size_t last) {
    const std::size_t d = p_->model_dim;
    const std::size_t first = u >= band_.look_back ? u - band_.look_back : 0;
    window_.clear();
    for (std::size_t m = first; m <= last; ++m)
      window_.push_back({keys_.data() + (m % cap_) * d, values_.data() + (m % cap_) * d});
    attend_row(*p_, qs_.data() + (u % pend_) * d, window_, scores_, merged_);
    block_finish_row(*p_, std::span<const double>(xs_.data() + (u % pend_) * d, d), merged_, fin_);
    ++produced_;
    return fin_.out;
  }

  const BlockParams* p_;
  BandSpec band_;
  std::size_t cap_;
  std::size_t pend_;
  TrackedBuffer<double> keys_, values_, xs_, qs_;
  std::size_t received_ = 0;
  std::size_t produced_ = 0;
  std::size_t peak_ = 0;
  ProjectedRow row_;
  FinishedRow fin_;
  std::vector<KvRef> window_;
  std::vector<double> scores_;
  std::vector<double> merged_;
};

// LLSA layer working one diagonal r = t + c at a time. Every slot on a
// diagonal shares the window: channel A at times r-A-B .. r-A (kept in a
// ring), then slot (u, r-u) for u = r-A+1 .. r, which is on the diagonal.
class DiagonalLayer {
 public:
  DiagonalLayer(const BlockParams& p, BandSpec band)
      : p_(&p),
        band_(band),
        channels_(band.look_ahead + 1),
        hist_(band.look_back + 1),
        hist_k_(labels::kStreamState, hist_ * p.model_dim),
        hist_v_(labels::kStreamState, hist_ * p.model_dim),
        cur_x_(labels::kStreamState, channels_ * p.model_dim),
        cur_q_(labels::kStreamState, channels_ * p.model_dim),
        cur_k_(labels::kStreamState, channels_ * p.model_dim),
        cur_v_(labels::kStreamState, channels_ * p.model_dim),
        merged_(p.model_dim) {}

  // in[c] holds slot (r-c, c) for c in [c_lo, c_hi]; out gets the same slots.
  // last is the final valid time (r while streaming, N-1 when flushing).
  void diagonal(std::size_t r, std::size_t c_lo, std::size_t c_hi, std::size_t last,
                const std::vector<RealVector>& in, std::vector<RealVector>& out) {
    const std::size_t d = p_->model_dim;
    const std::size_t a = band_.look_ahead;
    for (std::size_t c = c_lo; c <= c_hi; ++c) {
      block_project_row(*p_, in[c], row_);
      std::ranges::copy(in[c], cur_x_.data() + c * d);
      std::ranges::copy(row_.q, cur_q_.data() + c * d);
      std::ranges::copy(row_.k, cur_k_.data() + c * d);
      std::ranges::copy(row_.v, cur_v_.data() + c * d);
    }
    const bool anchor_valid = c_hi == a;  // slot (r-A, A) exists
    if (anchor_valid) {
      const std::size_t s = r - a;
      std::copy_n(cur_k_.data() + a * d, d, hist_k_.data() + (s % hist_) * d);
      std::copy_n(cur_v_.data() + a * d, d, hist_v_.data() + (s % hist_) * d);
      ++stored_;
    }
    current_ = c_hi - c_lo + 1 - (anchor_valid ? 1 : 0);
    peak_ = std::max(peak_, retained());

    // Window times r-A-B .. min(r, last), clipped at 0.
    window_.clear();
    const std::size_t span_back = a + band_.look_back;
    const std::size_t first = r >= span_back ? r - span_back : 0;
    for (std::size_t u = first; u <= std::min(r, last); ++u) {
      if (u + a <= r) {
        window_.push_back({hist_k_.data() + (u % hist_) * d, hist_v_.data() + (u % hist_) * d});
      } else {
        const std::size_t ch = r - u;
        window_.push_back({cur_k_.data() + ch * d, cur_v_.data() + ch * d});
      }
    }
    for (std::size_t c = c_lo; c <= c_hi; ++c) {
      attend_row(*p_, cur_q_.data() + c * d, window_, scores_, merged_);
      block_finish_row(*p_, std::span<const double>(cur_x_.data() + c * d, d), merged_, fin_);
      out[c] = fin_.out;
    }
  }

  std::size_t retained() const { return std::min(stored_, hist_) + current_; }
  std::size_t peak() const { return peak_; }

 private:
  const BlockParams* p_;
  BandSpec band_;
  std::size_t channels_;
  std::size_t hist_;
  TrackedBuffer<double> hist_k_, hist_v_;
  TrackedBuffer<double> cur_x_, cur_q_, cur_k_, cur_v_;
  std::size_t stored_ = 0;
  std::size_t current_ = 0;
  std::size_t peak_ = 0;
  ProjectedRow row_;
  FinishedRow fin_;
  std::vector<KvRef> window_;
  std::vector<double> scores_;
  std::vector<double> merged_;
};

}  // namespace

struct StreamState::Impl {
  EncoderStack stack;
  AttentionMode mode;
  double frame_duration = kDefaultFrameDuration;
  std::optional<std::size_t> latency;
  std::size_t ingested = 0;
  std::size_t emitted = 0;
  bool finished = false;

  std::vector<BandedLayer> banded;
  std::vector<DiagonalLayer> diagonal;
  // LLSA: the last A+1 raw frames (positional encoding added).
  TrackedBuffer<double> raw;
  std::vector<RealVector> slots_a, slots_b;
  // AA: the whole stream.
  std::vector<RealVector> buffered;
  std::vector<std::size_t> peak_buffered;

  std::size_t d() const { return stack.model_dim(); }

  RealVector encode_input(std::span<const double> frame, std::size_t t) const {
    RealVector x(frame.begin(), frame.end());
    if (stack.positional_encoding) add_positional_encoding_row(t, x);
    return x;
  }

  // Runs diagonal r through every layer; returns the designated output if
  // slot (r-A, A) exists. n_valid is the number of frames known to exist.
  std::optional<RealVector> run_diagonal(std::size_t r, std::size_t n_valid) {
    const std::size_t a = mode.band->look_ahead;
    const std::size_t c_lo = r >= n_valid ? r - n_valid + 1 : 0;
    const std::size_t c_hi = std::min(r, a);
    if (c_lo > c_hi) return std::nullopt;
    const std::size_t cap = a + 1;
    for (std::size_t c = c_lo; c <= c_hi; ++c) {
      const std::size_t t = r - c;
      slots_a[c].assign(raw.data() + (t % cap) * d(), raw.data() + (t % cap + 1) * d());
    }
    const std::size_t last = std::min(r, n_valid - 1);
    for (auto& layer : diagonal) {
      layer.diagonal(r, c_lo, c_hi, last, slots_a, slots_b);
      std::swap(slots_a, slots_b);
    }
    if (c_hi != a) return std::nullopt;
    return slots_a[a];
  }
};

StreamState::StreamState(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
StreamState::StreamState(StreamState&&) noexcept = default;
StreamState& StreamState::operator=(StreamState&&) noexcept = default;
StreamState::~StreamState() = default;

StreamState stream_init(const EncoderStack& stack, const AttentionMode& mode, double frame_duration) {
  stack.validate();
  mode.validate();
  if (!(frame_duration > 0.0) || !std::isfinite(frame_duration))
    throw ConfigError("stream_init: frame_duration must be positive and finite");
  auto impl = std::make_unique<StreamState::Impl>();
  impl->stack = stack;
  impl->mode = mode;
  impl->frame_duration = frame_duration;
  impl->latency = latency_frames(mode, stack.n_layers());
  const std::size_t d = stack.model_dim();
  switch (mode.kind) {
    case AttentionKind::aa:
      impl->peak_buffered.assign(stack.n_layers(), 0);
      break;
    case AttentionKind::maa:
    case AttentionKind::sa:
      for (const auto& block : impl->stack.blocks) impl->banded.emplace_back(block, *mode.band);
      break;
    case AttentionKind::llsa: {
      const std::size_t channels = mode.n_channels();
      for (const auto& block : impl->stack.blocks) impl->diagonal.emplace_back(block, *mode.band);
      impl->raw = TrackedBuffer<double>(labels::kStreamState, channels * d);
      impl->slots_a.assign(channels, RealVector(d));
      impl->slots_b.assign(channels, RealVector(d));
      break;
    }
  }
  return StreamState(std::move(impl));
}

std::optional<RealVector> StreamState::push(std::span<const double> frame) {
  Impl& s = *impl_;
  if (s.finished) throw StateError("stream_push: stream already flushed");
  if (frame.size() != s.d())
    throw ArgumentError("stream_push: frame has dim " + std::to_string(frame.size()) +
                        ", model_dim is " + std::to_string(s.d()));
  for (double v : frame)
    if (!std::isfinite(v)) throw ArgumentError("stream_push: non-finite frame value");
  const std::size_t t = s.ingested++;
  std::optional<RealVector> out;
  switch (s.mode.kind) {
    case AttentionKind::aa:
      s.buffered.emplace_back(frame.begin(), frame.end());
      for (auto& p : s.peak_buffered) p = std::max(p, s.buffered.size());
      break;
    case AttentionKind::maa:
    case AttentionKind::sa: {
      std::optional<RealVector> x = s.encode_input(frame, t);
      for (auto& layer : s.banded) {
        x = layer.ingest(*x);
        if (!x) break;
      }
      out = std::move(x);
      break;
    }
    case AttentionKind::llsa: {
      const std::size_t cap = s.mode.n_channels();
      RealVector x = s.encode_input(frame, t);
      std::ranges::copy(x, s.raw.data() + (t % cap) * s.d());
      out = s.run_diagonal(t, t + 1);
      break;
    }
  }
  if (out) ++s.emitted;
  return out;
}

std::vector<RealVector> StreamState::flush() {
  Impl& s = *impl_;
  std::vector<RealVector> out;
  if (s.finished) return out;
  s.finished = true;
  switch (s.mode.kind) {
    case AttentionKind::aa: {
      if (s.buffered.empty()) break;
      FrameSequence x(s.buffered.size(), s.d());
      for (std::size_t t = 0; t < s.buffered.size(); ++t) std::ranges::copy(s.buffered[t], x.row(t).begin());
      auto res = stack_forward(s.stack, x, s.mode);
      for (std::size_t t = 0; t < x.n_frames(); ++t)
        out.emplace_back(res.output.row(t).begin(), res.output.row(t).end());
      s.buffered.clear();
      break;
    }
    case AttentionKind::maa:
    case AttentionKind::sa: {
      std::vector<RealVector> carry;
      for (auto& layer : s.banded) {
        std::vector<RealVector> next;
        for (const auto& x : carry)
          if (auto y = layer.ingest(x)) next.push_back(std::move(*y));
        for (auto& y : layer.flush()) next.push_back(std::move(y));
        carry = std::move(next);
      }
      out = std::move(carry);
      break;
    }
    case AttentionKind::llsa: {
      const std::size_t n = s.ingested;
      if (n == 0) break;
      const std::size_t a = s.mode.band->look_ahead;
      for (std::size_t r = n; r < n + a; ++r)
        if (auto y = s.run_diagonal(r, n)) out.push_back(std::move(*y));
      break;
    }
  }
  s.emitted += out.size();
  return out;
}

const AttentionMode& StreamState::mode() const { return impl_->mode; }
std::size_t StreamState::n_layers() const { return impl_->stack.n_layers(); }
std::size_t StreamState::model_dim() const { return impl_->d(); }
std::size_t StreamState::ingested() const { return impl_->ingested; }
std::size_t StreamState::emitted() const { return impl_->emitted; }
bool StreamState::finished() const { return impl_->finished; }
std::optional<std::size_t> StreamState::declared_latency_frames() const { return impl_->latency; }
double StreamState::frame_duration() const { return impl_->frame_duration; }

LatencyReport StreamState::latency() const {
  const auto& m = impl_->mode;
  return latency_report(m.kind, m.band ? m.band->look_ahead : 0, n_layers(), impl_->frame_duration);
}

std::size_t StreamState::retained_frames(std::size_t layer) const {
  const Impl& s = *impl_;
  if (layer >= n_layers()) throw ArgumentError("retained_frames: layer out of range");
  switch (s.mode.kind) {
    case AttentionKind::aa: return s.buffered.size();
    case AttentionKind::maa:
    case AttentionKind::sa: return s.banded[layer].retained();
    case AttentionKind::llsa: return s.diagonal[layer].retained();
  }
  return 0;
}

std::size_t StreamState::peak_retained_frames(std::size_t layer) const {
  const Impl& s = *impl_;
  if (layer >= n_layers()) throw ArgumentError("peak_retained_frames: layer out of range");
  switch (s.mode.kind) {
    case AttentionKind::aa: return s.peak_buffered[layer];
    case AttentionKind::maa:
    case AttentionKind::sa: return s.banded[layer].peak();
    case AttentionKind::llsa: return s.diagonal[layer].peak();
  }
  return 0;
}

std::optional<RealVector> stream_push(StreamState& state, std::span<const double> frame) {
  return state.push(frame);
}

std::vector<RealVector> stream_flush(StreamState& state) { return state.flush(); }

std::optional<std::size_t> causality_probe(const EncoderStack& stack, const AttentionMode& mode,
                                           std::size_t n_frames, std::size_t perturb_index,
                                           double epsilon, std::uint64_t seed) {
  if (perturb_index >= n_frames)
    throw ArgumentError("causality_probe: perturb_index " + std::to_string(perturb_index) +
                        " outside [0, " + std::to_string(n_frames) + ")");
  stack.validate();
  FrameSequence x(n_frames, stack.model_dim());
  Rng rng(seed);
  rng.fill_normal(x.storage(), 1.0);
  FrameSequence y = x;
  // A random direction; a constant shift would vanish in the first norm.
  for (double& v : y.row(perturb_index)) v += epsilon * rng.normal();
  const auto base = stack_forward(stack, x, mode).output;
  const auto moved = stack_forward(stack, y, mode).output;
  for (std::size_t t = 0; t < n_frames; ++t) {
    auto a = base.row(t);
    auto b = moved.row(t);
    for (std::size_t i = 0; i < a.size(); ++i)
      if (std::abs(a[i] - b[i]) > 1e-12) return t;
  }
  return std::nullopt;
}

}  // namespace bsattn
