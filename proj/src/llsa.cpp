#include "bsattn/llsa.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bsattn/detail/kernels.hpp"
#include "bsattn/numerics.hpp"

namespace bsattn {

ChanneledSequence::ChanneledSequence(std::size_t n_frames, std::size_t n_channels, std::size_t dim)
    : n_(n_frames), c_(n_channels), d_(dim), data_(n_frames * n_channels * dim, 0.0) {
  if (n_frames == 0 || n_channels == 0 || dim == 0)
    throw ArgumentError("ChanneledSequence: all extents must be >= 1");
}

double max_abs_diff(const ChanneledSequence& a, const ChanneledSequence& b) {
  if (!a.same_shape(b)) throw ArgumentError("max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i)
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  return worst;
}

std::uint64_t fingerprint(const ChanneledSequence& seq, std::uint64_t hash) {
  const std::uint64_t shape[3] = {seq.n_frames(), seq.n_channels(), seq.dim()};
  hash = fnv1a(hash, shape, sizeof(shape));
  return fnv1a(hash, seq.values().data(), seq.values().size() * sizeof(double));
}

void LlsaInputs::validate(BandSpec band) const {
  if (queries.empty() || keys.empty() || values.empty())
    throw ArgumentError("LlsaInputs: unset sequence");
  if (queries.n_frames() != keys.n_frames() || queries.n_frames() != values.n_frames())
    throw ArgumentError("LlsaInputs: queries, keys and values differ in n_frames");
  if (queries.dim() != keys.dim()) throw ArgumentError("LlsaInputs: queries.dim != keys.dim");
  const std::size_t want = band.look_ahead + 1;
  if (queries.n_channels() != want || keys.n_channels() != want || values.n_channels() != want)
    throw ArgumentError("LlsaInputs: expected " + std::to_string(want) +
                        " channels for look_ahead " + std::to_string(band.look_ahead));
  for (const auto* seq : {&queries, &keys, &values})
    for (double v : seq->values())
      if (!std::isfinite(v)) throw ArgumentError("LlsaInputs: non-finite entry");
}

ChanneledSequence channelize(const FrameSequence& x, std::size_t look_ahead) {
  if (x.empty()) throw ArgumentError("channelize: unset sequence");
  ChanneledSequence out(x.n_frames(), look_ahead + 1, x.dim());
  for (std::size_t t = 0; t < x.n_frames(); ++t)
    for (std::size_t c = 0; c <= look_ahead; ++c) std::ranges::copy(x.row(t), out.at(t, c).begin());
  return out;
}

FrameSequence select_output_channel(const ChanneledSequence& y, std::size_t c) {
  if (y.empty()) throw ArgumentError("select_output_channel: unset sequence");
  if (c >= y.n_channels())
    throw ArgumentError("select_output_channel: channel " + std::to_string(c) +
                        " out of range (n_channels " + std::to_string(y.n_channels()) + ")");
  FrameSequence out(y.n_frames(), y.dim());
  for (std::size_t t = 0; t < y.n_frames(); ++t) std::ranges::copy(y.at(t, c), out.row(t).begin());
  return out;
}

LlsaSlot llsa_window_slot(std::size_t t, std::size_t c, std::size_t column, BandSpec band) {
  const auto a = static_cast<std::ptrdiff_t>(band.look_ahead);
  const auto b = static_cast<std::ptrdiff_t>(band.look_back);
  const auto j = static_cast<std::ptrdiff_t>(column);
  const std::ptrdiff_t anchor = static_cast<std::ptrdiff_t>(t) - (a - static_cast<std::ptrdiff_t>(c));
  const std::ptrdiff_t time = anchor - b + j;
  const std::size_t channel = j <= b ? band.look_ahead : static_cast<std::size_t>(a - (j - b));
  return {time, channel};
}

LlsaScores::LlsaScores(std::size_t n_frames, BandSpec band, std::uint64_t input_fingerprint)
    : n_(n_frames),
      band_(band),
      fingerprint_(input_fingerprint),
      probs_(labels::kLlsaScores, llsa_score_elements(n_frames, band)),
      lo_(n_frames * (band.look_ahead + 1)),
      hi_(n_frames * (band.look_ahead + 1)) {
  const auto n = static_cast<std::ptrdiff_t>(n_frames);
  const auto a = static_cast<std::ptrdiff_t>(band.look_ahead);
  const auto b = static_cast<std::ptrdiff_t>(band.look_back);
  const auto w = static_cast<std::ptrdiff_t>(band.receptive_field());
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    for (std::ptrdiff_t c = 0; c <= a; ++c) {
      const std::ptrdiff_t anchor = t - (a - c);
      const std::size_t idx = static_cast<std::size_t>(t * (a + 1) + c);
      lo_[idx] = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, b - anchor));
      hi_[idx] = static_cast<std::size_t>(std::min(w, n - anchor + b));
      evaluations_ += hi_[idx] - lo_[idx];
    }
  }
}

LlsaForwardResult llsa_forward(const LlsaInputs& inp, BandSpec band) {
  inp.validate(band);
  const std::size_t n = inp.n_frames();
  const std::size_t channels = band.look_ahead + 1;
  const std::size_t dk = inp.queries.dim();
  const std::size_t dv = inp.values.dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  std::uint64_t fp = fingerprint(inp.queries);
  fp = fingerprint(inp.keys, fp);
  fp = fingerprint(inp.values, fp);
  LlsaScores scores(n, band, fp);
  ChanneledSequence out(n, channels, dv);

  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t lo = scores.valid_lo(t, c);
      const std::size_t hi = scores.valid_hi(t, c);
      auto z = scores.row(t, c);
      auto q = inp.queries.at(t, c);
      for (std::size_t j = lo; j < hi; ++j) {
        const LlsaSlot s = llsa_window_slot(t, c, j, band);
        z[j] = detail::dot_sequential(q.data(), inp.keys.at(s.time, s.channel).data(), dk) * scale;
      }
      detail::softmax_inplace(z.subspan(lo, hi - lo));
      auto y = out.at(t, c);
      for (std::size_t j = lo; j < hi; ++j) {
        const LlsaSlot s = llsa_window_slot(t, c, j, band);
        detail::axpy(z[j], inp.values.at(s.time, s.channel).data(), y.data(), dv);
      }
    }
  }
  return {std::move(out), std::move(scores)};
}

ChanneledGrad llsa_backward(const LlsaInputs& inp, BandSpec band, const LlsaScores& cache,
                            const ChanneledSequence& d_output) {
  inp.validate(band);
  const std::size_t n = inp.n_frames();
  const std::size_t channels = band.look_ahead + 1;
  const std::size_t dk = inp.queries.dim();
  const std::size_t dv = inp.values.dim();
  if (cache.n_frames() != n || cache.band() != band)
    throw StateError("llsa_backward: cache was produced for a different shape or band");
  std::uint64_t fp = fingerprint(inp.queries);
  fp = fingerprint(inp.keys, fp);
  fp = fingerprint(inp.values, fp);
  if (cache.input_fingerprint() != fp)
    throw StateError("llsa_backward: cache was produced from different inputs");
  if (d_output.n_frames() != n || d_output.n_channels() != channels || d_output.dim() != dv)
    throw ArgumentError("llsa_backward: d_output shape mismatch");

  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  ChanneledGrad g{ChanneledSequence(n, channels, dk), ChanneledSequence(n, channels, dk),
                  ChanneledSequence(n, channels, dv)};
  std::vector<double> dz(band.receptive_field());

  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t lo = cache.valid_lo(t, c);
      const std::size_t hi = cache.valid_hi(t, c);
      auto a = cache.row(t, c);
      auto dy = d_output.at(t, c);
      for (std::size_t j = lo; j < hi; ++j) {
        const LlsaSlot s = llsa_window_slot(t, c, j, band);
        dz[j] = detail::dot_sequential(dy.data(), inp.values.at(s.time, s.channel).data(), dv);
        detail::axpy(a[j], dy.data(), g.d_values.at(s.time, s.channel).data(), dv);
      }
      std::span<double> dz_valid(dz.data() + lo, hi - lo);
      detail::softmax_vjp_into(a.subspan(lo, hi - lo), dz_valid, dz_valid);
      auto q = inp.queries.at(t, c);
      auto dq = g.d_queries.at(t, c);
      for (std::size_t j = lo; j < hi; ++j) {
        const LlsaSlot s = llsa_window_slot(t, c, j, band);
        const double w = dz[j] * scale;
        detail::axpy(w, inp.keys.at(s.time, s.channel).data(), dq.data(), dk);
        detail::axpy(w, q.data(), g.d_keys.at(s.time, s.channel).data(), dk);
      }
    }
  }
  return g;
}

}  // namespace bsattn
