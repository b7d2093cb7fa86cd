#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bsattn/errors.hpp"

namespace bsattn {

// Time-major N_T x d matrix. A default-constructed sequence is "unset"
// (0 x 0); every public kernel rejects it.
template <typename T>
class BasicFrameSequence {
 public:
  using value_type = T;

  BasicFrameSequence() = default;
  BasicFrameSequence(std::size_t n_frames, std::size_t dim)
      : n_frames_(n_frames), dim_(dim), data_(n_frames * dim, T(0)) {
    check_shape();
  }
  BasicFrameSequence(std::size_t n_frames, std::size_t dim, std::vector<T> data)
      : n_frames_(n_frames), dim_(dim), data_(std::move(data)) {
    check_shape();
    if (data_.size() != n_frames_ * dim_)
      throw ArgumentError("FrameSequence: storage holds " + std::to_string(data_.size()) +
                          " values, expected " + std::to_string(n_frames_ * dim_));
  }

  std::size_t n_frames() const noexcept { return n_frames_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return n_frames_ == 0; }

  std::span<T> row(std::size_t t) { return {data_.data() + t * dim_, dim_}; }
  std::span<const T> row(std::size_t t) const { return {data_.data() + t * dim_, dim_}; }
  T& operator()(std::size_t t, std::size_t i) { return data_[t * dim_ + i]; }
  const T& operator()(std::size_t t, std::size_t i) const { return data_[t * dim_ + i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(const BasicFrameSequence& other) const {
    return n_frames_ == other.n_frames_ && dim_ == other.dim_;
  }

 private:
  void check_shape() const {
    if (n_frames_ == 0 || dim_ == 0)
      throw ArgumentError("FrameSequence: n_frames and dim must be >= 1");
  }

  std::size_t n_frames_ = 0;
  std::size_t dim_ = 0;
  std::vector<T> data_;
};

using FrameSequence = BasicFrameSequence<double>;

template <typename T>
struct BasicAttentionInputs {
  BasicFrameSequence<T> queries;
  BasicFrameSequence<T> keys;
  BasicFrameSequence<T> values;

  std::size_t n_frames() const noexcept { return queries.n_frames(); }
  std::size_t key_dim() const noexcept { return queries.dim(); }
  std::size_t value_dim() const noexcept { return values.dim(); }

  // Throws ArgumentError unless queries/keys/values share n_frames and
  // queries.dim == keys.dim.
  void validate() const {
    if (queries.empty() || keys.empty() || values.empty())
      throw ArgumentError("AttentionInputs: unset sequence");
    if (queries.n_frames() != keys.n_frames() || queries.n_frames() != values.n_frames())
      throw ArgumentError("AttentionInputs: queries, keys and values differ in n_frames");
    if (queries.dim() != keys.dim())
      throw ArgumentError("AttentionInputs: queries.dim != keys.dim");
    for (const auto* seq : {&queries, &keys, &values}) {
      for (T v : seq->values()) {
        if (!std::isfinite(v)) throw ArgumentError("AttentionInputs: non-finite entry");
      }
    }
  }
};

using AttentionInputs = BasicAttentionInputs<double>;

struct GradTriple {
  FrameSequence d_queries;
  FrameSequence d_keys;
  FrameSequence d_values;
};

struct BandSpec {
  std::size_t look_back = 0;   // B
  std::size_t look_ahead = 0;  // A

  constexpr std::size_t receptive_field() const noexcept { return look_back + look_ahead + 1; }
  bool operator==(const BandSpec&) const = default;
};

// FNV-1a over shapes and raw bytes; ties caches to the inputs they came from.
std::uint64_t fnv1a(std::uint64_t hash, const void* data, std::size_t bytes);
inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

template <typename T>
std::uint64_t fingerprint(const BasicFrameSequence<T>& seq, std::uint64_t hash = kFnvOffset) {
  const std::uint64_t shape[2] = {seq.n_frames(), seq.dim()};
  hash = fnv1a(hash, shape, sizeof(shape));
  return fnv1a(hash, seq.values().data(), seq.values().size() * sizeof(T));
}

template <typename T>
std::uint64_t fingerprint(const BasicAttentionInputs<T>& inp) {
  std::uint64_t h = fingerprint(inp.queries);
  h = fingerprint(inp.keys, h);
  return fingerprint(inp.values, h);
}

// Largest |a - b| over two equally shaped sequences.
template <typename T>
double max_abs_diff(const BasicFrameSequence<T>& a, const BasicFrameSequence<T>& b) {
  if (!a.same_shape(b)) throw ArgumentError("max_abs_diff: shape mismatch");
  double worst = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    worst = d < 0 ? (-d > worst ? -d : worst) : (d > worst ? d : worst);
  }
  return worst;
}

}  // namespace bsattn
