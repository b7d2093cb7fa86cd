#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bsattn {

// Byte counters for score buffers and stream state, keyed by label.
//
// One instance per thread (see local()), so counters stay exact when
// benchmark grid points run on worker threads. Counting only happens while
// enabled; buffers created while disabled are never charged or released.
class AllocationAccounting {
 public:
  struct Counter {
    std::size_t current = 0;
    std::size_t peak = 0;
    std::size_t allocations = 0;
  };

  static AllocationAccounting& local();

  void enable() { enabled_ = true; }
  void disable() { enabled_ = false; }
  bool enabled() const noexcept { return enabled_; }
  void reset() { counters_.clear(); }

  void on_allocate(std::string_view label, std::size_t bytes);
  void on_release(std::string_view label, std::size_t bytes);

  Counter counter(std::string_view label) const;
  std::size_t peak_bytes(std::string_view label) const { return counter(label).peak; }
  std::size_t current_bytes(std::string_view label) const { return counter(label).current; }
  const std::map<std::string, Counter, std::less<>>& counters() const { return counters_; }

 private:
  bool enabled_ = false;
  std::map<std::string, Counter, std::less<>> counters_;
};

// Enables and resets the calling thread's accounting for its lifetime.
class ScopedAccounting {
 public:
  ScopedAccounting() : acct_(AllocationAccounting::local()), was_enabled_(acct_.enabled()) {
    acct_.reset();
    acct_.enable();
  }
  ~ScopedAccounting() {
    if (!was_enabled_) acct_.disable();
  }
  ScopedAccounting(const ScopedAccounting&) = delete;
  ScopedAccounting& operator=(const ScopedAccounting&) = delete;

  const AllocationAccounting& accounting() const { return acct_; }

 private:
  AllocationAccounting& acct_;
  bool was_enabled_;
};

namespace labels {
inline constexpr std::string_view kDenseScores = "dense_scores";
inline constexpr std::string_view kBandedScores = "banded_scores";
inline constexpr std::string_view kBandedGradScores = "banded_grad_scores";
inline constexpr std::string_view kLlsaScores = "llsa_scores";
inline constexpr std::string_view kStreamState = "stream_state";
}  // namespace labels

// Heap array whose byte size is charged to a label on the owning thread's
// accounting while it lives. Move-only.
template <typename T>
class TrackedBuffer {
 public:
  TrackedBuffer() = default;
  TrackedBuffer(std::string_view label, std::size_t count, T fill = T(0))
      : label_(label), data_(count, fill) {
    auto& acct = AllocationAccounting::local();
    if (acct.enabled()) {
      owner_ = &acct;
      acct.on_allocate(label_, bytes());
    }
  }
  ~TrackedBuffer() { release(); }

  TrackedBuffer(TrackedBuffer&& other) noexcept
      : label_(std::move(other.label_)), data_(std::move(other.data_)), owner_(other.owner_) {
    other.owner_ = nullptr;
    other.data_.clear();
  }
  TrackedBuffer& operator=(TrackedBuffer&& other) noexcept {
    if (this != &other) {
      release();
      label_ = std::move(other.label_);
      data_ = std::move(other.data_);
      owner_ = other.owner_;
      other.owner_ = nullptr;
      other.data_.clear();
    }
    return *this;
  }
  TrackedBuffer(const TrackedBuffer&) = delete;
  TrackedBuffer& operator=(const TrackedBuffer&) = delete;

  std::size_t size() const noexcept { return data_.size(); }
  std::size_t bytes() const noexcept { return data_.size() * sizeof(T); }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

 private:
  void release() {
    if (owner_ != nullptr) {
      owner_->on_release(label_, bytes());
      owner_ = nullptr;
    }
  }

  std::string label_;
  std::vector<T> data_;
  AllocationAccounting* owner_ = nullptr;
};

}  // namespace bsattn
