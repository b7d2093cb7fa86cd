#include "bsattn/accounting.hpp"

#include <algorithm>

namespace bsattn {

AllocationAccounting& AllocationAccounting::local() {
  thread_local AllocationAccounting instance;
  return instance;
}

void AllocationAccounting::on_allocate(std::string_view label, std::size_t bytes) {
  if (!enabled_) return;
  auto it = counters_.find(label);
  if (it == counters_.end()) it = counters_.emplace(std::string(label), Counter{}).first;
  it->second.current += bytes;
  it->second.peak = std::max(it->second.peak, it->second.current);
  ++it->second.allocations;
}

void AllocationAccounting::on_release(std::string_view label, std::size_t bytes) {
  auto it = counters_.find(label);
  // A reset() between allocation and release drops the entry; nothing to undo.
  if (it == counters_.end()) return;
  it->second.current -= std::min(bytes, it->second.current);
}

AllocationAccounting::Counter AllocationAccounting::counter(std::string_view label) const {
  auto it = counters_.find(label);
  return it == counters_.end() ? Counter{} : it->second;
}

}  // namespace bsattn
