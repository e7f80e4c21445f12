#pragma once

#include <cstddef>
#include <functional>

namespace mkc {

/// Worker count used by replicate loops; 0 or 1 runs inline.
void set_default_threads(unsigned n);
unsigned default_threads();

/// Calls fn(i) for i in [0, n), splitting the range into contiguous chunks across
/// `threads` workers. Each index is visited exactly once; callers keep results
/// independent of scheduling by writing only to slot i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned threads = 0);

}  // namespace mkc
