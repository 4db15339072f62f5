#ifndef SIMFUSE_PARALLEL_HPP
#define SIMFUSE_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace simfuse {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Work items
/// must be independent and write only to their own output slots, which
/// keeps results identical for any thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

} // namespace simfuse

#endif
