#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace delayh2 {

/// Worker count: the DELAY_H2_THREADS environment variable if set and
/// positive, otherwise the hardware concurrency. set_thread_count() overrides
/// both (0 restores the default).
unsigned thread_count();
void set_thread_count(unsigned n);

/// Calls body(i, i + 1) for every i in [0, n), spread over the worker pool.
/// The first exception thrown by any call is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

/// Fixed chunk layout for reductions. It depends only on n, never on the
/// thread count, so summing per-chunk partials in chunk order gives
/// bit-identical results for any number of threads.
std::size_t chunk_count(std::size_t n);
std::size_t chunk_begin(std::size_t n, std::size_t chunk);

/// Ordered reduction: partial(begin, end) per chunk, summed in chunk order.
template <class T, class F>
T parallel_sum(std::size_t n, F partial, T zero = T{}) {
    const std::size_t chunks = chunk_count(n);
    std::vector<T> parts(chunks, zero);
    parallel_for(chunks, [&](std::size_t c0, std::size_t c1) {
        for (std::size_t c = c0; c < c1; ++c) parts[c] = partial(chunk_begin(n, c), chunk_begin(n, c + 1));
    });
    T total = zero;
    for (const auto& p : parts) total += p;
    return total;
}

}  // namespace delayh2
