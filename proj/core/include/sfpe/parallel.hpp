#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

namespace sfpe {

struct ExecContext {
    int threads = 1;
};

/// Streaming mean/variance (Welford). merge() uses Chan's update, so a fixed
/// chunk partition reduced in chunk order yields bit-identical results for
/// any thread count.
struct RunningStat {
    std::uint64_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }

    void merge(const RunningStat& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        const double na = static_cast<double>(n);
        const double nb = static_cast<double>(o.n);
        const double delta = o.mean - mean;
        mean += delta * nb / (na + nb);
        m2 += o.m2 + delta * delta * na * nb / (na + nb);
        n += o.n;
    }

    double variance() const { return n >= 2 ? m2 / static_cast<double>(n - 1) : 0.0; }

    /// Standard error of the mean; NaN when undefined (fewer than 2 samples).
    double std_error() const {
        if (n < 2) return std::numeric_limits<double>::quiet_NaN();
        return std::sqrt(variance() / static_cast<double>(n));
    }
};

/// Runs fn(chunk_index, begin, end) over a fixed partition of [0, n) into
/// chunks of size `chunk_size`. The partition depends only on (n, chunk_size),
/// never on the worker count, so per-chunk results merged in chunk order are
/// reproducible across thread counts. Exceptions propagate to the caller.
inline void for_each_chunk(std::size_t n, std::size_t chunk_size, int threads,
                           const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    if (chunk_size == 0) chunk_size = 1;
    const std::size_t n_chunks = (n + chunk_size - 1) / chunk_size;
    if (threads <= 1 || n_chunks == 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) {
            fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (true) {
            const std::size_t c = next.fetch_add(1, std::memory_order_relaxed);
            if (c >= n_chunks) return;
            try {
                fn(c, c * chunk_size, std::min(n, (c + 1) * chunk_size));
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };

    const std::size_t n_workers =
        std::min<std::size_t>(static_cast<std::size_t>(threads), n_chunks);
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace sfpe
