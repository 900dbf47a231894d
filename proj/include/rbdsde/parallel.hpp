#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace rbdsde {

/// Worker cap used by every path-parallel loop. Results never depend on it:
/// work is split into fixed-size blocks and partial results are combined in
/// block order.
inline std::atomic<unsigned>& thread_cap() {
    static std::atomic<unsigned> cap{1};
    return cap;
}

inline void set_thread_cap(unsigned n) { thread_cap().store(std::max(1u, n)); }

/// Block size for path-parallel reductions. Fixed so that summation order is
/// identical for any thread count.
inline constexpr std::size_t kPathBlock = 2048;

inline std::size_t num_blocks(std::size_t total, std::size_t block = kPathBlock) {
    return (total + block - 1) / block;
}

/// Calls fn(block, begin, end) for every block of [0, total). Blocks are
/// distributed dynamically over at most thread_cap() threads.
template <typename Fn>
void for_each_block(std::size_t total, Fn&& fn, std::size_t block = kPathBlock) {
    const std::size_t blocks = num_blocks(total, block);
    const unsigned workers =
        static_cast<unsigned>(std::min<std::size_t>(thread_cap().load(), blocks));
    auto run = [&](std::size_t b) {
        const std::size_t begin = b * block;
        fn(b, begin, std::min(total, begin + block));
    };
    if (workers <= 1) {
        for (std::size_t b = 0; b < blocks; ++b) run(b);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t b = next++; b < blocks; b = next++) {
                try {
                    run(b);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

/// Pairwise (tree) combination of per-block partials; order depends only on
/// the number of partials.
template <typename T, typename Combine>
T pairwise_reduce(std::vector<T> parts, Combine&& combine) {
    if (parts.empty()) return T{};
    while (parts.size() > 1) {
        std::vector<T> next;
        next.reserve((parts.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < parts.size(); i += 2)
            next.push_back(combine(std::move(parts[i]), std::move(parts[i + 1])));
        if (parts.size() % 2 == 1) next.push_back(std::move(parts.back()));
        parts = std::move(next);
    }
    return std::move(parts.front());
}

/// Deterministic sum of per-path values: per-block sums, then pairwise.
template <typename Fn>
double block_sum(std::size_t total, Fn&& value_at) {
    std::vector<double> parts(num_blocks(total), 0.0);
    for_each_block(total, [&](std::size_t b, std::size_t begin, std::size_t end) {
        double s = 0.0;
        for (std::size_t k = begin; k < end; ++k) s += value_at(k);
        parts[b] = s;
    });
    return pairwise_reduce(std::move(parts), [](double a, double b) { return a + b; });
}

}  // namespace rbdsde
