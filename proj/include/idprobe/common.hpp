#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace idprobe {

/// Row-major matrix, one sample per row.
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IndexMatrix =
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Error hierarchy. The CLI maps these onto exit codes: UsageError -> 1,
// DataFormatError -> 2, NumericalError -> 3.
// ---------------------------------------------------------------------------

struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataFormatError : std::runtime_error {
    explicit DataFormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Rng: xoshiro256++ seeded through splitmix64.
//
// The integer stream is defined purely in terms of 64-bit arithmetic, so the
// same seed yields the same stream on every platform. Real-valued variates
// are derived from it with plain IEEE operations (uniform) and Box-Muller
// (gaussian); those are identical wherever libm's log/cos agree.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    /// Derive an independent stream, e.g. one per worker or per trial.
    Rng spawn(std::uint64_t stream) const {
        std::uint64_t sm = state_[0] ^ (0x6a09e667f3bcc909ULL + stream);
        Rng child(0);
        for (auto& word : child.state_) word = splitmix64(sm);
        return child;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; one spare variate is cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    /// Unbiased integer in [0, n) by rejection sampling.
    std::uint64_t bounded(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[bounded(i)]);
        }
    }

    /// Sample `count` distinct indices from [0, n), in random order.
    std::vector<int> sample_without_replacement(int n, int count) {
        if (count > n) count = n;
        std::vector<int> pool(n);
        for (int i = 0; i < n; ++i) pool[i] = i;
        for (int i = 0; i < count; ++i) {
            const int j = i + int(bounded(std::uint64_t(n - i)));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(count);
        return pool;
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4] = {};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Minimal fork-join helpers. Work is split into contiguous chunks, one per
// worker; every index writes only its own output slot, so results do not
// depend on scheduling.
// ---------------------------------------------------------------------------

inline int default_thread_count() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : int(hw);
}

/// Calls fn(chunk_index, begin, end) on up to n_threads workers.
template <typename Fn>
void parallel_chunks(std::int64_t n, int n_threads, Fn&& fn) {
    if (n <= 0) return;
    if (n_threads < 1) n_threads = 1;
    const int chunks = int(std::min<std::int64_t>(n, n_threads));
    if (chunks == 1) {
        fn(0, std::int64_t(0), n);
        return;
    }
    std::vector<std::thread> workers;
    workers.reserve(chunks);
    const std::int64_t step = (n + chunks - 1) / chunks;
    for (int c = 0; c < chunks; ++c) {
        const std::int64_t begin = c * step;
        const std::int64_t end = std::min(n, begin + step);
        workers.emplace_back([&fn, c, begin, end] { fn(c, begin, end); });
    }
    for (auto& worker : workers) worker.join();
}

/// Calls fn(i) for i in [0, n) across up to n_threads workers.
template <typename Fn>
void parallel_for(std::int64_t n, int n_threads, Fn&& fn) {
    parallel_chunks(n, n_threads,
                    [&fn](int, std::int64_t begin, std::int64_t end) {
                        for (std::int64_t i = begin; i < end; ++i) fn(i);
                    });
}

}  // namespace idprobe
