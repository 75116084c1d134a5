#pragma once

#include <cstdint>
#include <random>

namespace swan {

/// Seeded random stream. Equal (seed, stream id) pairs yield equal draw
/// sequences; `substream` derives independent child streams so that work
/// split across samples or threads stays reproducible.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream) {
        const std::uint64_t a = splitmix(seed);
        const std::uint64_t b = splitmix(stream ^ 0x9e3779b97f4a7c15ULL);
        std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
        engine_.seed(seq);
    }

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

    RngStream substream(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
        std::uint64_t h = splitmix(stream_ + 0x632be59bd9b4e019ULL);
        h = splitmix(h ^ a);
        h = splitmix(h ^ (b + 0x2545f4914f6cdd1dULL));
        h = splitmix(h ^ (c + 0x7f4a7c159e3779b9ULL));
        return RngStream(seed_, h);
    }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }
    /// Uniform integer in [lo, hi].
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

    std::mt19937_64& engine() noexcept { return engine_; }

    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::mt19937_64 engine_;
};

} // namespace swan
