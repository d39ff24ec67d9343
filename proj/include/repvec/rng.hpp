#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace repvec {

// splitmix64 finalizer; used to derive independent streams from (seed, counter).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t counter = 0)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (counter + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seeded generator with platform-independent draws. The std distributions
/// are implementation-defined, so uniform/int draws are derived directly
/// from the 64-bit engine output.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : _engine(mix_seed(seed)) {}

    std::uint64_t next() { return _engine(); }

    // [0, 1) with 53 bits of precision
    double uniform() { return static_cast<double>(_engine() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n); Lemire's multiply-shift with rejection
    std::uint64_t below(std::uint64_t n)
    {
        if(n == 0)
            return 0;
        std::uint64_t x = _engine();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto low = static_cast<std::uint64_t>(m);
        if(low < n) {
            const std::uint64_t threshold = -n % n;
            while(low < threshold) {
                x = _engine();
                m = static_cast<__uint128_t>(x) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; one value per call
    double normal()
    {
        double u1 = uniform();
        while(u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <class It>
    void shuffle(It first, It last)
    {
        const auto n = static_cast<std::uint64_t>(last - first);
        for(std::uint64_t i = n; i > 1; --i) {
            const auto j = below(i);
            std::iter_swap(first + (i - 1), first + j);
        }
    }

private:
    std::mt19937_64 _engine;
};

} // namespace repvec
