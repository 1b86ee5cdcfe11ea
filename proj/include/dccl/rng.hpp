#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace dccl {

// Deterministic random source. Wraps std::mt19937_64 (whose output sequence is
// fixed by the standard) and supplies its own value transforms, so that streams
// replay bit-exactly regardless of the standard library's distribution
// implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform01();
    }

    // Uniform integer in [0, n). Unbiased via rejection.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // Standard normal via Marsaglia's polar method (no trig calls).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform01() - 1.0;
            v = 2.0 * uniform01() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double k = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * k;
        has_spare_ = true;
        return u * k;
    }

    // Derives an independent child stream. Mixing uses splitmix64 so nearby
    // salts give unrelated seeds.
    Rng fork(std::uint64_t salt) {
        std::uint64_t x = engine_() ^ mix(salt);
        return Rng(mix(x));
    }

    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // Deterministic seed for a named sub-stream of a run, e.g. per-sample or
    // per-step workers.
    static std::uint64_t stream_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
        return mix(mix(root ^ mix(a)) ^ mix(b ^ 0x5851f42d4c957f2dULL));
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace dccl
