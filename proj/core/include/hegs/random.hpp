#pragma once

#include <cmath>
#include <cstdint>

namespace hegs {

// Counter-free splitmix64 stream. All randomness in the project derives from
// this generator so that runs are reproducible across platforms; the standard
// library distributions are implementation-defined and are deliberately not
// used.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    double normal() {
        // Box-Muller without a cached spare: two draws per sample keeps the
        // stream position independent of call history.
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // Derives an independent child seed, used for per-sample / per-purpose
    // streams (worker count then never changes outputs).
    static uint64_t derive(uint64_t seed, uint64_t stream, uint64_t index = 0) {
        Rng r(seed ^ (0x6a09e667f3bcc909ULL + stream * 0x3c6ef372fe94f82bULL));
        r.next_u64();
        uint64_t base = r.next_u64();
        Rng r2(base + index * 0x9e3779b97f4a7c15ULL);
        r2.next_u64();
        return r2.next_u64();
    }

private:
    uint64_t state_;
};

} // namespace hegs
