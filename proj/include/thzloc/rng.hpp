// SPDX-License-Identifier: Apache-2.0
// Deterministic random streams. Every stochastic stream is derived from a master seed
// and a label, so results do not depend on evaluation order or thread count.
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <string_view>

namespace thzloc {

// FNV-1a over the label, mixed with the seed by splitmix64.
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : label) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::uint64_t z = seed ^ (h + 0x9e3779b97f4a7c15ULL + (index << 6) + (index >> 2));
    z += index * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// mt19937_64 with portable uniform/normal draws (the std distributions are not
// specified bit-exactly across standard libraries).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    Rng(std::uint64_t seed, std::string_view label, std::uint64_t index = 0)
        : eng_(stream_seed(seed, label, index)) {}

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    // circularly symmetric complex Gaussian with total variance var
    std::complex<double> cnormal(double var) {
        double s = std::sqrt(var / 2.0);
        double re = normal();
        double im = normal();
        return {s * re, s * im};
    }

    // unit-modulus complex number with uniform phase
    std::complex<double> unit_phasor() {
        double ph = 2.0 * M_PI * uniform();
        return {std::cos(ph), std::sin(ph)};
    }

    std::mt19937_64 &engine() { return eng_; }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace thzloc
