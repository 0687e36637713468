#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace omoq {

// Seeded random stream. Every draw is derived from std::mt19937 output with
// our own mappings so that results are identical across standard libraries;
// std::uniform_real_distribution and friends are implementation-defined and
// would break byte-level reproducibility of training runs.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

    // Independent stream for (seed, epoch, purpose) triples.
    static Rng stream(uint32_t seed, uint32_t epoch, uint32_t purpose) {
        std::seed_seq seq{seed, epoch, purpose};
        Rng r(0);
        r.eng_.seed(seq);
        r.has_spare_ = false;
        return r;
    }

    uint32_t next_u32() { return eng_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u32()) * (1.0 / 4294967296.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n), n >= 1
    size_t uniform_index(size_t n) {
        return static_cast<size_t>((static_cast<uint64_t>(next_u32()) * n) >> 32);
    }

    // Standard normal via Box-Muller on mt19937 output.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Fisher-Yates with our own index draw (std::shuffle is unspecified).
    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<size_t>(last - first);
        for (size_t i = n; i > 1; --i) {
            size_t j = uniform_index(i);
            std::swap(*(first + static_cast<ptrdiff_t>(i - 1)),
                      *(first + static_cast<ptrdiff_t>(j)));
        }
    }

private:
    std::mt19937 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace omoq
