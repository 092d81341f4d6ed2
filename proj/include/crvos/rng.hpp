#pragma once

#include <cstdint>
#include <random>

namespace crvos {

// Seedable generator with implementation-stable mappings (std distributions
// are not pinned across standard libraries).
class Rng {
public:
    explicit Rng(uint64_t seed) : g_(seed) {}

    uint64_t next() { return g_(); }

    // [0,1)
    double uniform() { return static_cast<double>(g_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive range
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(g_() % static_cast<uint64_t>(hi - lo + 1));
    }

    // derive an independent stream
    Rng fork() { return Rng(g_() ^ 0x9e3779b97f4a7c15ull); }

private:
    std::mt19937_64 g_;
};

}  // namespace crvos
