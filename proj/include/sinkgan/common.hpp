#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace sinkgan {

// Error taxonomy. Callers are expected to catch by type; messages carry the
// offending shapes/values.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct SymmetryError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DegenerateDegreeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StalenessError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Seeded RNG with distributions implemented in-repo so that a (config, seed)
// pair reproduces bit-for-bit regardless of the standard library build.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // [0, 1)
    double uniform01() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    size_t uniform_index(size_t n) {
        return static_cast<size_t>(uniform01() * static_cast<double>(n)) % n;
    }

    // Box-Muller, no cached spare so the draw count is easy to reason about.
    double gaussian() {
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

private:
    std::mt19937_64 engine_;
};

// splitmix64 mix; used to derive independent named streams from one seed.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Global multiply counter: every gemm-like kernel adds m*n*k. Deterministic,
// used by the complexity bench and as the reproducible work column in CSVs.
namespace opcount {
uint64_t get();
void reset();
void add(uint64_t n);
}  // namespace opcount

}  // namespace sinkgan
