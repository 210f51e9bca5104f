#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace xgap {

// Seeded random source. Gaussian sampling is a hand-rolled Box-Muller so the
// stream does not depend on the standard library's distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    int uniform_int(int n);

    double gaussian();

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Derives an independent stream seed from a global seed and a stage name,
// so reseeding one stage never perturbs the others.
std::uint64_t substream(std::uint64_t seed, std::string_view name);

// FNV-1a over arbitrary bytes; also used for parameter digests.
std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 14695981039346656037ull);

}  // namespace xgap
