#include "xgap/rng.hpp"

#include <cmath>

#include "xgap/error.hpp"

namespace xgap {

int Rng::uniform_int(int n) {
    if (n <= 0) throw InvalidArgument("uniform_int: n must be positive");
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = ~0ull - ~0ull % static_cast<std::uint64_t>(n);
    std::uint64_t x;
    do {
        x = gen_();
    } while (x >= limit);
    return static_cast<int>(x % static_cast<std::uint64_t>(n));
}

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t substream(std::uint64_t seed, std::string_view name) {
    std::uint64_t h = fnv1a(name.data(), name.size());
    // splitmix64 finalizer mixes the seed into the name hash.
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull + h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace xgap
