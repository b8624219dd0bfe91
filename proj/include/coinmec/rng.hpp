#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <string_view>

namespace coinmec {

// FNV-1a, used for config hashes and seed derivation.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

// Derives a child seed from (base, tag, indices...). Entities sampled from
// per-entity child seeds stay identical when sibling counts change, which
// keeps scenario sweeps (more COINs, more WDs) nested instance-by-instance.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    std::uint64_t h = fnv1a64(&base, sizeof(base));
    return fnv1a64(tag, h);
}

template <typename... Ix>
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, Ix... index) {
    std::uint64_t h = derive_seed(base, tag);
    ((h = fnv1a64(&index, sizeof(index), h)), ...);
    return h;
}

// mt19937_64 with hand-mapped distributions; std::uniform_real_distribution is
// implementation-defined, and dataset bytes must be reproducible from seeds alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::uint64_t uniform_int(std::uint64_t n) {
        // rejection sampling to remove modulo bias
        const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    double exponential() { return -std::log1p(-uniform()); }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

}  // namespace coinmec
