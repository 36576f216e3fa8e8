#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace kds {

/// Deterministic RNG used everywhere seeding matters. All sampling is
/// implemented on top of raw mt19937_64 output rather than the standard
/// distributions, whose results are implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller.
    double normal();

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n);

    /// Fisher-Yates shuffle.
    template <class T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i + 1));
            std::swap(v[i], v[j]);
        }
    }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// splitmix64 finalizer; also used to mix stream identifiers into seeds.
std::uint64_t mix64(std::uint64_t x);

/// Derive an independent substream seed from a base seed and a list of
/// stream identifiers (order-sensitive).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> ids);

/// FNV-1a 64-bit hash, used for stream tags and artifact digests.
std::uint64_t fnv1a64(std::string_view bytes);

/// Shorthand for naming substreams: tag("folds"), tag("train"), ...
inline std::uint64_t tag(std::string_view name) { return fnv1a64(name); }

}  // namespace kds
