#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace longconf {

// 64-bit FNV-1a over the label bytes.
constexpr std::uint64_t hash_label(std::string_view label) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

// SplitMix64 finalizer; used to mix stream keys.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// A single-consumer random stream.
///
/// Streams are identified by a 64-bit key. The key is a pure function of the
/// master seed and the (label, index) derivation path, never of the engine
/// state, so child streams can be derived in any order with identical
/// results.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t key) : key_(key) {
        std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                          static_cast<std::uint32_t>(mix64(key)),
                          static_cast<std::uint32_t>(mix64(key) >> 32)};
        engine_.seed(seq);
    }

    std::uint64_t key() const noexcept { return key_; }

    /// Child stream for (label, index); independent of how much of this stream was consumed.
    RandomStream derive(std::string_view label, std::uint64_t index) const {
        return RandomStream(mix64(key_ ^ mix64(hash_label(label) + mix64(index))));
    }

    /// Uniform on the open interval (0, 1).
    double uniform() {
        // 53 random bits, shifted off zero.
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() {
        // Box-Muller without caching, so the draw count per call is fixed.
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    double exponential() { return -std::log(uniform()); }

    /// Gamma(shape, 1) via Marsaglia-Tsang.
    double gamma(double shape) {
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = 0.0;
            double v = 0.0;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }

private:
    std::uint64_t key_;
    std::mt19937_64 engine_;
};

/// Master seed plus the derivation path that addresses a stream.
struct SeedSpec {
    std::uint64_t master_seed = 0;
    std::vector<std::pair<std::string, std::uint64_t>> path;

    SeedSpec child(std::string label, std::uint64_t index) const {
        SeedSpec s = *this;
        s.path.emplace_back(std::move(label), index);
        return s;
    }

    RandomStream stream() const {
        RandomStream s(mix64(master_seed));
        for (const auto& [label, index] : path) s = s.derive(label, index);
        return s;
    }
};

/// Stream for (label, index) under the given seed. Label must be non-empty.
RandomStream derive_stream(const SeedSpec& seed, std::string_view label, std::uint64_t index);

}  // namespace longconf
