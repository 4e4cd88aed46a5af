#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace descentforge {

/// Counter-based deterministic random stream.
///
/// Output k of stream (seed, name) is a pure function of (seed, name, k):
/// the 64-bit SplitMix finalizer applied to seed ^ fnv1a(name) plus a fixed
/// increment per draw.  Streams never share state, so solver components can
/// draw independently without perturbing each other's sequences, and a rerun
/// with the same seed reproduces every draw bit for bit on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::string_view stream = "") noexcept
        : state_(seed ^ fnv1a(stream)) {}

    std::uint64_t next_u64() noexcept {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53 random bits.
    double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept {
        return lo + (hi - lo) * uniform();
    }

    /// Uniform integer in [0, n); n must be positive.
    std::size_t below(std::size_t n) noexcept {
        return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
    }

    /// Standard normal via Box-Muller (one value per call, deterministic pair use).
    double normal() noexcept {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    template <class T>
    void shuffle(std::vector<T>& v) noexcept {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    static std::uint64_t fnv1a(std::string_view s) noexcept {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }

private:
    std::uint64_t state_;
};

}  // namespace descentforge
