#ifndef SIMFUSE_RNG_HPP
#define SIMFUSE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace simfuse {

/// SplitMix64 step. Used both as a stand-alone mixer for deriving
/// per-phase seeds from a master seed and for seeding the main engine.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Derives the seed of sub-stream `stream` from a master seed.
/// derive_seed(master, k) = the (k+1)-th SplitMix64 output of the state
/// initialized with `master`, mixed once more with the stream index so
/// that nearby streams are uncorrelated.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t s = master ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
    return splitmix64(s);
}

/// Stable 64-bit string hash (FNV-1a) for deriving per-image seeds from
/// tags, so adding images never perturbs the streams of existing ones.
inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Stream indices of the pipeline's randomized phases. Shared between
/// the in-memory experiment and the file-based commands so both derive
/// identical per-phase seeds from the same master seed.
namespace streams {
constexpr std::uint64_t train_sample = 11;
constexpr std::uint64_t forest = 12;
constexpr std::uint64_t eval_sample = 13;
constexpr std::uint64_t distance = 14;
constexpr std::uint64_t pooled = 15;
constexpr std::uint64_t phantom = 31;
constexpr std::uint64_t scanner = 32;
} // namespace streams

/// Per-image seed of one phase: tag-hashed so it is independent of the
/// image's position in any manifest.
inline std::uint64_t image_seed(std::uint64_t master, std::uint64_t stream,
                                const std::string& tag) {
    return derive_seed(derive_seed(master, stream), fnv1a64(tag));
}

/// Deterministic RNG with hand-rolled variate transforms.
///
/// std::mt19937_64 itself is bit-portable, but the standard
/// distributions are not, so uniform/normal/int draws are implemented
/// here to keep every seeded artifact byte-identical across compilers.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n), unbiased by rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    /// Standard normal via Box-Muller (pairs cached).
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Fisher-Yates shuffle of index vector [0, n).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace simfuse

#endif
