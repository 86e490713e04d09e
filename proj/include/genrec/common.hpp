#pragma once

// Shared plumbing: error types, deterministic RNG, small parsing helpers.

#include <cstdint>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace genrec {

// Error taxonomy. The CLI maps these onto exit codes (usage=1, data=2,
// numeric=3); library code throws and never exits.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Bug class: a broken internal contract, not a user mistake.
struct InternalError : std::logic_error {
    using std::logic_error::logic_error;
};

// splitmix64 step; also used to derive independent sub-streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = a ^ (0x9E3779B97F4A7C15ull + (b << 6) + (b >> 2));
    return splitmix64(s);
}

// xoshiro256++ with splitmix64 seeding. Fully specified here so every draw
// in the repo is reproducible independent of the standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw InternalError("Rng::below(0)");
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Box-Muller, no spare caching.
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double exponential(double mean) {
        return -mean * std::log(1.0 - uniform());
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Index draw from unnormalized nonnegative weights.
    int categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw InternalError("categorical: zero total weight");
        double r = uniform() * total;
        for (size_t i = 0; i + 1 < weights.size(); ++i) {
            r -= weights[i];
            if (r < 0.0) return static_cast<int>(i);
        }
        return static_cast<int>(weights.size()) - 1;
    }

    // Independent stream derived from this seed lineage.
    Rng fork(std::uint64_t stream) const {
        return Rng(mix_seed(state_[0] ^ state_[2], stream));
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t state_[4];
};

// FNV-1a 64-bit, used for artifact digests in run manifests.
std::uint64_t fnv1a(std::span<const unsigned char> bytes);
inline std::uint64_t fnv1a(std::string_view text) {
    const auto* p = reinterpret_cast<const unsigned char*>(text.data());
    return fnv1a({p, text.size()});
}
std::string fnv1a_hex_of_file(const std::string& path);
std::string fnv1a_hex(std::string_view text);

// "1e6", "250000", "12k" style counts.
std::int64_t parse_count(const std::string& text);
// "0", "90s", "15m", "24h", "2d" durations in seconds.
std::int64_t parse_duration_seconds(const std::string& text);

std::vector<std::string> split(const std::string& text, char sep);
std::string lowercase(std::string s);

// Doubles formatted so that equal values always produce equal text.
std::string format_double(double v);

}  // namespace genrec
