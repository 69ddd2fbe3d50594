#pragma once

#include <cmath>
#include <cstdint>

namespace fieldkf {

/// splitmix64 step; used to derive independent sub-seeds from (seed, tag, k)
/// tuples so Monte-Carlo trials and time steps never share a noise stream.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + b;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// xoshiro256++ (Blackman & Vigna): a fixed published generator, so streams
/// are bit-identical on every platform, and cheap enough for the sampler's
/// ~1e5 deviates per field draw. State is seeded through splitmix64.
class Xoshiro256pp {
public:
    explicit Xoshiro256pp(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : s_) {
            sm += 0x9e3779b97f4a7c15ULL;
            std::uint64_t z = sm;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            word = z ^ (z >> 31);
        }
    }

    std::uint64_t operator()() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

/// Deterministic standard-normal stream: xoshiro256++ + the Marsaglia
/// polar method with an explicit uint64 -> double mapping. Rejection is a
/// fixed function of the engine stream, and std::normal_distribution
/// (whose algorithm the standard leaves open) is avoided, so the sequence
/// is bit-reproducible for a given seed.
class NormalDeviate {
public:
    explicit NormalDeviate(std::uint64_t seed) : eng_(seed) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = static_cast<double>(eng_() >> 11) * 0x1p-52 - 1.0; // [-1, 1)
            v = static_cast<double>(eng_() >> 11) * 0x1p-52 - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

private:
    Xoshiro256pp eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace fieldkf
