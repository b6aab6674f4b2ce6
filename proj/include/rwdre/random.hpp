#pragma once

// Deterministic hierarchical randomness: every variate is a pure function of
// (master seed, coordinate key), so lazy materialization in any order and from
// any thread yields identical realizations.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rwdre::rnd {

enum class Stream : std::uint8_t {
    InitialCount = 1,
    TrajFuture   = 2,
    TrajPast     = 3,
    UniformField = 4,
    Replica      = 5,
};

// Coordinate key, injectively packed into four 64-bit words.
// Layout: w0 = stream | replica, w1 = x0 | x1, w2 = x2 | t, w3 = i | sub.
// "sub" is a draw counter reserved for samplers that consume several
// uniforms per variate (rejection loops); callers leave it at zero.
struct RandomKey {
    std::array<std::uint64_t, 4> w{};

    static RandomKey make(Stream stream, std::uint64_t replica,
                          std::int64_t x0 = 0, std::int64_t x1 = 0, std::int64_t x2 = 0,
                          std::int64_t t = 0, std::int64_t i = 0, std::int64_t sub = 0) {
        auto checkCoord = [](std::int64_t v, const char* name) {
            if (v < INT32_MIN || v > INT32_MAX)
                throw std::out_of_range(std::string("RandomKey: coordinate out of range: ") + name);
            return static_cast<std::uint64_t>(static_cast<std::uint32_t>(static_cast<std::int32_t>(v)));
        };
        if (replica > (std::uint64_t(1) << 48))
            throw std::out_of_range("RandomKey: replica id out of range");
        RandomKey k;
        k.w[0] = (std::uint64_t(static_cast<std::uint8_t>(stream)) << 56) | replica;
        k.w[1] = (checkCoord(x0, "x0") << 32) | checkCoord(x1, "x1");
        k.w[2] = (checkCoord(x2, "x2") << 32) | checkCoord(t, "t");
        k.w[3] = (checkCoord(i, "i") << 32) | checkCoord(sub, "sub");
        return k;
    }

    RandomKey withSub(std::int64_t sub) const {
        RandomKey k = *this;
        k.w[3] = (k.w[3] & 0xffffffff00000000ull) |
                 static_cast<std::uint32_t>(static_cast<std::int32_t>(sub));
        return k;
    }
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30; z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27; z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
}

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

inline std::uint64_t absorb(std::uint64_t seed, const RandomKey& key) {
    std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ull);
    h = mix64(h ^ (key.w[0] + kGamma));
    h = mix64(h ^ (key.w[1] + 0xc2b2ae3d27d4eb4full));
    h = mix64(h ^ (key.w[2] + 0x165667b19e3779f9ull));
    h = mix64(h ^ (key.w[3] + 0x27d4eb2f165667c5ull));
    return h;
}

inline double toUnit(std::uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;  // [0, 1)
}

} // namespace detail

inline std::uint64_t bits64(std::uint64_t seed, const RandomKey& key) {
    return detail::mix64(detail::absorb(seed, key));
}

inline double uniform(std::uint64_t seed, const RandomKey& key) {
    return detail::toUnit(bits64(seed, key));
}

// A cheap indexable stream sharing one absorbed prefix. at(n) is a pure
// function of (seed, prefix key, n); used for per-particle step sequences.
class Substream {
public:
    Substream() = default;
    Substream(std::uint64_t seed, const RandomKey& prefix)
        : base_(detail::absorb(seed, prefix)) {}

    std::uint64_t bitsAt(std::uint64_t n) const {
        return detail::mix64(base_ + (n + 1) * detail::kGamma);
    }
    double at(std::uint64_t n) const { return detail::toUnit(bitsAt(n)); }

private:
    std::uint64_t base_ = 0;
};

inline double exponential(std::uint64_t seed, const RandomKey& key) {
    double u = uniform(seed, key);
    return -std::log1p(-u);
}

namespace detail {

// Inversion by sequential search; exact and branch-deterministic for rho <= 30.
inline std::int64_t poissonInversion(double rho, double u) {
    double p = std::exp(-rho);
    double cum = p;
    std::int64_t k = 0;
    while (u >= cum && k < 4096) {
        ++k;
        p *= rho / static_cast<double>(k);
        cum += p;
    }
    return k;
}

// Hormann's PTRD transformed-rejection sampler; exact for large rho and free
// of normal approximations. Consumes pairs of uniforms from the key substream.
inline std::int64_t poissonPtrd(std::uint64_t seed, const RandomKey& key, double rho) {
    const double smu = std::sqrt(rho);
    const double b = 0.931 + 2.53 * smu;
    const double a = -0.059 + 0.02483 * b;
    const double invAlpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);

    Substream s(seed, key);
    for (std::uint64_t attempt = 0;; ++attempt) {
        double u = s.at(2 * attempt) - 0.5;
        double v = s.at(2 * attempt + 1);
        double us = 0.5 - std::fabs(u);
        double kf = std::floor((2.0 * a / us + b) * u + rho + 0.43);
        if (us >= 0.07 && v <= vr) return static_cast<std::int64_t>(kf);
        if (kf < 0.0 || (us < 0.013 && v > us)) continue;
        double logV = std::log(v * invAlpha / (a / (us * us) + b));
        double logP = kf * std::log(rho) - rho - std::lgamma(kf + 1.0);
        if (logV <= logP) return static_cast<std::int64_t>(kf);
    }
}

} // namespace detail

inline std::int64_t poisson(std::uint64_t seed, const RandomKey& key, double rho) {
    if (!(rho >= 0.0) || !std::isfinite(rho))
        throw std::invalid_argument("poisson: rho must be finite and nonnegative");
    if (rho == 0.0) return 0;
    if (rho <= 30.0) return detail::poissonInversion(rho, uniform(seed, key));
    return detail::poissonPtrd(seed, key, rho);
}

} // namespace rwdre::rnd
