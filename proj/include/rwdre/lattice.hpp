#pragma once

// Small lattice geometry helpers shared across modules. Sites live in Z^d for
// d <= 3; the unused coordinates stay zero.

#include <array>
#include <cstdint>
#include <cstdlib>
#include <functional>

namespace rwdre {

constexpr int kMaxDim = 3;

struct Site {
    std::array<std::int32_t, kMaxDim> c{};

    std::int32_t& operator[](int i) { return c[static_cast<std::size_t>(i)]; }
    std::int32_t operator[](int i) const { return c[static_cast<std::size_t>(i)]; }
    bool operator==(const Site&) const = default;

    Site operator+(const Site& o) const {
        Site r;
        for (int i = 0; i < kMaxDim; ++i) r.c[i] = c[i] + o.c[i];
        return r;
    }
    Site operator-(const Site& o) const {
        Site r;
        for (int i = 0; i < kMaxDim; ++i) r.c[i] = c[i] - o.c[i];
        return r;
    }
};

inline Site site(std::int32_t x0, std::int32_t x1 = 0, std::int32_t x2 = 0) {
    return Site{{x0, x1, x2}};
}

inline std::int64_t l1(const Site& s) {
    std::int64_t n = 0;
    for (int i = 0; i < kMaxDim; ++i) n += std::abs(static_cast<std::int64_t>(s.c[i]));
    return n;
}

inline bool lexLess(const Site& a, const Site& b) { return a.c < b.c; }

struct SiteHash {
    std::size_t operator()(const Site& s) const {
        std::uint64_t h = 0x9e3779b97f4a7c15ull;
        for (int i = 0; i < kMaxDim; ++i) {
            h ^= static_cast<std::uint32_t>(s.c[i]) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        }
        return static_cast<std::size_t>(h);
    }
};

// Space-time point: site plus an integer time.
struct Point {
    Site x;
    std::int64_t t = 0;
    bool operator==(const Point&) const = default;
};

// Forward cone at the origin: {(x, n) : n >= 0, x.e1 >= vbar*n, |x|_1 <= R*n}.
inline bool inForwardCone(const Site& rel, std::int64_t n, double vbar, int range) {
    if (n < 0) return false;
    return static_cast<double>(rel[0]) >= vbar * static_cast<double>(n) &&
           l1(rel) <= static_cast<std::int64_t>(range) * n;
}

// Backward wedge at the origin: {(x, n) : n <= 0, x.e1 < vbar*n}.
inline bool inBackwardWedge(const Site& rel, std::int64_t n, double vbar) {
    if (n > 0) return false;
    return static_cast<double>(rel[0]) < vbar * static_cast<double>(n);
}

// Moving half-space {(x, n) : x.e1 <= -L + v*n}.
inline bool inHalfSpace(const Site& rel, std::int64_t n, double v, std::int64_t L) {
    return static_cast<double>(rel[0]) <= -static_cast<double>(L) + v * static_cast<double>(n);
}

} // namespace rwdre
