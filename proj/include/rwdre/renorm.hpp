#pragma once

// Deterministic renormalization arithmetic: the scale sequence L_{k+1} =
// floor(sqrt(L_k)) L_k in exact integers, the sprinkling sequences rho_k and
// v_k in 50-digit floats, feasibility conditions, and an exact dynamic
// programming minimizer of chi-averages over R-Lipschitz crossings.

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "rwdre/environment.hpp"
#include "rwdre/lattice.hpp"
#include "rwdre/stats.hpp"

namespace rwdre::renorm {

using BigInt = boost::multiprecision::cpp_int;
using BigFloat = boost::multiprecision::cpp_bin_float_50;

inline BigInt parseBigInt(const std::string& text) {
    auto e = text.find_first_of("eE");
    if (e == std::string::npos) return BigInt(text);
    BigInt mantissa(text.substr(0, e));
    int exp10 = std::stoi(text.substr(e + 1));
    if (exp10 < 0) throw std::invalid_argument("parseBigInt: negative exponent");
    return mantissa * boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(exp10));
}

inline BigInt isqrt(const BigInt& n) { return boost::multiprecision::sqrt(n); }

inline BigInt nextScale(const BigInt& L) { return isqrt(L) * L; }

inline BigFloat toBigFloat(const BigInt& n) { return BigFloat(n); }

// L^p for huge integer L, computed as exp(p log L).
inline BigFloat powScale(const BigInt& L, double p) {
    return boost::multiprecision::exp(BigFloat(p) * boost::multiprecision::log(toBigFloat(L)));
}

enum class Direction { NonIncreasing, NonDecreasing };

struct ScaleTable {
    BigInt L0;
    Direction direction = Direction::NonIncreasing;
    std::vector<BigInt> levels;        // L_0 .. L_kTop
    std::vector<BigFloat> rho;         // rho_0 .. rho_kTop
    std::vector<BigFloat> v;           // v_0 .. v_kTop
    BigFloat rhoHat, vHat;
    BigFloat iota;                     // iota_0
    BigFloat vInfinity;
    std::vector<bool> rhoFloorOk;      // rho_k >= L_k^{-1/16}
    std::vector<bool> vFloorOk;        // v_k >= L_k^{-1/16}

    std::size_t kTop() const { return levels.size() - 1; }

    // sqrt(L_k) >= floor(sqrt(L_k)) >= sqrt(L_k)/2, exact in integers.
    bool lowerBoundHolds(std::size_t k) const {
        BigInt f = isqrt(levels[k]);
        return f * f <= levels[k] && levels[k] < (f + 1) * (f + 1) && 4 * f * f >= levels[k];
    }

    // v_k L_k^{-1/16} >= L_k^{-1/8} >= 4 L_k / L_{k+1}; the first inequality is
    // asserted only where v_k >= L_k^{-1/16}.
    bool cascadeMarginHolds(std::size_t k) const {
        if (k + 1 >= levels.size()) throw std::out_of_range("cascadeMarginHolds: need level k+1");
        BigFloat lkm16 = powScale(levels[k], -1.0 / 16.0);
        BigFloat lkm8 = powScale(levels[k], -1.0 / 8.0);
        BigFloat ratio = BigFloat(4) * toBigFloat(levels[k]) / toBigFloat(levels[k + 1]);
        bool second = lkm8 >= ratio;
        if (v[k] < lkm16) return second;
        return v[k] * lkm16 >= lkm8 && second;
    }

    bool rhoWithinIotaBounds() const {
        for (std::size_t k = 0; k < rho.size(); ++k) {
            if (direction == Direction::NonIncreasing && rho[k] > iota * rhoHat) return false;
            if (direction == Direction::NonDecreasing && rho[k] < rhoHat / iota) return false;
        }
        return true;
    }
};

// Sum of L_k^{-1/16} over all k >= 0, extended past kTop until the tail is
// negligible at working precision.
inline BigFloat scaleExponentSum(const BigInt& L0, double p = -1.0 / 16.0) {
    BigFloat sum = 0;
    BigInt L = L0;
    for (int k = 0; k < 256; ++k) {
        BigFloat term = powScale(L, p);
        sum += term;
        if (term < BigFloat("1e-45")) break;
        L = nextScale(L);
    }
    return sum;
}

inline ScaleTable buildScaleTable(const BigInt& L0, std::size_t kTop, const BigFloat& rhoHat,
                                  const BigFloat& vHat, Direction direction) {
    if (L0 < 4) throw std::invalid_argument("buildScaleTable: L0 >= 4 required");
    BigFloat l0m16 = powScale(L0, -1.0 / 16.0);
    if (vHat < l0m16 || vHat > 1)
        throw std::invalid_argument("buildScaleTable: vHat must lie in [L0^{-1/16}, 1]");

    ScaleTable t;
    t.L0 = L0;
    t.direction = direction;
    t.rhoHat = rhoHat;
    t.vHat = vHat;
    t.levels.resize(kTop + 1);
    t.levels[0] = L0;
    for (std::size_t k = 1; k <= kTop; ++k) t.levels[k] = nextScale(t.levels[k - 1]);

    t.rho.resize(kTop + 1);
    t.v.resize(kTop + 1);
    t.rho[0] = rhoHat;
    t.v[0] = vHat;
    for (std::size_t k = 0; k < kTop; ++k) {
        BigFloat f = powScale(t.levels[k], -1.0 / 16.0);
        t.rho[k + 1] = (direction == Direction::NonIncreasing) ? t.rho[k] * (1 + f)
                                                               : t.rho[k] * (1 - f);
        t.v[k + 1] = t.v[k] * (1 - f);
    }

    t.iota = boost::multiprecision::exp(2 * scaleExponentSum(L0));

    // v_infinity = vHat * prod_{k>=0} (1 - L_k^{-1/16})
    BigFloat prod = 1;
    {
        BigInt L = L0;
        for (int k = 0; k < 256; ++k) {
            BigFloat f = powScale(L, -1.0 / 16.0);
            if (f >= 1) throw std::domain_error("buildScaleTable: L_k^{-1/16} >= 1, product vanishes");
            prod *= (1 - f);
            if (f < BigFloat("1e-45")) break;
            L = nextScale(L);
        }
    }
    t.vInfinity = vHat * prod;

    t.rhoFloorOk.resize(kTop + 1);
    t.vFloorOk.resize(kTop + 1);
    for (std::size_t k = 0; k <= kTop; ++k) {
        BigFloat f = powScale(t.levels[k], -1.0 / 16.0);
        t.rhoFloorOk[k] = t.rho[k] >= f;
        t.vFloorOk[k] = t.v[k] >= f;
    }
    return t;
}

// Feasibility condition on the starting scale: evaluated in the log domain so
// that astronomically small or large terms never leave the representable range.
inline bool checkKoCondition(std::size_t k, int d, double gamma, double Co, double co,
                             const BigInt& L0) {
    if (!(gamma > 1.0 && gamma <= 1.5)) throw std::invalid_argument("checkKoCondition: gamma in (1, 3/2]");
    if (Co < 1.0 || co <= 0.0) throw std::invalid_argument("checkKoCondition: need Co >= 1, co > 0");
    BigInt L = L0;
    for (std::size_t i = 0; i < k; ++i) L = nextScale(L);

    const BigFloat logL = boost::multiprecision::log(toBigFloat(L));
    const BigFloat threeHalvesPow = boost::multiprecision::pow(BigFloat(1.5), BigFloat(1.5));
    const BigFloat logLgamma = boost::multiprecision::pow(logL, BigFloat(gamma));
    const BigFloat logL32 = boost::multiprecision::pow(logL, BigFloat(1.5));

    BigFloat a = -(2 - threeHalvesPow) * logLgamma;
    BigFloat b = -BigFloat(co) * powScale(L, 1.0 / 16.0) + threeHalvesPow * logL32;
    BigFloat mx = (a > b) ? a : b, mn = (a > b) ? b : a;
    BigFloat logSum = mx;
    if (mn - mx > -200)
        logSum += boost::multiprecision::log1p(boost::multiprecision::exp(mn - mx));
    BigFloat lhsLog = boost::multiprecision::log(BigFloat(Co)) + BigFloat(2 * d + 1) * logL + logSum;
    return lhsLog < 0;
}

// ---------------------------------------------------------------------------
// Exact crossing minimization over R-Lipschitz paths.

struct CrossingProblem {
    int dim = 1;
    int range = 1;
    std::int64_t duration = 1;                        // number of averaged layers
    Site boxLo{}, boxHi{};                            // inclusive spatial bounds
    std::vector<Site> base;                           // admissible start sites at layer 0
    std::function<double(const Site&, std::int64_t)> g;
    std::function<bool(const Site&, std::int64_t)> siteAdmissible;            // optional
    std::function<bool(const Site&, std::int64_t, const Site&)> stepAdmissible;  // optional
};

struct CrossingResult {
    bool feasible = false;
    double minSum = std::numeric_limits<double>::infinity();
    double minChi = std::numeric_limits<double>::infinity();
    std::vector<Site> argmin;
};

namespace detail {

inline std::vector<Site> lipschitzSteps(int dim, int range) {
    std::vector<Site> steps;
    auto push = [&](const Site& s) {
        if (l1(s) <= range) steps.push_back(s);
    };
    if (dim == 1) {
        for (int a = -range; a <= range; ++a) push(site(a));
    } else if (dim == 2) {
        for (int a = -range; a <= range; ++a)
            for (int b = -range; b <= range; ++b) push(site(a, b));
    } else {
        for (int a = -range; a <= range; ++a)
            for (int b = -range; b <= range; ++b)
                for (int c = -range; c <= range; ++c) push(site(a, b, c));
    }
    std::sort(steps.begin(), steps.end(), lexLess);
    return steps;
}

struct BoxIndexer {
    Site lo, hi;
    int dim;
    std::size_t size = 1;
    std::array<std::size_t, kMaxDim> stride{};

    BoxIndexer(const Site& lo_, const Site& hi_, int dim_) : lo(lo_), hi(hi_), dim(dim_) {
        for (int i = 0; i < dim; ++i) {
            stride[static_cast<std::size_t>(i)] = size;
            size *= static_cast<std::size_t>(hi[i] - lo[i] + 1);
        }
    }
    bool contains(const Site& x) const {
        for (int i = 0; i < dim; ++i)
            if (x[i] < lo[i] || x[i] > hi[i]) return false;
        return true;
    }
    std::size_t flat(const Site& x) const {
        std::size_t f = 0;
        for (int i = 0; i < dim; ++i)
            f += stride[static_cast<std::size_t>(i)] * static_cast<std::size_t>(x[i] - lo[i]);
        return f;
    }
    Site unflat(std::size_t f) const {
        Site x{};
        for (int i = dim - 1; i >= 0; --i) {
            std::size_t s = stride[static_cast<std::size_t>(i)];
            x[i] = static_cast<std::int32_t>(f / s) + lo[i];
            f %= s;
        }
        return x;
    }
};

} // namespace detail

// Layered dynamic program over (site, time). Returns the exact minimum of
// sum_{i<L} g(sigma(i), i) and one argmin path; ties resolve to the
// lexicographically first predecessor step, so results are deterministic.
inline CrossingResult minChiOverCrossings(const CrossingProblem& p) {
    if (p.duration < 1) throw std::invalid_argument("minChiOverCrossings: duration >= 1");
    const auto steps = detail::lipschitzSteps(p.dim, p.range);
    const detail::BoxIndexer box(p.boxLo, p.boxHi, p.dim);
    const double inf = std::numeric_limits<double>::infinity();
    auto siteOk = [&](const Site& x, std::int64_t t) {
        return !p.siteAdmissible || p.siteAdmissible(x, t);
    };

    std::vector<double> cur(box.size, inf), next;
    std::vector<std::uint8_t> parents;
    if (p.duration > 1)
        parents.assign(static_cast<std::size_t>(p.duration - 1) * box.size, 255);

    for (const Site& s : p.base) {
        if (!box.contains(s)) throw std::invalid_argument("minChiOverCrossings: base outside box");
        if (siteOk(s, 0)) cur[box.flat(s)] = p.g(s, 0);
    }

    for (std::int64_t t = 1; t < p.duration; ++t) {
        next.assign(box.size, inf);
        for (std::size_t f = 0; f < box.size; ++f) {
            if (cur[f] == inf) continue;
            Site x = box.unflat(f);
            for (std::size_t si = 0; si < steps.size(); ++si) {
                Site y = x + steps[si];
                if (!box.contains(y)) continue;
                if (p.stepAdmissible && !p.stepAdmissible(x, t - 1, steps[si])) continue;
                if (!siteOk(y, t)) continue;
                double cand = cur[f] + p.g(y, t);
                std::size_t fy = box.flat(y);
                if (cand < next[fy]) {
                    next[fy] = cand;
                    parents[static_cast<std::size_t>(t - 1) * box.size + fy] =
                        static_cast<std::uint8_t>(si);
                }
            }
        }
        cur.swap(next);
    }

    CrossingResult r;
    std::size_t bestF = 0;
    for (std::size_t f = 0; f < box.size; ++f) {
        if (cur[f] == inf) continue;
        if (p.stepAdmissible) {
            Site x = box.unflat(f);
            bool canContinue = false;
            for (const Site& u : steps)
                if (p.stepAdmissible(x, p.duration - 1, u)) { canContinue = true; break; }
            if (!canContinue) continue;
        }
        if (!r.feasible || cur[f] < r.minSum) {
            r.feasible = true;
            r.minSum = cur[f];
            bestF = f;
        }
    }
    if (!r.feasible) return r;
    r.minChi = r.minSum / static_cast<double>(p.duration);

    r.argmin.resize(static_cast<std::size_t>(p.duration));
    std::size_t f = bestF;
    for (std::int64_t t = p.duration - 1; t >= 1; --t) {
        r.argmin[static_cast<std::size_t>(t)] = box.unflat(f);
        Site prev = box.unflat(f) -
                    steps[parents[static_cast<std::size_t>(t - 1) * box.size + f]];
        f = box.flat(prev);
    }
    r.argmin[0] = box.unflat(f);
    return r;
}

// Per-layer prefix minima: layerMin[t] = min over paths of sum_{i<=t} g, with
// the same admissibility rules. Used to decide "exists ell >= L/2R" events in
// one sweep.
inline std::vector<double> layeredMinima(const CrossingProblem& p) {
    const auto steps = detail::lipschitzSteps(p.dim, p.range);
    const detail::BoxIndexer box(p.boxLo, p.boxHi, p.dim);
    const double inf = std::numeric_limits<double>::infinity();
    auto siteOk = [&](const Site& x, std::int64_t t) {
        return !p.siteAdmissible || p.siteAdmissible(x, t);
    };
    std::vector<double> cur(box.size, inf), next, out;
    for (const Site& s : p.base)
        if (siteOk(s, 0)) cur[box.flat(s)] = p.g(s, 0);
    out.push_back(*std::min_element(cur.begin(), cur.end()));
    for (std::int64_t t = 1; t < p.duration; ++t) {
        next.assign(box.size, inf);
        for (std::size_t f = 0; f < box.size; ++f) {
            if (cur[f] == inf) continue;
            Site x = box.unflat(f);
            for (const Site& u : steps) {
                Site y = x + u;
                if (!box.contains(y)) continue;
                if (p.stepAdmissible && !p.stepAdmissible(x, t - 1, u)) continue;
                if (!siteOk(y, t)) continue;
                double cand = cur[f] + p.g(y, t);
                std::size_t fy = box.flat(y);
                if (cand < next[fy]) next[fy] = cand;
            }
        }
        cur.swap(next);
        out.push_back(*std::min_element(cur.begin(), cur.end()));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cascading witness: slicing a realized crossing at scale k+1 into its
// L_{k+1}/L_k sub-crossings and returning the slabs where chi < v_k.

struct CascadeSlab {
    std::int64_t slab = 0;   // time slab index within the parent box
    Site subBoxY{};          // spatial index y of the scale-k box (base cell)
    double chi = 0.0;
};

struct CascadeWitness {
    std::vector<CascadeSlab> badSlabs;     // all slabs with chi < vK
    std::pair<std::int64_t, std::int64_t> separatedPair{0, 0};  // slab distance >= 2
};

inline CascadeWitness cascadeWitness(const CrossingResult& parent, std::int64_t Lk,
                                     std::int64_t Lk1, double vK, double vK1,
                                     const CrossingProblem& problem) {
    if (!parent.feasible || !(parent.minChi < vK1))
        throw std::logic_error("cascadeWitness: parent event did not occur");
    if (Lk1 % Lk != 0 || static_cast<std::int64_t>(parent.argmin.size()) != Lk1)
        throw std::invalid_argument("cascadeWitness: inconsistent scales");
    const std::int64_t J = Lk1 / Lk;
    CascadeWitness w;
    for (std::int64_t j = 0; j < J; ++j) {
        double sum = 0.0;
        for (std::int64_t i = j * Lk; i < (j + 1) * Lk; ++i)
            sum += problem.g(parent.argmin[static_cast<std::size_t>(i)], i);
        double chi = sum / static_cast<double>(Lk);
        if (chi < vK) {
            Site start = parent.argmin[static_cast<std::size_t>(j * Lk)];
            Site y{};
            for (int i = 0; i < problem.dim; ++i) {
                std::int32_t q = static_cast<std::int32_t>(
                    (start[i] >= 0) ? start[i] / Lk : -(((-static_cast<std::int64_t>(start[i])) + Lk - 1) / Lk));
                y[i] = q;
            }
            w.badSlabs.push_back({j, y, chi});
        }
    }
    if (w.badSlabs.size() < 3)
        throw std::logic_error("cascadeWitness: fewer than three bad slabs; cascading property violated");
    w.separatedPair = {w.badSlabs.front().slab, w.badSlabs.back().slab};
    if (w.separatedPair.second - w.separatedPair.first < 2)
        throw std::logic_error("cascadeWitness: no vertically separated pair");
    return w;
}

// ---------------------------------------------------------------------------
// Monte Carlo estimate of p_k: frequency of {exists crossing with chi < threshold}
// for g = 1{N >= K} over fresh environment replicas.

struct PkEstimate {
    double phat = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t replicas = 0;
    std::size_t hits = 0;
};

inline env::EnvConfig pkBoxEnvConfig(int dim, int range, std::int64_t L, double rho,
                                     std::uint64_t seed, std::uint64_t replica) {
    env::EnvConfig c;
    c.dim = dim;
    c.rho = rho;
    c.T = L - 1;
    c.Tpast = 0;
    for (int i = 0; i < dim; ++i) {
        c.boxLo[i] = static_cast<std::int32_t>(-2 * range * L);
        c.boxHi[i] = static_cast<std::int32_t>(3 * range * L - 1);
    }
    c.seed = seed;
    c.replica = replica;
    return c;
}

inline CrossingProblem pkCrossingProblem(const env::EnvironmentWindow& w, int range,
                                         std::int64_t L, std::int64_t K) {
    CrossingProblem p;
    p.dim = w.config().dim;
    p.range = range;
    p.duration = L;
    p.boxLo = w.config().boxLo;
    p.boxHi = w.config().boxHi;
    // base I = [0, R L)^d
    std::vector<Site> base;
    std::int64_t n = range * L;
    if (p.dim == 1) {
        for (std::int64_t x = 0; x < n; ++x) base.push_back(site(static_cast<std::int32_t>(x)));
    } else {
        for (std::int64_t x = 0; x < n; ++x)
            for (std::int64_t y = 0; y < n; ++y)
                base.push_back(site(static_cast<std::int32_t>(x), static_cast<std::int32_t>(y)));
    }
    p.base = std::move(base);
    p.g = [&w, K](const Site& x, std::int64_t t) {
        return w.occupation({x, t}) >= K ? 1.0 : 0.0;
    };
    return p;
}

inline PkEstimate estimatePk(int dim, int range, std::int64_t L, std::int64_t K, double threshold,
                             double rho, std::uint64_t seed, std::size_t replicas,
                             double confidence = 0.95) {
    PkEstimate est;
    est.replicas = replicas;
    for (std::size_t r = 0; r < replicas; ++r) {
        env::EnvironmentWindow w(pkBoxEnvConfig(dim, range, L, rho, seed, r));
        auto problem = pkCrossingProblem(w, range, L, K);
        auto res = minChiOverCrossings(problem);
        if (res.feasible && res.minChi < threshold) ++est.hits;
    }
    auto ci = stats::wilson(est.hits, replicas, confidence);
    est.phat = ci.phat;
    est.lo = ci.lo;
    est.hi = ci.hi;
    return est;
}

// Probability that some ell >= L/(2R) admits a Lipschitz path from the origin
// spending fewer than (1-eps) ell steps on sites with N >= K; optionally
// restricted to paths avoiding the moving half-space H_{v, L}.
struct DensityControlResult {
    double phat = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t hits = 0;
    std::size_t replicas = 0;
};

inline DensityControlResult densityControlExperiment(int dim, int range, std::int64_t L,
                                                     std::int64_t K, double eps, double rho,
                                                     std::int64_t ellMax, std::uint64_t seed,
                                                     std::size_t replicas,
                                                     bool avoidHalfSpace = false, double v = 0.0) {
    DensityControlResult out;
    out.replicas = replicas;
    const std::int64_t ellMin = (L + 2 * range - 1) / (2 * range);
    for (std::size_t r = 0; r < replicas; ++r) {
        env::EnvConfig c;
        c.dim = dim;
        c.rho = rho;
        c.T = ellMax - 1;
        for (int i = 0; i < dim; ++i) {
            c.boxLo[i] = static_cast<std::int32_t>(-range * ellMax);
            c.boxHi[i] = static_cast<std::int32_t>(range * ellMax);
        }
        c.seed = seed;
        c.replica = r;
        env::EnvironmentWindow w(c);

        CrossingProblem p;
        p.dim = dim;
        p.range = range;
        p.duration = ellMax;
        p.boxLo = c.boxLo;
        p.boxHi = c.boxHi;
        p.base = {Site{}};
        p.g = [&w, K](const Site& x, std::int64_t t) {
            return w.occupation({x, t}) >= K ? 1.0 : 0.0;
        };
        if (avoidHalfSpace)
            p.siteAdmissible = [v, L](const Site& x, std::int64_t t) {
                return !inHalfSpace(x, t, v, L);
            };
        auto mins = layeredMinima(p);
        bool occurred = false;
        for (std::int64_t ell = ellMin; ell <= ellMax && !occurred; ++ell) {
            double m = mins[static_cast<std::size_t>(ell - 1)];
            if (m < (1.0 - eps) * static_cast<double>(ell)) occurred = true;
        }
        if (occurred) ++out.hits;
    }
    auto ci = stats::wilson(out.hits, replicas, 0.95);
    out.phat = ci.phat;
    out.lo = ci.lo;
    out.hi = ci.hi;
    return out;
}

} // namespace rwdre::renorm
