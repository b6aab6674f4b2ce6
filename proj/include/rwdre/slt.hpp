#pragma once

// Appendix machinery: exact heat-kernel tables by convolution, soft local
// times with the exact infimum rule, L-pavings / rho-sparse clouds, the
// heat-kernel integration bound, and the SRW-vs-Poisson domination coupling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/gamma.hpp>

#include "rwdre/lattice.hpp"
#include "rwdre/random.hpp"

namespace rwdre::slt {

class HeatKernel {
public:
    HeatKernel(int dim, double laziness, std::int64_t nMax,
               std::size_t memoryBudgetBytes = std::size_t(4) << 30)
        : dim_(dim), laziness_(laziness), nMax_(nMax) {
        if (dim < 1 || dim > 2) throw std::invalid_argument("HeatKernel: dim must be 1 or 2");
        std::size_t cells = 0;
        for (std::int64_t n = 0; n <= nMax; ++n) {
            std::size_t w = static_cast<std::size_t>(2 * n + 1);
            cells += (dim == 1) ? w : w * w;
        }
        if (cells * sizeof(double) > memoryBudgetBytes)
            throw std::invalid_argument("HeatKernel: table exceeds memory budget");
        build();
    }

    int dim() const { return dim_; }
    std::int64_t nMax() const { return nMax_; }

    double at(std::int64_t n, const Site& x) const {
        if (n < 0 || n > nMax_) throw std::out_of_range("HeatKernel: n out of range");
        for (int i = 0; i < dim_; ++i)
            if (x[i] < -n || x[i] > n) return 0.0;
        for (int i = dim_; i < kMaxDim; ++i)
            if (x[i] != 0) return 0.0;
        return tables_[static_cast<std::size_t>(n)][flat(n, x)];
    }

    double atOrigin(std::int64_t n) const { return at(n, Site{}); }

    // Largest per-n deviation of sum_x p_n(0,x) from 1.
    double normalizationError() const { return normErr_; }

    // Fitted constants: sup_x p_n <= Csup / n^{d/2}; |p_n(x) - p_n(x')| <=
    // Clip |x-x'| / n^{(d+1)/2}; P(|S_n| > sqrt(n) log n) <= Ctail exp(-log^2 n).
    double fittedCsup() const { return cSup_; }
    double fittedClip() const { return cLip_; }
    double fittedCtail() const { return cTail_; }

private:
    std::size_t flat(std::int64_t n, const Site& x) const {
        std::size_t w = static_cast<std::size_t>(2 * n + 1);
        std::size_t f = static_cast<std::size_t>(x[0] + n);
        if (dim_ == 2) f = f * w + static_cast<std::size_t>(x[1] + n);
        return f;
    }

    void build() {
        // one-step kernel
        std::vector<std::pair<Site, double>> step;
        step.push_back({Site{}, laziness_});
        for (int i = 0; i < dim_; ++i) {
            Site s{};
            s[i] = 1;
            step.push_back({s, (1.0 - laziness_) / (2.0 * dim_)});
            s[i] = -1;
            step.push_back({s, (1.0 - laziness_) / (2.0 * dim_)});
        }

        tables_.resize(static_cast<std::size_t>(nMax_) + 1);
        tables_[0] = {1.0};
        for (std::int64_t n = 1; n <= nMax_; ++n) {
            std::size_t w = static_cast<std::size_t>(2 * n + 1);
            auto& cur = tables_[static_cast<std::size_t>(n)];
            cur.assign(dim_ == 1 ? w : w * w, 0.0);
            const auto& prev = tables_[static_cast<std::size_t>(n - 1)];
            std::size_t pw = static_cast<std::size_t>(2 * (n - 1) + 1);
            if (dim_ == 1) {
                for (std::size_t i = 0; i < pw; ++i) {
                    std::int64_t x = static_cast<std::int64_t>(i) - (n - 1);
                    for (const auto& [u, p] : step)
                        cur[static_cast<std::size_t>(x + u[0] + n)] += p * prev[i];
                }
            } else {
                for (std::size_t i = 0; i < pw * pw; ++i) {
                    std::int64_t x = static_cast<std::int64_t>(i / pw) - (n - 1);
                    std::int64_t y = static_cast<std::int64_t>(i % pw) - (n - 1);
                    double pv = prev[i];
                    if (pv == 0.0) continue;
                    for (const auto& [u, p] : step) {
                        std::size_t f = static_cast<std::size_t>(x + u[0] + n) * w +
                                        static_cast<std::size_t>(y + u[1] + n);
                        cur[f] += p * pv;
                    }
                }
            }
        }

        normErr_ = 0.0;
        cSup_ = 0.0;
        cLip_ = 0.0;
        cTail_ = 0.0;
        for (std::int64_t n = 1; n <= nMax_; ++n) {
            const auto& tab = tables_[static_cast<std::size_t>(n)];
            double total = 0.0, sup = 0.0;
            for (double p : tab) {
                total += p;
                sup = std::max(sup, p);
            }
            normErr_ = std::max(normErr_, std::fabs(total - 1.0));
            cSup_ = std::max(cSup_, sup * std::pow(static_cast<double>(n), dim_ / 2.0));
            // Lipschitz fit over e1-adjacent pairs.
            double lip = 0.0;
            if (dim_ == 1) {
                for (std::int64_t x = -n; x < n; ++x)
                    lip = std::max(lip, std::fabs(at(n, site(static_cast<std::int32_t>(x + 1))) -
                                                  at(n, site(static_cast<std::int32_t>(x)))));
            } else {
                for (std::int64_t x = -n; x < n; ++x)
                    for (std::int64_t y = -n; y <= n; ++y)
                        lip = std::max(lip,
                                       std::fabs(at(n, site(static_cast<std::int32_t>(x + 1),
                                                            static_cast<std::int32_t>(y))) -
                                                 at(n, site(static_cast<std::int32_t>(x),
                                                            static_cast<std::int32_t>(y)))));
            }
            cLip_ = std::max(cLip_, lip * std::pow(static_cast<double>(n), (dim_ + 1) / 2.0));
            if (n >= 3) {
                double thresh = std::sqrt(static_cast<double>(n)) * std::log(static_cast<double>(n));
                double tail = 0.0;
                if (dim_ == 1) {
                    for (std::int64_t x = -n; x <= n; ++x)
                        if (std::llabs(x) > thresh) tail += at(n, site(static_cast<std::int32_t>(x)));
                } else {
                    for (std::int64_t x = -n; x <= n; ++x)
                        for (std::int64_t y = -n; y <= n; ++y)
                            if (std::llabs(x) + std::llabs(y) > thresh)
                                tail += at(n, site(static_cast<std::int32_t>(x),
                                                   static_cast<std::int32_t>(y)));
                }
                double logn = std::log(static_cast<double>(n));
                cTail_ = std::max(cTail_, tail * std::exp(logn * logn));
            }
        }
    }

    int dim_;
    double laziness_;
    std::int64_t nMax_;
    std::vector<std::vector<double>> tables_;
    double normErr_ = 0.0, cSup_ = 0.0, cLip_ = 0.0, cTail_ = 0.0;
};

// --- L-pavings and sparse clouds ---------------------------------------------

// True iff every cell of the canonical L-paving (cells aligned at multiples of
// L) holds at most rho L^d points.
inline bool pavingSparseCheck(const std::vector<Site>& points, std::int64_t L, double rho, int dim) {
    if (L < 1) throw std::invalid_argument("pavingSparseCheck: L >= 1");
    std::map<std::array<std::int64_t, kMaxDim>, std::size_t> cells;
    for (const Site& x : points) {
        std::array<std::int64_t, kMaxDim> c{};
        for (int i = 0; i < dim; ++i) {
            std::int64_t v = x[i];
            c[static_cast<std::size_t>(i)] = (v >= 0) ? v / L : -((-v + L - 1) / L);
        }
        ++cells[c];
    }
    double cap = rho * std::pow(static_cast<double>(L), dim);
    for (const auto& [c, cnt] : cells)
        if (static_cast<double>(cnt) > cap) return false;
    return true;
}

struct IntegrationBound {
    double lhs = 0.0;
    double rhs = 0.0;
    double fittedC = 0.0;
    bool holds = false;
};

// lhs = sum_j p_n(0, x_j) against rho (1 + c L (log n)^d / sqrt(n)).
inline IntegrationBound integrationBound(const std::vector<Site>& points, std::int64_t L, double rho,
                                         std::int64_t n, const HeatKernel& hk, double c = -1.0) {
    if (n < L) throw std::invalid_argument("integrationBound: need n >= L");
    if (!pavingSparseCheck(points, L, rho, hk.dim()))
        throw std::invalid_argument("integrationBound: point cloud is not rho-sparse");
    IntegrationBound out;
    for (const Site& x : points) out.lhs += hk.at(n, x);
    double geom = static_cast<double>(L) *
                  std::pow(std::log(static_cast<double>(n)), hk.dim()) /
                  std::sqrt(static_cast<double>(n));
    out.fittedC = std::max(0.0, (out.lhs / rho - 1.0) / geom);
    if (c < 0.0) c = out.fittedC;
    out.rhs = rho * (1.0 + c * geom);
    out.holds = out.lhs <= out.rhs * (1.0 + 1e-12);
    return out;
}

// --- Soft local times ---------------------------------------------------------

struct PoissonPoint {
    std::int32_t siteIdx = 0;
    double v = 0.0;
};

struct SLTState {
    std::vector<double> xis;                 // xi_1 .. xi_J
    std::vector<double> G;                   // accumulated soft local time per site
    std::vector<std::int32_t> matchedSite;   // site index of the k-th matched point
    std::vector<std::int32_t> matchedPoint;  // index into the point list
};

// Exact infimum rule: xi_k is the k-th order statistic of the required times
// t_i = max(0, (v_i - G_{k-1}(z_i)) / g_k(z_i)); points at sites where g_k
// vanishes never bind.
inline SLTState softLocalTimes(std::size_t nSites, const std::vector<std::vector<double>>& densities,
                               const std::vector<PoissonPoint>& points) {
    const std::size_t J = densities.size();
    SLTState st;
    st.G.assign(nSites, 0.0);
    st.xis.reserve(J);
    std::vector<bool> covered(points.size(), false);
    std::vector<double> required(points.size());

    for (std::size_t k = 0; k < J; ++k) {
        const auto& g = densities[k];
        if (g.size() != nSites) throw std::invalid_argument("softLocalTimes: density size mismatch");
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto& pt = points[i];
            double slack = pt.v - st.G[static_cast<std::size_t>(pt.siteIdx)];
            double gz = g[static_cast<std::size_t>(pt.siteIdx)];
            if (slack <= 0.0) required[i] = 0.0;
            else if (gz > 0.0) required[i] = slack / gz;
            else required[i] = std::numeric_limits<double>::infinity();
        }
        std::vector<double> order(required);
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
        double xi = order[k];
        if (!std::isfinite(xi))
            throw std::runtime_error("softLocalTimes: point supply exhausted (ceiling too low)");
        // newly matched point: uncovered, required == xi, smallest index
        std::int32_t match = -1;
        for (std::size_t i = 0; i < points.size(); ++i)
            if (!covered[i] && required[i] <= xi) { match = static_cast<std::int32_t>(i); break; }
        if (match < 0) throw std::runtime_error("softLocalTimes: no uncovered point matched");
        covered[static_cast<std::size_t>(match)] = true;
        st.xis.push_back(xi);
        st.matchedPoint.push_back(match);
        st.matchedSite.push_back(points[static_cast<std::size_t>(match)].siteIdx);
        for (std::size_t z = 0; z < nSites; ++z) st.G[z] += xi * g[z];
    }
    return st;
}

// Keyed Poisson point cloud on {0..nSites-1} x [0, ceiling] with unit intensity
// per site (counting base measure).
inline std::vector<PoissonPoint> poissonPoints(std::size_t nSites, double ceiling,
                                               std::uint64_t seed, std::uint64_t replica,
                                               std::int64_t streamTag = 0) {
    std::vector<PoissonPoint> pts;
    for (std::size_t z = 0; z < nSites; ++z) {
        rnd::Substream s(seed, rnd::RandomKey::make(rnd::Stream::Replica, replica,
                                                    static_cast<std::int64_t>(z), streamTag, 0, 1));
        double v = 0.0;
        for (std::uint64_t i = 0;; ++i) {
            double u = s.at(i);
            v += -std::log1p(-u);
            if (v > ceiling) break;
            pts.push_back({static_cast<std::int32_t>(z), v});
        }
    }
    return pts;
}

// Ceiling with P(matching needs a point above it) < 1e-9 per instance.
inline double sltCeiling(std::size_t J, double maxDensity, double floorValue) {
    boost::math::gamma_distribution<double> gamma(static_cast<double>(J > 0 ? J : 1), 1.0);
    double q = boost::math::quantile(gamma, 1.0 - 1e-10);
    return std::max(floorValue, q * maxDensity) + 1.0;
}

// --- Coupling experiment -------------------------------------------------------

struct CouplingOutcome {
    bool dominated = false;
    double supG = 0.0;           // over H'
    bool qineqApplicable = false;  // supG <= rhoPrime
    bool qineqHeld = true;         // domination when applicable
};

// One coupling replica: walkers started at x_j run n steps
// (their endpoint law is p_n(x_j, .)), matched against a Poisson cloud via
// soft local times; domination of the endpoint measure restricted to H' is
// checked exactly at each threshold in rhoPrimes. All thresholds share the
// same realization.
inline std::vector<CouplingOutcome> coupleSrwPoisson(const std::vector<Site>& starts,
                                                     std::int64_t n,
                                                     const std::vector<double>& rhoPrimes,
                                                     const std::vector<Site>& hPrime,
                                                     const HeatKernel& hk, std::uint64_t seed,
                                                     std::uint64_t replica) {
    if (hk.dim() != 1) throw std::invalid_argument("coupleSrwPoisson: implemented for d=1");
    std::int32_t lo = 0, hi = 0;
    for (const Site& x : starts) {
        lo = std::min(lo, x[0]);
        hi = std::max(hi, x[0]);
    }
    for (const Site& x : hPrime) {
        lo = std::min(lo, x[0]);
        hi = std::max(hi, x[0]);
    }
    lo -= static_cast<std::int32_t>(n);
    hi += static_cast<std::int32_t>(n);
    const std::size_t nSites = static_cast<std::size_t>(hi - lo + 1);

    std::vector<std::vector<double>> densities(starts.size());
    double maxG = 0.0;
    for (std::size_t j = 0; j < starts.size(); ++j) {
        densities[j].assign(nSites, 0.0);
        for (std::size_t z = 0; z < nSites; ++z) {
            Site rel = site(static_cast<std::int32_t>(static_cast<std::int64_t>(lo) +
                                                      static_cast<std::int64_t>(z) - starts[j][0]));
            densities[j][z] = hk.at(n, rel);
            maxG = std::max(maxG, densities[j][z]);
        }
    }

    double maxRhoPrime = *std::max_element(rhoPrimes.begin(), rhoPrimes.end());
    double ceiling = sltCeiling(starts.size(), maxG, maxRhoPrime);
    auto pts = poissonPoints(nSites, ceiling, seed, replica);
    auto st = softLocalTimes(nSites, densities, pts);

    std::vector<std::int32_t> sampleCount(nSites, 0);
    for (std::int32_t z : st.matchedSite) ++sampleCount[static_cast<std::size_t>(z)];
    double supG = 0.0;
    for (const Site& x : hPrime)
        supG = std::max(supG, st.G[static_cast<std::size_t>(x[0] - lo)]);

    std::vector<CouplingOutcome> outs;
    for (double rhoPrime : rhoPrimes) {
        std::vector<std::int32_t> cloudCount(nSites, 0);
        for (const auto& pt : pts)
            if (pt.v < rhoPrime) ++cloudCount[static_cast<std::size_t>(pt.siteIdx)];
        CouplingOutcome out;
        out.supG = supG;
        out.dominated = true;
        for (const Site& x : hPrime) {
            std::size_t z = static_cast<std::size_t>(x[0] - lo);
            if (sampleCount[z] > cloudCount[z]) out.dominated = false;
        }
        out.qineqApplicable = supG <= rhoPrime;
        out.qineqHeld = !out.qineqApplicable || out.dominated;
        outs.push_back(out);
    }
    return outs;
}

inline CouplingOutcome coupleSrwPoissonOnce(const std::vector<Site>& starts, std::int64_t n,
                                            double rhoPrime, const std::vector<Site>& hPrime,
                                            const HeatKernel& hk, std::uint64_t seed,
                                            std::uint64_t replica) {
    return coupleSrwPoisson(starts, n, {rhoPrime}, hPrime, hk, seed, replica).front();
}

} // namespace rwdre::slt
