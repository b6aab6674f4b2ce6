#pragma once

// Regeneration structure on simulated realizations: the record-index scan with
// cone and trajectory-class conditions, block extraction, velocity and
// covariance estimators, renewal diagnostics and the influence field.

#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "rwdre/environment.hpp"
#include "rwdre/kernel.hpp"
#include "rwdre/lattice.hpp"
#include "rwdre/stats.hpp"
#include "rwdre/walker.hpp"

namespace rwdre::regen {

struct RegenConfig {
    double vStar = 0.25;
    double vbar = 0.0;             // 0 -> default (1/3) min(vStar, 1/2)
    std::int64_t coneCheckHorizon = 250;  // T_c
    int range = 1;

    double effectiveVbar() const {
        if (vbar > 0.0) return vbar;
        return (std::min(vStar, 0.5)) / 3.0;
    }
};

struct RegenBlock {
    std::int64_t tau = 0;
    Site displacement{};
    bool truncated = false;
    std::int32_t index = 0;        // 0 = first block of the replica
    std::uint64_t replica = 0;
};

struct RegenScan {
    std::vector<RegenBlock> blocks;
    bool timeZeroConditionsHold = false;   // omega(W_cross at origin) = 0 and path-in-cone
    bool timeZeroTruncated = false;
    std::size_t recordsChecked = 0;
    std::size_t pathConeFailures = 0;
    std::size_t crossFailures = 0;
};

namespace detail {

// Walker stays in the forward cone at (X_r, r) for coneCheckHorizon steps.
inline bool pathStaysInCone(const walker::WalkerPath& path, std::int64_t r, double vbar,
                            int range, std::int64_t horizon, bool* truncated) {
    std::int64_t T = path.steps();
    if (T - r < horizon) *truncated = true;
    std::int64_t end = std::min(T, r + horizon);
    const Site& base = path.positions[static_cast<std::size_t>(r)];
    for (std::int64_t i = r; i <= end; ++i) {
        if (!inForwardCone(path.positions[static_cast<std::size_t>(i)] - base, i - r, vbar, range))
            return false;
    }
    return true;
}

} // namespace detail

// Scan record times in order; at each record require (i) no trajectory is
// Cross-classified there and (ii) the walker path stays in the forward cone
// for T_c steps. Each success closes a block and restarts the scan from tau.
inline RegenScan findRegeneration(const env::EnvironmentWindow& environment,
                                  const walker::WalkerPath& path, const RegenConfig& cfg) {
    if (environment.config().Tpast < environment.config().T)
        throw std::invalid_argument("findRegeneration: needs Tpast >= T for backward wedges");
    const double vbar = cfg.effectiveVbar();
    RegenScan out;
    const std::int64_t T = path.steps();
    std::int64_t segStart = 0;
    std::int64_t last = 0;

    auto conditionsAt = [&](std::int64_t r, bool* truncated) {
        ++out.recordsChecked;
        bool pathTrunc = false;
        if (!detail::pathStaysInCone(path, r, vbar, cfg.range, cfg.coneCheckHorizon, &pathTrunc)) {
            ++out.pathConeFailures;
            return false;
        }
        Point y{path.positions[static_cast<std::size_t>(r)], path.origin.t + r};
        auto cc = environment.crossAt(y, cfg.coneCheckHorizon, cfg.range);
        *truncated = pathTrunc || cc.truncated;
        if (cc.cross) {
            ++out.crossFailures;
            return false;
        }
        return true;
    };

    {
        bool trunc = false;
        out.timeZeroConditionsHold = conditionsAt(0, &trunc);
        out.timeZeroTruncated = trunc;
    }

    for (std::int64_t n = 1; n <= T; ++n) {
        double gain = static_cast<double>((path.positions[static_cast<std::size_t>(n)] -
                                           path.positions[static_cast<std::size_t>(last)])[0]);
        if (!(gain > vbar * static_cast<double>(n - last))) continue;
        bool trunc = false;
        bool ok = conditionsAt(n, &trunc);
        if (ok) {
            RegenBlock b;
            b.tau = n - segStart;
            b.displacement = path.positions[static_cast<std::size_t>(n)] -
                             path.positions[static_cast<std::size_t>(segStart)];
            b.truncated = trunc;
            b.index = static_cast<std::int32_t>(out.blocks.size());
            out.blocks.push_back(b);
            segStart = n;
        }
        last = n;
    }
    return out;
}

struct VelocityEstimate {
    std::array<double, kMaxDim> v{};
    std::array<double, kMaxDim> se{};
    std::size_t used = 0;
    std::size_t truncatedExcluded = 0;
};

inline VelocityEstimate velocityEstimate(const std::vector<RegenBlock>& blocks,
                                         std::size_t minBlocks = 30) {
    std::vector<double> taus;
    std::size_t excluded = 0;
    for (const auto& b : blocks) {
        if (b.truncated) { ++excluded; continue; }
        taus.push_back(static_cast<double>(b.tau));
    }
    if (taus.size() < minBlocks)
        throw std::runtime_error("velocityEstimate: insufficient untruncated blocks (" +
                                 std::to_string(taus.size()) + ")");
    VelocityEstimate est;
    est.used = taus.size();
    est.truncatedExcluded = excluded;
    for (int i = 0; i < kMaxDim; ++i) {
        std::vector<double> nums;
        nums.reserve(taus.size());
        for (const auto& b : blocks)
            if (!b.truncated) nums.push_back(static_cast<double>(b.displacement[i]));
        auto r = stats::ratioEstimator(nums, taus);
        est.v[static_cast<std::size_t>(i)] = r.ratio;
        est.se[static_cast<std::size_t>(i)] = r.se;
    }
    return est;
}

struct CovarianceEstimate {
    std::array<std::array<double, kMaxDim>, kMaxDim> sigma{};
    std::size_t used = 0;
};

inline CovarianceEstimate covarianceEstimate(const std::vector<RegenBlock>& blocks,
                                             const VelocityEstimate& vel,
                                             std::size_t minBlocks = 100) {
    CovarianceEstimate est;
    double meanTau = 0.0;
    for (const auto& b : blocks) {
        if (b.truncated) continue;
        ++est.used;
        meanTau += static_cast<double>(b.tau);
    }
    if (est.used < minBlocks)
        throw std::runtime_error("covarianceEstimate: insufficient untruncated blocks");
    meanTau /= static_cast<double>(est.used);
    for (const auto& b : blocks) {
        if (b.truncated) continue;
        for (int i = 0; i < kMaxDim; ++i)
            for (int j = 0; j < kMaxDim; ++j) {
                double di = static_cast<double>(b.displacement[i]) -
                            vel.v[static_cast<std::size_t>(i)] * static_cast<double>(b.tau);
                double dj = static_cast<double>(b.displacement[j]) -
                            vel.v[static_cast<std::size_t>(j)] * static_cast<double>(b.tau);
                est.sigma[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
                    di * dj / (meanTau * static_cast<double>(est.used));
            }
    }
    return est;
}

struct IidDiagnostics {
    double lag1Tau = 0.0;
    double lag1Disp = 0.0;
    double nullBand = 0.0;         // ~ z_{0.995} / sqrt(pairs)
    stats::GateResult splitKsTau;
    stats::GateResult splitKsDisp;
    bool pass = false;
};

// Lag-1 autocorrelations within replicas plus a split-half two-sample KS.
inline IidDiagnostics iidDiagnostics(const std::vector<std::vector<RegenBlock>>& perReplica,
                                     double alpha = 0.01) {
    std::vector<std::vector<double>> tauSeqs, dispSeqs;
    std::vector<double> allTau, allDisp;
    for (const auto& blocks : perReplica) {
        std::vector<double> ts, ds;
        for (const auto& b : blocks) {
            if (b.truncated) continue;
            ts.push_back(static_cast<double>(b.tau));
            ds.push_back(static_cast<double>(b.displacement[0]));
            allTau.push_back(ts.back());
            allDisp.push_back(ds.back());
        }
        if (!ts.empty()) {
            tauSeqs.push_back(std::move(ts));
            dispSeqs.push_back(std::move(ds));
        }
    }
    if (allTau.size() < 100) throw std::runtime_error("iidDiagnostics: need >= 100 blocks");

    IidDiagnostics d;
    std::size_t pairs = 0;
    d.lag1Tau = stats::lag1Autocorrelation(tauSeqs, &pairs);
    d.lag1Disp = stats::lag1Autocorrelation(dispSeqs);
    d.nullBand = stats::normalQuantile(1.0 - alpha / 2.0) / std::sqrt(static_cast<double>(pairs));

    std::size_t half = allTau.size() / 2;
    d.splitKsTau = stats::ksTwoSample({allTau.begin(), allTau.begin() + static_cast<std::ptrdiff_t>(half)},
                                      {allTau.begin() + static_cast<std::ptrdiff_t>(half), allTau.end()},
                                      alpha, "split-ks-tau");
    d.splitKsDisp = stats::ksTwoSample({allDisp.begin(), allDisp.begin() + static_cast<std::ptrdiff_t>(half)},
                                       {allDisp.begin() + static_cast<std::ptrdiff_t>(half), allDisp.end()},
                                       alpha, "split-ks-disp");
    d.pass = std::fabs(d.lag1Tau) <= d.nullBand && std::fabs(d.lag1Disp) <= d.nullBand &&
             d.splitKsTau.pass && d.splitKsDisp.pass;
    return d;
}

struct InfluenceValue {
    std::int64_t h = 0;
    bool capped = false;
};

// h(y) = inf{ l : no trajectory is Cross-classified at both y and y + (l x., l) },
// evaluated on materialized trajectories and capped at `horizon`.
inline InfluenceValue influenceFieldFromTrajectories(const std::vector<env::Trajectory>& trajs,
                                                     const Point& y, const Site& xBullet,
                                                     double vbar, int range, std::int64_t horizon,
                                                     std::int64_t coneHorizon) {
    std::set<std::size_t> crossersAtY;
    for (std::size_t j = 0; j < trajs.size(); ++j)
        if (env::classifyTrajectory(trajs[j], y, vbar, range, coneHorizon).kind ==
            env::TrajectoryClass::Cross)
            crossersAtY.insert(j);

    for (std::int64_t l = 0; l <= horizon; ++l) {
        Point yl{y.x, y.t + l};
        for (int i = 0; i < kMaxDim; ++i)
            yl.x[i] = static_cast<std::int32_t>(y.x[i] + l * xBullet[i]);
        bool empty = true;
        for (std::size_t j : crossersAtY) {
            if (env::classifyTrajectory(trajs[j], yl, vbar, range, coneHorizon).kind ==
                env::TrajectoryClass::Cross) {
                empty = false;
                break;
            }
        }
        if (empty) return {l, false};
    }
    return {horizon, true};
}

inline InfluenceValue influenceField(const env::EnvironmentWindow& environment, const Point& y,
                                     const Site& xBullet, double vbar, int range,
                                     std::int64_t horizon, std::int64_t coneHorizon) {
    const auto& cfg = environment.config();
    std::vector<env::Trajectory> trajs;
    trajs.reserve(environment.particleCount());
    for (std::size_t j = 0; j < environment.particleCount(); ++j)
        trajs.push_back(environment.materialize(j, -cfg.Tpast, cfg.T));
    return influenceFieldFromTrajectories(trajs, y, xBullet, vbar, range, horizon, coneHorizon);
}

} // namespace rwdre::regen
