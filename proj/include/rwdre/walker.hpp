#pragma once

// The random walker Y on a realized environment: step selection through the
// interval partitions, quenched drift ledger, martingale residual and record
// times.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rwdre/kernel.hpp"
#include "rwdre/lattice.hpp"

namespace rwdre::walker {

struct WalkerPath {
    Point origin;
    std::vector<Site> positions;       // positions[l] = X_{t0 + l}, spatial part
    std::vector<std::int32_t> occupationSeen;
    std::vector<double> driftLedger;   // quenched local e1-drift at each visited point

    std::int64_t steps() const { return static_cast<std::int64_t>(positions.size()) - 1; }
    Site displacement(std::int64_t l) const { return positions[static_cast<std::size_t>(l)] - positions[0]; }
};

struct WindowExceeded : std::runtime_error {
    std::int64_t step;
    WindowExceeded(std::int64_t s, const std::string& what)
        : std::runtime_error(what), step(s) {}
};

// Quenched local drift d_omega(y) = sum_u (u.e1) alpha(N(y), u).
inline double quenchedDrift(const kernel::Kernel& k, std::int64_t occupation) {
    const auto& row = k.rows()[k.rowIndexFor(occupation)];
    double d = 0.0;
    for (const auto& [x, p] : row.steps) d += p * static_cast<double>(x[0]);
    return d;
}

// Env must provide occupation(Site, t) -> int and uniform(Site, t) -> double.
template <class Env>
WalkerPath evolve(const Env& environment, const kernel::Kernel& k,
                  const kernel::IntervalPartition& partition, const Point& y0, std::int64_t steps) {
    WalkerPath path;
    path.origin = y0;
    path.positions.reserve(static_cast<std::size_t>(steps) + 1);
    path.occupationSeen.reserve(static_cast<std::size_t>(steps));
    path.driftLedger.reserve(static_cast<std::size_t>(steps));

    Site pos = y0.x;
    path.positions.push_back(pos);
    for (std::int64_t l = 0; l < steps; ++l) {
        std::int64_t t = y0.t + l;
        std::int32_t n;
        double u;
        try {
            n = environment.occupation(pos, t);
            u = environment.uniform(pos, t);
        } catch (const std::out_of_range&) {
            throw WindowExceeded(l, "walker: path exits window at step " + std::to_string(l));
        }
        path.occupationSeen.push_back(n);
        path.driftLedger.push_back(quenchedDrift(k, n));
        pos = pos + partition.sampleStep(n, u);
        path.positions.push_back(pos);
    }
    return path;
}

// M_l = (X_l - X_0).e1 - sum_{k<l} d_omega(Y_k); a zero-mean martingale with
// increments bounded by 2R under the quenched law.
inline std::vector<double> martingaleResidual(const WalkerPath& path) {
    std::vector<double> m;
    m.reserve(path.positions.size());
    m.push_back(0.0);
    double driftSum = 0.0;
    for (std::size_t l = 1; l < path.positions.size(); ++l) {
        driftSum += path.driftLedger[l - 1];
        m.push_back(static_cast<double>((path.positions[l] - path.positions[0])[0]) - driftSum);
    }
    return m;
}

// Record times: R_0 = 0, R_{k+1} = min{n > R_k : (X_n - X_{R_k}).e1 > vbar (n - R_k)}.
inline std::vector<std::int64_t> recordTimes(const WalkerPath& path, double vbar) {
    if (path.positions.empty()) throw std::invalid_argument("recordTimes: empty path");
    std::vector<std::int64_t> records{0};
    std::int64_t last = 0;
    for (std::int64_t n = 1; n <= path.steps(); ++n) {
        double gain = static_cast<double>((path.positions[static_cast<std::size_t>(n)] -
                                           path.positions[static_cast<std::size_t>(last)])[0]);
        if (gain > vbar * static_cast<double>(n - last)) {
            records.push_back(n);
            last = n;
        }
    }
    return records;
}

// Adapters over the environment storage modes.

template <class EnvWindow>
struct DenseEnvView {
    const EnvWindow& env;
    std::int32_t occupation(const Site& x, std::int64_t t) const { return env.occupation({x, t}); }
    double uniform(const Site& x, std::int64_t t) const { return env.uniformAt({x, t}); }
};

template <class EnvWindow>
struct TubeEnvView {
    const EnvWindow& env;
    std::int32_t occupation(const Site& x, std::int64_t t) const { return env.occupationTube(x[0], t); }
    double uniform(const Site& x, std::int64_t t) const {
        return rnd::uniform(env.config().seed, env.uniformKey({x, t}));
    }
};

} // namespace rwdre::walker
