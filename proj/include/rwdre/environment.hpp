#pragma once

// Poisson cloud of double-sided simple random walk trajectories over a finite
// space-time window, with the occupation field N and the uniform field U.
// Generation is exact on the requested window: every particle that can touch
// it is generated (starts within l1 distance T + Tpast of the window).
//
// Storage modes, chosen by the experiment:
//  - dense occupation field over the window (small boxes);
//  - per-time tube strips around an origin (d=1 walker runs);
//  - per-particle checkpoint summaries for cone/crossing scans (regeneration).

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rwdre/lattice.hpp"
#include "rwdre/random.hpp"

namespace rwdre::env {

struct ResourceError : std::runtime_error {
    std::size_t requiredBytes;
    explicit ResourceError(const std::string& what, std::size_t bytes)
        : std::runtime_error(what + " (required bytes ~" + std::to_string(bytes) + ")"),
          requiredBytes(bytes) {}
};

struct EnvConfig {
    int dim = 1;
    double rho = 1.0;
    double laziness = 0.5;          // per-step hold probability of cloud particles
    Site boxLo{};                   // spatial window, inclusive
    Site boxHi{};
    std::int64_t T = 0;             // forward time horizon
    std::int64_t Tpast = 0;         // backward time horizon
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
    std::size_t memoryBudgetBytes = std::size_t(2) << 30;

    bool wantDenseField = true;
    bool wantTube = false;          // d=1 only: strips of radius tubeRange*t around origin
    int tubeRange = 1;
    bool wantSummaries = false;     // checkpoint positions + backward-wedge prefix minima
    double vbar = 0.0;              // slope used by the prefix minima and cone checks
    int checkpointStride = 128;

    static EnvConfig centered(int dim, double rho, std::int64_t A, std::int64_t T,
                              std::int64_t Tpast = 0) {
        EnvConfig c;
        c.dim = dim;
        c.rho = rho;
        c.T = T;
        c.Tpast = Tpast;
        for (int i = 0; i < dim; ++i) {
            c.boxLo[i] = static_cast<std::int32_t>(-A);
            c.boxHi[i] = static_cast<std::int32_t>(A);
        }
        return c;
    }
};

// One materialized trajectory over [tMin, tMax].
struct Trajectory {
    Site start;
    std::int32_t index = 0;         // 1-based index among particles started at `start`
    std::int64_t tMin = 0;
    std::int64_t tMax = 0;
    std::vector<Site> positions;    // positions[t - tMin]

    const Site& at(std::int64_t t) const {
        return positions[static_cast<std::size_t>(t - tMin)];
    }
};

enum class TrajectoryClass { Angle, Inverted, Cross, Neither };

struct Classification {
    TrajectoryClass kind = TrajectoryClass::Neither;
    bool truncated = false;
};

// Membership of a materialized trajectory in the cone pair at y, scanned over
// all materialized times; forward cone membership is tested up to coneHorizon
// steps ahead of y. The truncated flag reports that an unhit side ran out of
// materialized data before reaching coneHorizon.
inline Classification classifyTrajectory(const Trajectory& w, const Point& y, double vbar,
                                         int range, std::int64_t coneHorizon) {
    bool hitAngle = false, hitInv = false;
    for (std::int64_t t = w.tMin; t <= w.tMax; ++t) {
        std::int64_t n = t - y.t;
        Site rel = w.at(t) - y.x;
        if (n >= 0 && n <= coneHorizon && inForwardCone(rel, n, vbar, range)) hitAngle = true;
        if (n <= 0 && inBackwardWedge(rel, n, vbar)) hitInv = true;
        if (hitAngle && hitInv) break;
    }
    Classification c;
    if (hitAngle && hitInv) c.kind = TrajectoryClass::Cross;
    else if (hitAngle) c.kind = TrajectoryClass::Angle;
    else if (hitInv) c.kind = TrajectoryClass::Inverted;
    bool fwdShort = w.tMax - y.t < coneHorizon;
    bool bwdShort = y.t - w.tMin < coneHorizon;
    c.truncated = (!hitAngle && fwdShort) || (!hitInv && bwdShort);
    return c;
}

struct CrossCheck {
    bool cross = false;
    bool truncated = false;
};

namespace detail {

inline Site cloudStep(std::uint64_t bits, double laziness, int dim) {
    double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
    Site s{};
    if (u < laziness) return s;
    double r = (u - laziness) / (1.0 - laziness);
    int dir = std::min(2 * dim - 1, static_cast<int>(r * 2 * dim));
    s[dir / 2] = (dir % 2 == 0) ? 1 : -1;
    return s;
}

} // namespace detail

class EnvironmentWindow {
public:
    explicit EnvironmentWindow(const EnvConfig& cfg) : cfg_(cfg) {
        if (cfg_.dim < 1 || cfg_.dim > kMaxDim) throw std::invalid_argument("env: dim out of range");
        if (cfg_.rho < 0.0) throw std::invalid_argument("env: rho must be >= 0");
        if (cfg_.T < 0 || cfg_.Tpast < 0) throw std::invalid_argument("env: negative horizon");
        if (cfg_.wantTube && cfg_.dim != 1)
            throw std::invalid_argument("env: tube storage is implemented for d=1");
        margin_ = cfg_.T + cfg_.Tpast;
        for (int i = 0; i < cfg_.dim; ++i) {
            genLo_[i] = cfg_.boxLo[i] - static_cast<std::int32_t>(margin_);
            genHi_[i] = cfg_.boxHi[i] + static_cast<std::int32_t>(margin_);
        }
        checkBudget();
        enumerateParticles();
        allocateStorage();
        streamParticles();
    }

    const EnvConfig& config() const { return cfg_; }
    std::size_t particleCount() const { return startSite_.size(); }
    Site particleStart(std::size_t j) const { return startSite_[j]; }
    std::int32_t particleIndex(std::size_t j) const { return startIdx_[j]; }

    bool inWindow(const Point& y) const {
        if (y.t < -cfg_.Tpast || y.t > cfg_.T) return false;
        for (int i = 0; i < cfg_.dim; ++i)
            if (y.x[i] < cfg_.boxLo[i] || y.x[i] > cfg_.boxHi[i]) return false;
        return true;
    }

    // N(y) from the dense field.
    std::int32_t occupation(const Point& y) const {
        if (!cfg_.wantDenseField) throw std::logic_error("env: dense field not materialized");
        if (!inWindow(y)) throw std::out_of_range("env: occupation query outside window");
        return dense_[denseIndex(y.x, y.t)];
    }

    // N(x, t) from the tube strips (d=1, |x| <= tubeRange*t).
    std::int32_t occupationTube(std::int64_t x, std::int64_t t) const {
        const auto& strip = tube_[static_cast<std::size_t>(t)];
        std::int64_t radius = static_cast<std::int64_t>(strip.size() / 2);
        if (x < -radius || x > radius)
            throw std::out_of_range("env: tube query outside strip");
        return strip[static_cast<std::size_t>(x + radius)];
    }
    bool hasTube() const { return cfg_.wantTube; }

    double uniformAt(const Point& y) const {
        if (!inWindow(y)) throw std::out_of_range("env: uniformAt outside window");
        return rnd::uniform(cfg_.seed, uniformKey(y));
    }

    rnd::RandomKey uniformKey(const Point& y) const {
        return rnd::RandomKey::make(rnd::Stream::UniformField, cfg_.replica,
                                    y.x[0], y.x[1], y.x[2], y.t);
    }

    Trajectory materialize(std::size_t j, std::int64_t t0, std::int64_t t1) const {
        if (t0 < -cfg_.Tpast || t1 > cfg_.T || t0 > t1)
            throw std::out_of_range("env: materialize range outside horizons");
        Trajectory w;
        w.start = startSite_[j];
        w.index = startIdx_[j];
        w.tMin = t0;
        w.tMax = t1;
        w.positions.resize(static_cast<std::size_t>(t1 - t0 + 1));
        Site pos = startSite_[j];
        if (t0 < 0) {
            auto past = pastStream(j);
            for (std::int64_t l = 1; l <= -t0; ++l) {
                pos = pos + detail::cloudStep(past.bitsAt(static_cast<std::uint64_t>(l)),
                                              cfg_.laziness, cfg_.dim);
                if (-l >= t0 && -l <= t1) w.positions[static_cast<std::size_t>(-l - t0)] = pos;
            }
            pos = startSite_[j];
        }
        if (t0 <= 0 && t1 >= 0) w.positions[static_cast<std::size_t>(-t0)] = pos;
        auto fut = futureStream(j);
        for (std::int64_t l = 1; l <= t1; ++l) {
            pos = pos + detail::cloudStep(fut.bitsAt(static_cast<std::uint64_t>(l)),
                                          cfg_.laziness, cfg_.dim);
            if (l >= t0) w.positions[static_cast<std::size_t>(l - t0)] = pos;
        }
        return w;
    }

    // Does any trajectory intersect both the forward cone and the backward
    // wedge at y? Forward membership is scanned coneHorizon steps ahead;
    // backward membership uses the full generated past via prefix minima.
    CrossCheck crossAt(const Point& y, std::int64_t coneHorizon, int range) const {
        if (!cfg_.wantSummaries) throw std::logic_error("env: summaries not materialized");
        CrossCheck out;
        std::int64_t fwdDepth = std::max<std::int64_t>(0, std::min(coneHorizon, cfg_.T - y.t));
        out.truncated = (cfg_.T - y.t < coneHorizon) || (y.t + cfg_.Tpast < coneHorizon);
        const double theta = static_cast<double>(y.x[0]) - cfg_.vbar * static_cast<double>(y.t);
        const std::size_t chk = floorCheckpoint(y.t);
        const std::int64_t chkTime = checkpointTime(chk);
        const std::int64_t posSlack = (y.t - chkTime);
        const std::int64_t rejectRadius =
            (static_cast<std::int64_t>(range) + 1) * fwdDepth + posSlack;

        // Nearest candidates first: when a crossing trajectory exists it is
        // almost always close to y, so the scan usually exits early.
        std::vector<std::pair<std::int64_t, std::size_t>> candidates;
        for (std::size_t j = 0; j < startSite_.size(); ++j) {
            std::int64_t dist = l1(checkpointPos(j, chk) - y.x);
            if (dist <= rejectRadius) candidates.push_back({dist, j});
        }
        std::sort(candidates.begin(), candidates.end());

        for (const auto& [dist, j] : candidates) {
            Site pChk = checkpointPos(j, chk);
            Walkalong walk{*this, j};

            // Backward wedge: prefix minimum of e1(s) - vbar*s over s <= y.t.
            double m = prefMin_[j * nChk_ + chk];
            if (m >= theta) {
                double base = static_cast<double>(pChk[0]) - cfg_.vbar * static_cast<double>(chkTime);
                double tailLb = base - (1.0 + cfg_.vbar) * static_cast<double>(posSlack);
                if (tailLb >= theta) continue;  // tail cannot dip below the wedge
                Site pos = pChk;
                bool hit = false;
                for (std::int64_t s = chkTime; s < y.t;) {
                    walk.advance(s, pos);
                    ++s;
                    double val = static_cast<double>(pos[0]) - cfg_.vbar * static_cast<double>(s);
                    if (val < m) m = val;
                    if (m < theta) { hit = true; break; }
                }
                if (!hit) continue;
            }

            // Forward cone scan from y.t to y.t + fwdDepth.
            Site pos = pChk;
            std::int64_t s = chkTime;
            while (s < y.t) { walk.advance(s, pos); ++s; }
            for (std::int64_t n = 0; n <= fwdDepth; ++n) {
                if (inForwardCone(pos - y.x, n, cfg_.vbar, range)) {
                    out.cross = true;
                    return out;
                }
                if (n < fwdDepth) { walk.advance(s, pos); ++s; }
            }
        }
        return out;
    }

    // Exact e1 prefix minimum min_{s in [-Tpast, t]} (e1(s) - vbar*s) for one particle.
    double wedgeStatistic(std::size_t j, std::int64_t t) const {
        std::size_t chk = floorCheckpoint(t);
        double m = prefMin_[j * nChk_ + chk];
        Site pos = checkpointPos(j, chk);
        Walkalong walk{*this, j};
        for (std::int64_t s = checkpointTime(chk); s < t;) {
            walk.advance(s, pos);
            ++s;
            m = std::min(m, static_cast<double>(pos[0]) - cfg_.vbar * static_cast<double>(s));
        }
        return m;
    }

private:
    void checkBudget() {
        std::size_t genSites = 1;
        for (int i = 0; i < cfg_.dim; ++i)
            genSites *= static_cast<std::size_t>(genHi_[i] - genLo_[i] + 1);
        std::size_t particles = static_cast<std::size_t>(cfg_.rho * static_cast<double>(genSites)) + 64;
        std::size_t bytes = particles * (sizeof(Site) + 4);
        if (cfg_.wantDenseField) {
            std::size_t winSites = 1;
            for (int i = 0; i < cfg_.dim; ++i)
                winSites *= static_cast<std::size_t>(cfg_.boxHi[i] - cfg_.boxLo[i] + 1);
            bytes += winSites * static_cast<std::size_t>(cfg_.T + cfg_.Tpast + 1) * sizeof(std::int32_t);
        }
        if (cfg_.wantTube)
            bytes += static_cast<std::size_t>(cfg_.tubeRange) *
                     static_cast<std::size_t>(cfg_.T + 1) * static_cast<std::size_t>(cfg_.T + 1) *
                     sizeof(std::int32_t);
        if (cfg_.wantSummaries) {
            std::size_t nChk = static_cast<std::size_t>((cfg_.T + cfg_.Tpast) / cfg_.checkpointStride + 1);
            bytes += particles * nChk * (sizeof(Site) + sizeof(double));
        }
        if (bytes > cfg_.memoryBudgetBytes)
            throw ResourceError("env: window exceeds memory budget", bytes);
    }

    void enumerateParticles() {
        Site z = genLo_;
        for (;;) {
            auto key = rnd::RandomKey::make(rnd::Stream::InitialCount, cfg_.replica,
                                            z[0], z[1], z[2]);
            std::int64_t n = rnd::poisson(cfg_.seed, key, cfg_.rho);
            for (std::int64_t i = 1; i <= n; ++i) {
                startSite_.push_back(z);
                startIdx_.push_back(static_cast<std::int32_t>(i));
            }
            int axis = 0;
            while (axis < cfg_.dim) {
                if (z[axis] < genHi_[axis]) { ++z[axis]; break; }
                z[axis] = genLo_[axis];
                ++axis;
            }
            if (axis == cfg_.dim) break;
        }
    }

    void allocateStorage() {
        if (cfg_.wantDenseField) {
            winSize_ = 1;
            for (int i = 0; i < cfg_.dim; ++i)
                winSize_ *= static_cast<std::size_t>(cfg_.boxHi[i] - cfg_.boxLo[i] + 1);
            dense_.assign(winSize_ * static_cast<std::size_t>(cfg_.T + cfg_.Tpast + 1), 0);
        }
        if (cfg_.wantTube) {
            tube_.resize(static_cast<std::size_t>(cfg_.T + 1));
            for (std::int64_t t = 0; t <= cfg_.T; ++t)
                tube_[static_cast<std::size_t>(t)]
                    .assign(static_cast<std::size_t>(2 * cfg_.tubeRange * t + 1), 0);
        }
        if (cfg_.wantSummaries) {
            nChk_ = static_cast<std::size_t>((cfg_.T + cfg_.Tpast) / cfg_.checkpointStride + 1);
            chkPos_.assign(startSite_.size() * nChk_, Site{});
            prefMin_.assign(startSite_.size() * nChk_, 0.0);
        }
    }

    void streamParticles() {
        std::vector<double> wedgeBuf;
        if (cfg_.wantSummaries) wedgeBuf.resize(static_cast<std::size_t>(cfg_.Tpast) + 1);
        std::vector<Site> pastPos;
        if (cfg_.wantSummaries && cfg_.Tpast > 0)
            pastPos.resize(static_cast<std::size_t>(cfg_.Tpast) + 1);

        for (std::size_t j = 0; j < startSite_.size(); ++j) {
            Site z = startSite_[j];
            // Past sweep.
            if (cfg_.Tpast > 0 || cfg_.wantSummaries) {
                Site pos = z;
                if (!pastPos.empty()) pastPos[0] = pos;
                recordDense(pos, 0);  // t = 0 recorded here once
                auto past = pastStream(j);
                for (std::int64_t l = 1; l <= cfg_.Tpast; ++l) {
                    pos = pos + detail::cloudStep(past.bitsAt(static_cast<std::uint64_t>(l)),
                                                  cfg_.laziness, cfg_.dim);
                    recordDense(pos, -l);
                    if (!pastPos.empty()) pastPos[static_cast<std::size_t>(l)] = pos;
                }
            } else {
                recordDense(z, 0);
            }

            double runMin = std::numeric_limits<double>::infinity();
            if (cfg_.wantSummaries) {
                // Ascending prefix of e1(s) - vbar*s from s = -Tpast.
                for (std::int64_t s = -cfg_.Tpast; s <= 0; ++s) {
                    const Site& p = pastPos.empty() ? z : pastPos[static_cast<std::size_t>(-s)];
                    double val = static_cast<double>(p[0]) - cfg_.vbar * static_cast<double>(s);
                    if (val < runMin) runMin = val;
                    maybeCheckpoint(j, s, p, runMin);
                }
            }

            if (cfg_.wantTube && z[0] == 0) tube_[0][0] += 1;

            Site pos = z;
            auto fut = futureStream(j);
            for (std::int64_t t = 1; t <= cfg_.T; ++t) {
                pos = pos + detail::cloudStep(fut.bitsAt(static_cast<std::uint64_t>(t)),
                                              cfg_.laziness, cfg_.dim);
                recordDense(pos, t);
                if (cfg_.wantTube) {
                    std::int64_t radius = static_cast<std::int64_t>(cfg_.tubeRange) * t;
                    if (pos[0] >= -radius && pos[0] <= radius)
                        tube_[static_cast<std::size_t>(t)][static_cast<std::size_t>(pos[0] + radius)] += 1;
                }
                if (cfg_.wantSummaries) {
                    double val = static_cast<double>(pos[0]) - cfg_.vbar * static_cast<double>(t);
                    if (val < runMin) runMin = val;
                    maybeCheckpoint(j, t, pos, runMin);
                }
            }
        }
    }

    void recordDense(const Site& pos, std::int64_t t) {
        if (!cfg_.wantDenseField) return;
        for (int i = 0; i < cfg_.dim; ++i)
            if (pos[i] < cfg_.boxLo[i] || pos[i] > cfg_.boxHi[i]) return;
        dense_[denseIndex(pos, t)] += 1;
    }

    std::size_t denseIndex(const Site& x, std::int64_t t) const {
        std::size_t flat = 0;
        for (int i = cfg_.dim - 1; i >= 0; --i)
            flat = flat * static_cast<std::size_t>(cfg_.boxHi[i] - cfg_.boxLo[i] + 1) +
                   static_cast<std::size_t>(x[i] - cfg_.boxLo[i]);
        return static_cast<std::size_t>(t + cfg_.Tpast) * winSize_ + flat;
    }

    void maybeCheckpoint(std::size_t j, std::int64_t t, const Site& pos, double runMin) {
        if ((t + cfg_.Tpast) % cfg_.checkpointStride != 0) return;
        std::size_t idx = j * nChk_ + static_cast<std::size_t>((t + cfg_.Tpast) / cfg_.checkpointStride);
        chkPos_[idx] = pos;
        prefMin_[idx] = runMin;
    }

    std::size_t floorCheckpoint(std::int64_t t) const {
        return static_cast<std::size_t>((t + cfg_.Tpast) / cfg_.checkpointStride);
    }
    std::int64_t checkpointTime(std::size_t chk) const {
        return static_cast<std::int64_t>(chk) * cfg_.checkpointStride - cfg_.Tpast;
    }
    Site checkpointPos(std::size_t j, std::size_t chk) const { return chkPos_[j * nChk_ + chk]; }

    rnd::Substream futureStream(std::size_t j) const {
        const Site& z = startSite_[j];
        return {cfg_.seed, rnd::RandomKey::make(rnd::Stream::TrajFuture, cfg_.replica,
                                                z[0], z[1], z[2], 0, startIdx_[j])};
    }
    rnd::Substream pastStream(std::size_t j) const {
        const Site& z = startSite_[j];
        return {cfg_.seed, rnd::RandomKey::make(rnd::Stream::TrajPast, cfg_.replica,
                                                z[0], z[1], z[2], 0, startIdx_[j])};
    }

    // Incremental advance of a particle position, caching both substreams.
    struct Walkalong {
        Walkalong(const EnvironmentWindow& env, std::size_t j)
            : fut(env.futureStream(j)), past(env.pastStream(j)),
              laziness(env.cfg_.laziness), dim(env.cfg_.dim) {}

        // Advance pos from time s to s+1.
        void advance(std::int64_t s, Site& pos) const {
            if (s >= 0) {
                pos = pos + detail::cloudStep(fut.bitsAt(static_cast<std::uint64_t>(s + 1)),
                                              laziness, dim);
            } else {
                Site step = detail::cloudStep(past.bitsAt(static_cast<std::uint64_t>(-s)),
                                              laziness, dim);
                pos = pos - step;
            }
        }

        rnd::Substream fut, past;
        double laziness;
        int dim;
    };

    EnvConfig cfg_;
    Site genLo_{}, genHi_{};
    std::int64_t margin_ = 0;
    std::vector<Site> startSite_;
    std::vector<std::int32_t> startIdx_;

    std::size_t winSize_ = 0;
    std::vector<std::int32_t> dense_;
    std::vector<std::vector<std::int32_t>> tube_;

    std::size_t nChk_ = 0;
    std::vector<Site> chkPos_;
    std::vector<double> prefMin_;
};

} // namespace rwdre::env
