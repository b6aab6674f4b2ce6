#pragma once

// d=1 discrete-time infection model: Poisson particles per site, everything at
// or left of the origin starts infected, particles move as independent SRWs,
// and co-location with an infected particle at time n infects at time n+1.
// Tracks the rightmost infected particle (the front).

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rwdre/random.hpp"

namespace rwdre::infection {

struct InfectionConfig {
    double rho = 2.0;
    std::int64_t windowRadius = 100;   // initial particles on [-A, A]
    double laziness = 0.0;             // non-lazy walks preserve parity
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
};

struct InfectionState {
    std::vector<std::int32_t> position;   // per particle
    std::vector<std::int32_t> startSite;
    std::vector<std::int32_t> startIndex;
    std::vector<std::uint8_t> infected;
    std::int64_t time = 0;
    bool degenerate = false;              // no infected particle in the window
    std::int64_t front = 0;               // valid when !degenerate

    std::size_t particleCount() const { return position.size(); }
    std::size_t infectedCount() const {
        std::size_t n = 0;
        for (auto f : infected) n += f;
        return n;
    }
};

inline InfectionState initInfection(const InfectionConfig& cfg) {
    InfectionState st;
    for (std::int64_t z = -cfg.windowRadius; z <= cfg.windowRadius; ++z) {
        auto key = rnd::RandomKey::make(rnd::Stream::InitialCount, cfg.replica, z);
        std::int64_t n = rnd::poisson(cfg.seed, key, cfg.rho);
        for (std::int64_t i = 1; i <= n; ++i) {
            st.position.push_back(static_cast<std::int32_t>(z));
            st.startSite.push_back(static_cast<std::int32_t>(z));
            st.startIndex.push_back(static_cast<std::int32_t>(i));
            st.infected.push_back(z <= 0 ? 1 : 0);
        }
    }
    bool any = false;
    std::int64_t front = 0;
    for (std::size_t j = 0; j < st.position.size(); ++j)
        if (st.infected[j]) {
            if (!any || st.position[j] > front) front = st.position[j];
            any = true;
        }
    st.degenerate = !any;
    st.front = front;
    return st;
}

namespace detail {

inline std::int32_t srwStep(std::uint64_t bits, double laziness) {
    double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
    if (u < laziness) return 0;
    return (u < laziness + (1.0 - laziness) / 2.0) ? 1 : -1;
}

} // namespace detail

// One transition: infection spreads among particles sharing a site at time n,
// then every particle takes its SRW step. Returns the step taken by the
// particle that was the front at time n (used by the domination coupling).
inline std::int32_t stepInfection(InfectionState& st, const InfectionConfig& cfg) {
    if (st.degenerate) throw std::logic_error("stepInfection: degenerate initialization");

    // shared-site infection at time n via a stamped site mask
    static thread_local std::vector<std::int64_t> stamp;
    static thread_local std::int64_t epoch = 0;
    std::int32_t lo = st.position[0], hi = st.position[0];
    for (auto p : st.position) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
    }
    std::size_t width = static_cast<std::size_t>(hi - lo + 1);
    if (stamp.size() < width) stamp.assign(width, -1);
    ++epoch;
    for (std::size_t j = 0; j < st.position.size(); ++j)
        if (st.infected[j]) stamp[static_cast<std::size_t>(st.position[j] - lo)] = epoch;

    std::size_t frontParticle = 0;
    bool haveFront = false;
    for (std::size_t j = 0; j < st.position.size(); ++j) {
        if (st.infected[j] && st.position[j] == st.front && !haveFront) {
            frontParticle = j;
            haveFront = true;
        }
    }

    for (std::size_t j = 0; j < st.position.size(); ++j)
        if (!st.infected[j] && stamp[static_cast<std::size_t>(st.position[j] - lo)] == epoch)
            st.infected[j] = 1;

    std::int32_t frontStep = 0;
    for (std::size_t j = 0; j < st.position.size(); ++j) {
        rnd::Substream s(cfg.seed, rnd::RandomKey::make(rnd::Stream::TrajFuture, cfg.replica,
                                                        st.startSite[j], 0, 0, 0, st.startIndex[j]));
        std::int32_t d = detail::srwStep(s.bitsAt(static_cast<std::uint64_t>(st.time + 1)),
                                         cfg.laziness);
        if (haveFront && j == frontParticle) frontStep = d;
        st.position[j] += d;
    }
    ++st.time;

    bool any = false;
    std::int64_t front = 0;
    for (std::size_t j = 0; j < st.position.size(); ++j)
        if (st.infected[j]) {
            if (!any || st.position[j] > front) front = st.position[j];
            any = true;
        }
    st.front = front;
    return frontStep;
}

// Indicator that at least 2 particles occupy even-offset sites within
// [front - r, front + r].
inline int windowObservable(const InfectionState& st, std::int64_t r) {
    if (st.degenerate) throw std::logic_error("windowObservable: front undefined");
    int count = 0;
    for (auto p : st.position) {
        std::int64_t off = static_cast<std::int64_t>(p) - st.front;
        if (off >= -r && off <= r && ((off % 2) == 0)) {
            if (++count >= 2) return 1;
        }
    }
    return 0;
}

struct FrontRun {
    bool degenerate = false;
    std::vector<std::int64_t> front;      // front[t]
    std::vector<std::size_t> infectedCount;
    bool dominationHeld = true;           // front >= coupled SRW at every step
    double observableTimeAverage = 0.0;   // of windowObservable at radius obsRadius
};

inline FrontRun runFront(const InfectionConfig& cfg, std::int64_t T, std::int64_t obsRadius) {
    FrontRun run;
    InfectionState st = initInfection(cfg);
    if (st.degenerate) {
        run.degenerate = true;
        return run;
    }
    run.front.reserve(static_cast<std::size_t>(T) + 1);
    run.front.push_back(st.front);
    run.infectedCount.push_back(st.infectedCount());
    std::int64_t coupled = st.front;
    double obsSum = windowObservable(st, obsRadius);
    for (std::int64_t t = 0; t < T; ++t) {
        std::int32_t frontStep = stepInfection(st, cfg);
        coupled += frontStep;
        if (st.front < coupled) run.dominationHeld = false;
        run.front.push_back(st.front);
        run.infectedCount.push_back(st.infectedCount());
        obsSum += windowObservable(st, obsRadius);
    }
    run.observableTimeAverage = obsSum / static_cast<double>(T + 1);
    return run;
}

} // namespace rwdre::infection
