#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "rwdre/environment.hpp"
#include "rwdre/slt.hpp"
#include "rwdre/stats.hpp"

using namespace rwdre;

namespace {

env::EnvConfig smallCfg(double rho, std::int64_t A, std::int64_t T, std::int64_t Tpast = 0) {
    auto c = env::EnvConfig::centered(1, rho, A, T, Tpast);
    c.seed = 2024;
    return c;
}

} // namespace

TEST_CASE("rho = 0 gives an empty cloud and N == 0") {
    env::EnvironmentWindow w(smallCfg(0.0, 20, 10));
    REQUIRE(w.particleCount() == 0);
    for (std::int64_t x = -20; x <= 20; ++x)
        REQUIRE(w.occupation({site(static_cast<std::int32_t>(x)), 5}) == 0);
}

TEST_CASE("occupation field equals a recount over materialized trajectories") {
    auto cfg = smallCfg(1.5, 12, 8, 4);
    cfg.replica = 3;
    env::EnvironmentWindow w(cfg);
    std::map<std::pair<std::int64_t, std::int64_t>, std::int32_t> recount;
    for (std::size_t j = 0; j < w.particleCount(); ++j) {
        auto traj = w.materialize(j, -4, 8);
        for (std::int64_t t = -4; t <= 8; ++t) {
            auto x = traj.at(t)[0];
            if (x >= -12 && x <= 12) recount[{x, t}] += 1;
        }
    }
    for (std::int64_t t = -4; t <= 8; ++t)
        for (std::int64_t x = -12; x <= 12; ++x) {
            auto it = recount.find({x, t});
            std::int32_t expect = it == recount.end() ? 0 : it->second;
            REQUIRE(w.occupation({site(static_cast<std::int32_t>(x)), t}) == expect);
        }
}

TEST_CASE("enlargement is exact: a wider generation box changes nothing inside") {
    auto narrow = smallCfg(2.0, 12, 8);
    auto wide = smallCfg(2.0, 30, 8);
    env::EnvironmentWindow a(narrow), b(wide);
    REQUIRE(b.particleCount() > a.particleCount());
    for (std::int64_t t = 0; t <= 8; ++t)
        for (std::int64_t x = -12; x <= 12; ++x)
            REQUIRE(a.occupation({site(static_cast<std::int32_t>(x)), t}) ==
                    b.occupation({site(static_cast<std::int32_t>(x)), t}));
}

TEST_CASE("stationarity: pooled occupation matches Poisson(rho) at fixed times") {
    const double rho = 5.0;
    auto cfg = smallCfg(rho, 400, 64);
    env::EnvironmentWindow w(cfg);
    for (std::int64_t t : {std::int64_t(0), std::int64_t(32), std::int64_t(64)}) {
        std::vector<double> obs(16, 0.0), expd(16, 0.0);
        std::int64_t n = 0;
        for (std::int64_t x = -400; x <= 400; ++x) {
            auto c = std::min<std::int32_t>(15, w.occupation({site(static_cast<std::int32_t>(x)), t}));
            obs[static_cast<std::size_t>(c)] += 1.0;
            ++n;
        }
        double pmf = std::exp(-rho);
        double cum = 0.0;
        for (int k = 0; k < 15; ++k) {
            expd[static_cast<std::size_t>(k)] = pmf * static_cast<double>(n);
            cum += pmf;
            pmf *= rho / (k + 1);
        }
        expd[15] = (1.0 - cum) * static_cast<double>(n);
        REQUIRE(stats::chiSquareGof(obs, expd).pass);
    }
}

TEST_CASE("translation invariance: shifted windows have the same marginal law") {
    const double rho = 3.0;
    auto cfg = smallCfg(rho, 500, 8);
    env::EnvironmentWindow w(cfg);
    // pooled occupation over two disjoint shifted sub-windows at a positive time
    std::vector<double> a, b;
    for (std::int64_t x = -450; x < -50; ++x)
        a.push_back(w.occupation({site(static_cast<std::int32_t>(x)), 5}));
    for (std::int64_t x = 50; x < 450; ++x)
        b.push_back(w.occupation({site(static_cast<std::int32_t>(x + (5 % 2))), 5}));
    REQUIRE(stats::ksTwoSample(a, b, 0.01).pass);
}

TEST_CASE("uniform field: purity, serial independence, key translation") {
    auto cfg = smallCfg(1.0, 50, 10);
    env::EnvironmentWindow w(cfg);
    Point y{site(3), 7};
    REQUIRE(w.uniformAt(y) == w.uniformAt(y));
    REQUIRE_THROWS_AS(w.uniformAt({site(51), 0}), std::out_of_range);

    // serial correlation along a site enumeration
    std::vector<double> u;
    for (std::int64_t x = -50; x <= 50; ++x)
        for (std::int64_t t = 0; t <= 10; ++t)
            u.push_back(w.uniformAt({site(static_cast<std::int32_t>(x)), t}));
    double m = stats::mean(u);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i + 1 < u.size(); ++i) {
        num += (u[i] - m) * (u[i + 1] - m);
        den += (u[i] - m) * (u[i] - m);
    }
    REQUIRE(std::fabs(num / den) < 3.0 / std::sqrt(static_cast<double>(u.size())));

    // theta_y semantics by key arithmetic: U at y+z equals the raw keyed draw
    Point shifted{site(3 + 11), 7 + 2};
    REQUIRE(w.uniformAt(shifted) ==
            rnd::uniform(cfg.seed, rnd::RandomKey::make(rnd::Stream::UniformField, cfg.replica,
                                                        14, 0, 0, 9)));
}

TEST_CASE("classifyTrajectory: spec membership cases") {
    const double vbar = 1.0 / 6.0;
    env::Trajectory w;
    w.tMin = -10;
    w.tMax = 10;
    w.positions.assign(21, Site{});
    Point y{Site{}, 0};

    SECTION("constant trajectory at the origin is Angle") {
        auto c = env::classifyTrajectory(w, y, vbar, 1, 10);
        REQUIRE(c.kind == env::TrajectoryClass::Angle);
    }
    SECTION("w(i) = -|i| e1 crosses both cones") {
        for (std::int64_t t = -10; t <= 10; ++t)
            w.positions[static_cast<std::size_t>(t + 10)] =
                site(static_cast<std::int32_t>(-std::llabs(t)));
        auto c = env::classifyTrajectory(w, y, vbar, 1, 10);
        REQUIRE(c.kind == env::TrajectoryClass::Cross);
    }
    SECTION("constant trajectory at L e1 intersects only the forward cone") {
        for (auto& p : w.positions) p = site(4);
        auto c = env::classifyTrajectory(w, y, vbar, 1, 10);
        REQUIRE(c.kind == env::TrajectoryClass::Angle);
    }
}

TEST_CASE("crossAt agrees with per-trajectory classification") {
    auto cfg = smallCfg(2.0, 40, 40, 40);
    cfg.wantSummaries = true;
    cfg.vbar = 1.0 / 6.0;
    cfg.checkpointStride = 16;
    cfg.replica = 9;
    env::EnvironmentWindow w(cfg);

    std::vector<env::Trajectory> trajs;
    for (std::size_t j = 0; j < w.particleCount(); ++j)
        trajs.push_back(w.materialize(j, -40, 40));

    const std::int64_t Tc = 20;
    for (std::int64_t t = 0; t <= 20; t += 4) {
        for (std::int64_t x = -10; x <= 10; x += 2) {
            Point y{site(static_cast<std::int32_t>(x)), t};
            bool brute = false;
            for (const auto& traj : trajs) {
                auto c = env::classifyTrajectory(traj, y, cfg.vbar, 1, Tc);
                if (c.kind == env::TrajectoryClass::Cross) brute = true;
            }
            auto fast = w.crossAt(y, Tc, 1);
            REQUIRE(fast.cross == brute);
        }
    }
}

TEST_CASE("wedge prefix statistic matches a direct trajectory scan") {
    auto cfg = smallCfg(1.0, 30, 30, 30);
    cfg.wantSummaries = true;
    cfg.vbar = 0.1;
    cfg.checkpointStride = 8;
    env::EnvironmentWindow w(cfg);
    for (std::size_t j = 0; j < std::min<std::size_t>(w.particleCount(), 20); ++j) {
        auto traj = w.materialize(j, -30, 30);
        for (std::int64_t t : {std::int64_t(-5), std::int64_t(0), std::int64_t(13), std::int64_t(30)}) {
            double direct = std::numeric_limits<double>::infinity();
            for (std::int64_t s = -30; s <= t; ++s)
                direct = std::min(direct, static_cast<double>(traj.at(s)[0]) - cfg.vbar * s);
            REQUIRE(w.wedgeStatistic(j, t) == Catch::Approx(direct));
        }
    }
}

TEST_CASE("tube strips agree with the dense field") {
    auto cfg = smallCfg(2.0, 30, 30);
    cfg.wantTube = true;
    cfg.tubeRange = 1;
    env::EnvironmentWindow w(cfg);
    for (std::int64_t t = 0; t <= 30; ++t)
        for (std::int64_t x = -t; x <= t; ++x)
            REQUIRE(w.occupationTube(x, t) ==
                    w.occupation({site(static_cast<std::int32_t>(x)), t}));
}

TEST_CASE("FKG spot check: nondecreasing occupation events positively correlated") {
    const double rho = 2.0;
    const int reps = 4000;
    int cA = 0, cB = 0, cAB = 0;
    for (int r = 0; r < reps; ++r) {
        auto cfg = smallCfg(rho, 6, 4);
        cfg.replica = static_cast<std::uint64_t>(r);
        env::EnvironmentWindow w(cfg);
        bool A = w.occupation({site(0), 0}) >= 2;
        bool B = w.occupation({site(2), 3}) >= 2;
        cA += A;
        cB += B;
        cAB += (A && B);
    }
    double pA = static_cast<double>(cA) / reps, pB = static_cast<double>(cB) / reps;
    double pAB = static_cast<double>(cAB) / reps;
    double se = std::sqrt(pAB * (1 - pAB) / reps + 1e-12);
    REQUIRE(pAB >= pA * pB - 3.0 * se);
}

TEST_CASE("short-horizon covariance matches the heat-kernel oracle") {
    const double rho = 5.0;
    const std::int64_t A = 300, T = 16;
    const int reps = 100;
    slt::HeatKernel hk(1, 0.5, T);
    std::vector<double> c4, c16;
    for (int r = 0; r < reps; ++r) {
        auto cfg = smallCfg(rho, A, T);
        cfg.replica = static_cast<std::uint64_t>(r);
        env::EnvironmentWindow w(cfg);
        double s4 = 0.0, s16 = 0.0;
        for (std::int64_t x = -A; x <= A; ++x) {
            double n0 = w.occupation({site(static_cast<std::int32_t>(x)), 0});
            s4 += n0 * w.occupation({site(static_cast<std::int32_t>(x)), 4});
            s16 += n0 * w.occupation({site(static_cast<std::int32_t>(x)), 16});
        }
        c4.push_back(s4 / (2 * A + 1) - rho * rho);
        c16.push_back(s16 / (2 * A + 1) - rho * rho);
    }
    REQUIRE(std::fabs(stats::mean(c4) - rho * hk.atOrigin(4)) <= 3.0 * stats::stderrOfMean(c4));
    REQUIRE(std::fabs(stats::mean(c16) - rho * hk.atOrigin(16)) <= 3.0 * stats::stderrOfMean(c16));
}

TEST_CASE("memory budget produces a resource error with a byte estimate") {
    auto cfg = smallCfg(1.0, 2000, 2000);
    cfg.memoryBudgetBytes = 1 << 16;
    try {
        env::EnvironmentWindow w(cfg);
        FAIL("expected ResourceError");
    } catch (const env::ResourceError& e) {
        REQUIRE(e.requiredBytes > (1u << 16));
    }
}
