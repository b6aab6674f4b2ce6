#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rwdre/renorm.hpp"
#include "rwdre/testing/brute_force.hpp"

using namespace rwdre;
using renorm::BigFloat;
using renorm::BigInt;

TEST_CASE("scale recursion: small and production-sized starts") {
    auto t = renorm::buildScaleTable(BigInt(100), 3, BigFloat(1), BigFloat(1),
                                     renorm::Direction::NonIncreasing);
    REQUIRE(t.levels[1] == BigInt(1000));    // floor(sqrt(100)) = 10
    REQUIRE(t.levels[2] == BigInt(31000));   // floor(sqrt(1000)) = 31

    auto big = renorm::buildScaleTable(renorm::parseBigInt("1e50"), 20, BigFloat(1), BigFloat(1),
                                       renorm::Direction::NonIncreasing);
    REQUIRE(big.levels[1] == renorm::parseBigInt("1e75"));
    for (std::size_t k = 0; k <= 20; ++k) REQUIRE(big.lowerBoundHolds(k));
    for (std::size_t k = 0; k < 20; ++k) REQUIRE(big.cascadeMarginHolds(k));
    REQUIRE(big.rhoWithinIotaBounds());

    auto bigDown = renorm::buildScaleTable(renorm::parseBigInt("1e50"), 20, BigFloat(1), BigFloat(1),
                                           renorm::Direction::NonDecreasing);
    REQUIRE(bigDown.rhoWithinIotaBounds());

    // cascading margin: v_k - v_{k+1} = v_k L_k^{-1/16} (exact algebra of the
    // recursion) must dominate 4 L_k / L_{k+1}
    for (std::size_t k = 0; k < 20; ++k) {
        BigFloat lhs = big.v[k] * renorm::powScale(big.levels[k], -1.0 / 16.0);
        BigFloat rhs = BigFloat(4) * renorm::toBigFloat(big.levels[k]) /
                       renorm::toBigFloat(big.levels[k + 1]);
        REQUIRE(lhs >= rhs);
    }
}

TEST_CASE("scale table preconditions") {
    REQUIRE_THROWS(renorm::buildScaleTable(BigInt(2), 3, BigFloat(1), BigFloat(1),
                                           renorm::Direction::NonIncreasing));
    // vHat below L0^{-1/16}
    REQUIRE_THROWS(renorm::buildScaleTable(BigInt(16), 3, BigFloat(1), BigFloat("0.5"),
                                           renorm::Direction::NonIncreasing));
}

TEST_CASE("desk-scale tables track the density floor flags") {
    auto t = renorm::buildScaleTable(BigInt(16), 8, BigFloat(2), BigFloat(1),
                                     renorm::Direction::NonIncreasing);
    REQUIRE(t.levels[1] == BigInt(64));
    REQUIRE(t.levels[2] == BigInt(512));
    for (std::size_t k = 0; k <= 8; ++k) REQUIRE(t.rhoFloorOk[k]);
    REQUIRE(t.vFloorOk[0]);
    REQUIRE_FALSE(t.vFloorOk[1]);  // 16^{-1/16} is large; v_1 drops below the floor
    REQUIRE(t.rhoWithinIotaBounds());
    REQUIRE(t.vInfinity > 0);
}

TEST_CASE("feasibility condition: first true level and parameter monotonicity") {
    auto L0 = renorm::parseBigInt("1e50");
    // direct high-precision evaluation at d=1, gamma=3/2, Co=co=1
    std::vector<bool> values;
    for (std::size_t k = 0; k <= 6; ++k)
        values.push_back(renorm::checkKoCondition(k, 1, 1.5, 1.0, 1.0, L0));
    REQUIRE(values == std::vector<bool>{false, false, false, true, true, true, true});
    // once true, stays true over the scanned range (checked to k = 12)
    bool seen = false;
    for (std::size_t k = 0; k <= 12; ++k) {
        bool v = renorm::checkKoCondition(k, 1, 1.5, 1.0, 1.0, L0);
        if (seen) REQUIRE(v);
        seen = seen || v;
    }
    // the left side grows with Co, so a large Co flips a fixed level to false
    REQUIRE(renorm::checkKoCondition(3, 1, 1.5, 1.0, 1.0, L0));
    REQUIRE_FALSE(renorm::checkKoCondition(3, 1, 1.5, 1e40, 1.0, L0));
    REQUIRE_THROWS(renorm::checkKoCondition(0, 1, 2.0, 1.0, 1.0, L0));
}

namespace {

renorm::CrossingProblem unitBox(int dim, int range, std::int64_t L) {
    renorm::CrossingProblem p;
    p.dim = dim;
    p.range = range;
    p.duration = L;
    for (int i = 0; i < dim; ++i) {
        p.boxLo[i] = static_cast<std::int32_t>(-2 * range * L);
        p.boxHi[i] = static_cast<std::int32_t>(3 * range * L - 1);
    }
    std::int64_t n = range * L;
    if (dim == 1) {
        for (std::int64_t x = 0; x < n; ++x) p.base.push_back(site(static_cast<std::int32_t>(x)));
    } else {
        for (std::int64_t x = 0; x < n; ++x)
            for (std::int64_t y = 0; y < n; ++y)
                p.base.push_back(site(static_cast<std::int32_t>(x), static_cast<std::int32_t>(y)));
    }
    return p;
}

} // namespace

TEST_CASE("dp: constant observables") {
    auto p = unitBox(1, 1, 5);
    p.g = [](const Site&, std::int64_t) { return 1.0; };
    auto r = renorm::minChiOverCrossings(p);
    REQUIRE(r.feasible);
    REQUIRE(r.minChi == Catch::Approx(1.0));

    p.g = [](const Site&, std::int64_t) { return 0.0; };
    REQUIRE(renorm::minChiOverCrossings(p).minChi == Catch::Approx(0.0));
}

TEST_CASE("dp equals exhaustive enumeration on random instances") {
    for (std::uint64_t inst = 0; inst < 60; ++inst) {
        int dim = inst % 3 == 2 ? 2 : 1;
        std::int64_t L = 2 + static_cast<std::int64_t>(inst % (dim == 1 ? 5 : 3));
        int range = dim == 1 ? 1 + static_cast<int>(inst % 2) : 1;
        auto p = unitBox(dim, range, L);
        p.g = [inst](const Site& x, std::int64_t t) {
            double u = rnd::uniform(inst, rnd::RandomKey::make(rnd::Stream::Replica, 50, x[0], x[1], t));
            return (std::floor(u * 2049.0) - 1024.0) / 1024.0;
        };
        if (inst % 2 == 0)
            p.siteAdmissible = [inst](const Site& x, std::int64_t t) {
                return rnd::uniform(inst, rnd::RandomKey::make(rnd::Stream::Replica, 51, x[0], x[1], t)) > 0.2;
            };
        auto dp = renorm::minChiOverCrossings(p);
        double brute = testing::bruteForceMinSum(p);
        if (dp.feasible) {
            REQUIRE(dp.minSum == brute);
            double check = 0.0;
            for (std::int64_t t = 0; t < L; ++t)
                check += p.g(dp.argmin[static_cast<std::size_t>(t)], t);
            REQUIRE(check == dp.minSum);
        } else {
            REQUIRE(std::isinf(brute));
        }
    }
}

TEST_CASE("layered minima agree with fixed-duration dp prefixes") {
    auto p = unitBox(1, 1, 6);
    p.base = {Site{}};
    p.g = [](const Site& x, std::int64_t t) {
        double u = rnd::uniform(7, rnd::RandomKey::make(rnd::Stream::Replica, 52, x[0], 0, t));
        return std::floor(u * 3.0) / 2.0 - 0.5;
    };
    auto mins = renorm::layeredMinima(p);
    for (std::int64_t ell = 1; ell <= 6; ++ell) {
        auto q = p;
        q.duration = ell;
        auto r = renorm::minChiOverCrossings(q);
        REQUIRE(mins[static_cast<std::size_t>(ell - 1)] == r.minSum);
    }
}

TEST_CASE("cascade witness: slab arithmetic") {
    // synthetic scales: Lk = 8, Lk1 = 64, margins chosen so the displacement
    // bound v_k - v_{k+1} >= 4 Lk/Lk1 holds
    const std::int64_t Lk = 8, Lk1 = 64;
    const double vK = 0.9, vK1 = 0.4;
    auto mk = [&](std::vector<std::int64_t> badSlabs) {
        auto p = unitBox(1, 1, Lk1);
        p.g = [badSlabs, Lk](const Site&, std::int64_t t) {
            for (auto b : badSlabs)
                if (t / Lk == b) return -1.0;
            return 1.0;
        };
        return p;
    };

    SECTION("one bad slab cannot trigger the parent event") {
        auto r = renorm::minChiOverCrossings(mk({3}));
        REQUIRE(r.minChi >= vK1);
    }
    SECTION("three bad slabs produce a witness with a separated pair") {
        auto p = mk({1, 4, 6});
        auto r = renorm::minChiOverCrossings(p);
        REQUIRE(r.minChi < vK1);
        auto w = renorm::cascadeWitness(r, Lk, Lk1, vK, vK1, p);
        REQUIRE(w.badSlabs.size() == 3);
        REQUIRE(w.badSlabs[0].slab == 1);
        REQUIRE(w.badSlabs[1].slab == 4);
        REQUIRE(w.badSlabs[2].slab == 6);
        REQUIRE(w.separatedPair.second - w.separatedPair.first >= 2);
    }
    SECTION("g == -1 makes every slab a witness") {
        auto p = unitBox(1, 1, Lk1);
        p.g = [](const Site&, std::int64_t) { return -1.0; };
        auto r = renorm::minChiOverCrossings(p);
        auto w = renorm::cascadeWitness(r, Lk, Lk1, vK, vK1, p);
        REQUIRE(w.badSlabs.size() == static_cast<std::size_t>(Lk1 / Lk));
    }
}

TEST_CASE("p_k estimation: trivial and union-bound regimes") {
    // K = 0 makes g identically 1, so no crossing can fall below a threshold <= 1
    auto trivial = renorm::estimatePk(1, 1, 8, 0, 1.0, 2.0, 77, 40);
    REQUIRE(trivial.hits == 0);

    // huge density, K = 1: P(event) <= (5 R L)^d L P(Poisson(rho) < 1)
    auto tiny = renorm::estimatePk(1, 1, 16, 1, 0.9, 50.0, 78, 60);
    REQUIRE(tiny.hits == 0);
    double unionBound = 80.0 * 16.0 * std::exp(-50.0);
    REQUIRE(unionBound < 1e-15);
}

TEST_CASE("density control: trivial endpoints and monotone trend in rho") {
    auto certain = renorm::densityControlExperiment(1, 1, 16, 1, 0.2, 0.0, 32, 5, 10);
    REQUIRE(certain.phat == Catch::Approx(1.0));
    auto never = renorm::densityControlExperiment(1, 1, 16, 0, 0.2, 1.0, 32, 6, 10);
    REQUIRE(never.phat == Catch::Approx(0.0));

    std::vector<renorm::DensityControlResult> sweep;
    for (double rho : {1.0, 2.0, 4.0, 8.0})
        sweep.push_back(renorm::densityControlExperiment(1, 1, 64, 1, 0.2, rho, 128, 7, 60));
    for (std::size_t i = 0; i + 1 < sweep.size(); ++i) {
        bool ordered = sweep[i].phat >= sweep[i + 1].phat;
        bool overlap = sweep[i].hi >= sweep[i + 1].lo;
        REQUIRE((ordered || overlap));
    }
    // the constrained variant is at most as likely as the unconstrained one
    auto unconstrained = renorm::densityControlExperiment(1, 1, 48, 1, 0.2, 2.0, 96, 8, 40);
    auto constrained = renorm::densityControlExperiment(1, 1, 48, 1, 0.2, 2.0, 96, 8, 40, true, 0.25);
    REQUIRE(constrained.phat <= unconstrained.phat + 1e-12);
}

TEST_CASE("interpolated lengths stay below bracketing failure rates") {
    auto table = renorm::buildScaleTable(BigInt(16), 2, BigFloat(1), BigFloat(1),
                                         renorm::Direction::NonIncreasing);
    double vInf = table.vInfinity.convert_to<double>();
    double eps = 0.01;
    double thr = std::max(1e-6, vInf - eps);
    const double rho = 0.4;
    auto pLow = renorm::estimatePk(1, 1, 16, 1, thr, rho, 91, 60);
    auto pMid = renorm::estimatePk(1, 1, 32, 1, thr, rho, 91, 60);
    auto pHigh = renorm::estimatePk(1, 1, 64, 1, thr, rho, 91, 60);
    double se = std::sqrt(pMid.phat * (1 - pMid.phat) / 60.0 + 1e-9);
    REQUIRE(pMid.phat <= std::max(pLow.phat, pHigh.phat) + 3.0 * se);
}
