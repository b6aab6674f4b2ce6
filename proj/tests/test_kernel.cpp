#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rwdre/kernel.hpp"
#include "rwdre/random.hpp"
#include "rwdre/stats.hpp"

using namespace rwdre;

namespace {

kernel::Kernel twoRow() {
    kernel::KernelRow low{0, {{site(1), 0.5}, {site(-1), 0.5}}};
    kernel::KernelRow high{1, {{site(1), 0.75}, {site(-1), 0.25}}};
    return kernel::Kernel(1, {low, high});
}

} // namespace

TEST_CASE("construction validates rows") {
    REQUIRE_THROWS(kernel::Kernel(1, {{0, {{site(1), 0.9}}}}));               // does not sum to 1
    REQUIRE_THROWS(kernel::Kernel(1, {{1, {{site(1), 1.0}}}}));               // no kmin=0 row
    REQUIRE_THROWS(kernel::Kernel(1, {{0, {{site(1), 0.5}, {site(1), 0.5}}}}));  // duplicate step
    auto k = twoRow();
    REQUIRE(k.range() == 1);
    REQUIRE(k.stepSet().size() == 2);
    REQUIRE(k.alpha(0, site(1)) == 0.5);
    REQUIRE(k.alpha(3, site(1)) == 0.75);  // row with largest kmin <= 3
}

TEST_CASE("analyze: deterministic forward kernel") {
    kernel::Kernel k(1, {{0, {{site(1), 1.0}}}});
    auto rep = kernel::analyze(k);
    REQUIRE(rep.vBullet == Catch::Approx(1.0));
    REQUIRE(rep.xBullet.has_value());
    REQUIRE(*rep.xBullet == site(1));
    REQUIRE(rep.pBulletAt(0) == Catch::Approx(1.0));
    REQUIRE(rep.pBulletAt(7) == Catch::Approx(1.0));
    REQUIRE(rep.assumptionS);
    REQUIRE(rep.assumptionD);
    REQUIRE(rep.assumptionR);
}

TEST_CASE("analyze: two-row kernel drift quantities") {
    auto rep = kernel::analyze(twoRow());
    REQUIRE(rep.vBullet == Catch::Approx(0.5));
    REQUIRE(*rep.xBullet == site(1));
    REQUIRE(rep.pBulletAt(0) == Catch::Approx(0.5));   // inf over all rows
    REQUIRE(rep.pBulletAt(1) == Catch::Approx(0.75));  // inf over the top row only
}

TEST_CASE("analyze: symmetric kernel has no drift") {
    kernel::Kernel k(1, {{0, {{site(1), 0.5}, {site(-1), 0.5}}}});
    auto rep = kernel::analyze(k);
    REQUIRE(rep.vBullet == Catch::Approx(0.0));
    REQUIRE_FALSE(rep.assumptionD);
}

TEST_CASE("analyze: pBullet is an inf over thresholds above k") {
    // drift drops in the middle row, so p_bullet(0) picks up the minimum
    kernel::KernelRow r0{0, {{site(1), 0.6}, {site(-1), 0.4}}};
    kernel::KernelRow r1{2, {{site(1), 0.3}, {site(-1), 0.7}}};
    kernel::KernelRow r2{5, {{site(1), 0.8}, {site(-1), 0.2}}};
    auto rep = kernel::analyze(kernel::Kernel(1, {r0, r1, r2}));
    REQUIRE(rep.pBulletAt(0) == Catch::Approx(0.3));
    REQUIRE(rep.pBulletAt(2) == Catch::Approx(0.3));
    REQUIRE(rep.pBulletAt(5) == Catch::Approx(0.8));
}

TEST_CASE("partitions: two-row kernel intervals") {
    auto part = kernel::buildPartitions(twoRow(), 4);
    const auto& k1 = part.at(1);
    REQUIRE(k1[0].first == site(1));
    REQUIRE(k1[0].second.first == Catch::Approx(0.0));
    REQUIRE(k1[0].second.second == Catch::Approx(0.75));
    REQUIRE(k1[1].first == site(-1));
    REQUIRE(k1[1].second.second == Catch::Approx(1.0));

    const auto& k0 = part.at(0);
    REQUIRE(k0[0].first == site(1));
    REQUIRE(k0[0].second.second == Catch::Approx(0.5));

    // nesting: [0, p(0)) = [0, 0.5) sits inside I^l_{x_bullet} for l >= 0
    REQUIRE(0.5 <= k1[0].second.second);
}

TEST_CASE("partitions require assumption (R)") {
    kernel::Kernel noForward(1, {{0, {{site(-1), 1.0}}}});
    REQUIRE_THROWS(kernel::buildPartitions(noForward, 2));
}

TEST_CASE("partitions: nesting invariant on randomized 3-row kernels") {
    for (int inst = 0; inst < 100; ++inst) {
        rnd::Substream s(321, rnd::RandomKey::make(rnd::Stream::Replica, inst));
        // rows over steps {-1, 0, +1}; e1 always has positive mass so (R) holds
        std::vector<kernel::KernelRow> rows;
        std::int64_t kmin = 0;
        for (int r = 0; r < 3; ++r) {
            double a = 0.1 + s.at(3 * r);
            double b = s.at(3 * r + 1);
            double c = s.at(3 * r + 2);
            double tot = a + b + c;
            rows.push_back({kmin, {{site(1), a / tot}, {site(0), b / tot}, {site(-1), c / tot}}});
            kmin += 1 + static_cast<std::int64_t>(s.at(100 + r) * 3.0);
        }
        kernel::Kernel k(1, rows);
        auto rep = kernel::analyze(k);
        REQUIRE(rep.assumptionR);
        std::int64_t kMax = 12;
        auto part = kernel::buildPartitions(k, kMax);
        for (std::int64_t kk = 0; kk <= kMax; ++kk) {
            // tiling of [0,1)
            const auto& slots = part.at(kk);
            double lo = 0.0;
            for (const auto&[x, iv] : slots) {
                REQUIRE(iv.first == Catch::Approx(lo).margin(1e-12));
                lo = iv.second;
                REQUIRE(iv.second - iv.first == Catch::Approx(k.alpha(kk, x)).margin(1e-9));
            }
            REQUIRE(lo == Catch::Approx(1.0));
            // nesting: [0, p(k)) inside I^l_{x_bullet} for every l >= k
            for (std::int64_t l = kk; l <= kMax; ++l) {
                const auto& first = part.at(l)[0];
                REQUIRE(first.first == *rep.xBullet);
                REQUIRE(rep.pBulletAt(kk) <= first.second.second + 1e-12);
            }
        }
    }
}

TEST_CASE("sampling via partition reproduces alpha(k, .) at 1%") {
    auto k = twoRow();
    auto part = kernel::buildPartitions(k, 2);
    const int n = 100000;
    for (std::int64_t occ : {0, 1}) {
        std::size_t plus = 0;
        for (int i = 0; i < n; ++i) {
            double u = rnd::uniform(55, rnd::RandomKey::make(rnd::Stream::UniformField, occ, i));
            if (part.sampleStep(occ, u) == site(1)) ++plus;
        }
        std::vector<double> obs{static_cast<double>(plus), static_cast<double>(n - plus)};
        std::vector<double> expd{n * k.alpha(occ, site(1)), n * k.alpha(occ, site(-1))};
        REQUIRE(stats::chiSquareGof(obs, expd).pass);
    }
}
