#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "rwdre/random.hpp"
#include "rwdre/stats.hpp"

using namespace rwdre;

TEST_CASE("uniform is a pure function of seed and key") {
    auto k = rnd::RandomKey::make(rnd::Stream::UniformField, 3, -17, 4, 0, 1234, 2);
    REQUIRE(rnd::uniform(7, k) == rnd::uniform(7, k));
    REQUIRE(rnd::uniform(7, k) != rnd::uniform(8, k));
    double u = rnd::uniform(7, k);
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
}

TEST_CASE("key encoding is injective and bounds-checked") {
    auto a = rnd::RandomKey::make(rnd::Stream::TrajFuture, 1, 2, 3, 0, 0, 5);
    auto b = rnd::RandomKey::make(rnd::Stream::TrajFuture, 1, 2, 3, 0, 0, 6);
    auto c = rnd::RandomKey::make(rnd::Stream::TrajPast, 1, 2, 3, 0, 0, 5);
    REQUIRE(a.w != b.w);
    REQUIRE(a.w != c.w);
    REQUIRE_THROWS_AS(rnd::RandomKey::make(rnd::Stream::TrajFuture, 1, std::int64_t(1) << 40),
                      std::out_of_range);
}

TEST_CASE("uniform draws pass KS uniformity at 1%") {
    std::vector<double> xs;
    for (int i = 0; i < 100000; ++i)
        xs.push_back(rnd::uniform(42, rnd::RandomKey::make(rnd::Stream::UniformField, 0, i)));
    auto gate = stats::ksTest(xs, [](double x) { return std::min(1.0, std::max(0.0, x)); });
    REQUIRE(gate.pass);
}

TEST_CASE("distinct seeds almost always give distinct outputs") {
    int differing = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        auto k = rnd::RandomKey::make(rnd::Stream::UniformField, 0, i, 7);
        if (rnd::uniform(7, k) != rnd::uniform(8, k)) ++differing;
    }
    REQUIRE(differing >= n * 999 / 1000);
}

TEST_CASE("replica streams are empirically uncorrelated") {
    const int n = 100000;
    std::vector<double> a, b;
    for (int i = 0; i < n; ++i) {
        a.push_back(rnd::uniform(5, rnd::RandomKey::make(rnd::Stream::UniformField, 1, i)));
        b.push_back(rnd::uniform(5, rnd::RandomKey::make(rnd::Stream::UniformField, 2, i)));
    }
    double ma = stats::mean(a), mb = stats::mean(b);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (int i = 0; i < n; ++i) {
        cov += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    double corr = cov / std::sqrt(va * vb);
    REQUIRE(std::fabs(corr) < 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("poisson basic properties") {
    REQUIRE(rnd::poisson(1, rnd::RandomKey::make(rnd::Stream::InitialCount, 0, 0), 0.0) == 0);
    REQUIRE_THROWS_AS(rnd::poisson(1, rnd::RandomKey::make(rnd::Stream::InitialCount, 0, 0), -1.0),
                      std::invalid_argument);
}

static void checkPoissonMoments(double rho, double meanTolSds, double varTolFrac) {
    const int n = 100000;
    double sum = 0.0, sumSq = 0.0;
    for (int i = 0; i < n; ++i) {
        auto v = static_cast<double>(
            rnd::poisson(9, rnd::RandomKey::make(rnd::Stream::InitialCount, 0, i), rho));
        sum += v;
        sumSq += v * v;
    }
    double m = sum / n;
    double var = sumSq / n - m * m;
    REQUIRE(std::fabs(m - rho) <= meanTolSds * std::sqrt(rho / n));
    REQUIRE(std::fabs(var - rho) <= varTolFrac * rho);
}

TEST_CASE("poisson(3) moments match (inversion sampler)") {
    checkPoissonMoments(3.0, 3.0, 0.05);
}

TEST_CASE("poisson(50) moments match (rejection sampler)") {
    checkPoissonMoments(50.0, 3.5, 0.05);
}

TEST_CASE("order independence: substream values match one-shot evaluation") {
    auto prefix = rnd::RandomKey::make(rnd::Stream::TrajFuture, 4, 10, 0, 0, 0, 3);
    rnd::Substream s(123, prefix);
    std::vector<double> forward, backward;
    for (int i = 0; i < 50; ++i) forward.push_back(s.at(i));
    for (int i = 49; i >= 0; --i) backward.push_back(s.at(i));
    for (int i = 0; i < 50; ++i) REQUIRE(forward[static_cast<std::size_t>(i)] ==
                                         backward[static_cast<std::size_t>(49 - i)]);
}
