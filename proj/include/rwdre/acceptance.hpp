#pragma once

// Acceptance suite: eleven criteria with pinned configurations and seeds, each
// printed as one pass/fail line. Quick mode shrinks replica counts and widens
// the statistical tolerances; the report marks it.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rwdre/experiments.hpp"
#include "rwdre/testing/brute_force.hpp"

namespace rwdre::harness {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    double seconds = 0.0;
    std::string detail;
};

namespace acceptance_detail {

inline Config pinned(const std::string& text) { return Config::fromString(text); }

// C2: DP equals exhaustive enumeration on random instances, exact equality.
// g-values are dyadic rationals so sums are exact in either evaluation order.
inline CriterionResult dpOracle() {
    CriterionResult c{2, "dp-oracle-equivalence", true, 0.0, ""};
    std::size_t checked = 0;
    auto runCase = [&](int dim, int range, std::int64_t L, std::uint64_t instance, bool withMask) {
        rnd::Substream gs(99, rnd::RandomKey::make(rnd::Stream::Replica, instance, dim, range, L));
        renorm::CrossingProblem p;
        p.dim = dim;
        p.range = range;
        p.duration = L;
        for (int i = 0; i < dim; ++i) {
            p.boxLo[i] = static_cast<std::int32_t>(-2 * range * L);
            p.boxHi[i] = static_cast<std::int32_t>(3 * range * L - 1);
        }
        std::int64_t nBase = range * L;
        if (dim == 1) {
            for (std::int64_t x = 0; x < nBase; ++x) p.base.push_back(site(static_cast<std::int32_t>(x)));
        } else {
            for (std::int64_t x = 0; x < nBase; ++x)
                for (std::int64_t y = 0; y < nBase; ++y)
                    p.base.push_back(site(static_cast<std::int32_t>(x), static_cast<std::int32_t>(y)));
        }
        auto hashIdx = [instance](const Site& x, std::int64_t t) {
            return rnd::uniform(instance * 1315423911ull + 7,
                                rnd::RandomKey::make(rnd::Stream::Replica, instance, x[0], x[1], t));
        };
        p.g = [hashIdx](const Site& x, std::int64_t t) {
            double u = hashIdx(x, t);
            return (std::floor(u * 2049.0) - 1024.0) / 1024.0;  // dyadic in [-1, 1]
        };
        if (withMask)
            p.siteAdmissible = [hashIdx](const Site& x, std::int64_t t) {
                return hashIdx(x, t + 1000003) > 0.15;
            };
        auto dp = renorm::minChiOverCrossings(p);
        double brute = testing::bruteForceMinSum(p);
        ++checked;
        bool feasibleMatch = dp.feasible == std::isfinite(brute);
        bool valueMatch = !dp.feasible || dp.minSum == brute;
        if (!feasibleMatch || !valueMatch) {
            c.pass = false;
            c.detail = "mismatch at instance " + std::to_string(instance);
        }
        if (dp.feasible) {
            // argmin path must achieve the reported sum
            double s = 0.0;
            for (std::int64_t t = 0; t < L; ++t) s += p.g(dp.argmin[static_cast<std::size_t>(t)], t);
            if (s != dp.minSum) {
                c.pass = false;
                c.detail = "argmin sum mismatch at instance " + std::to_string(instance);
            }
        }
    };
    std::uint64_t inst = 0;
    for (int i = 0; i < 120 && c.pass; ++i) {
        std::int64_t L = 2 + static_cast<std::int64_t>(inst % 5);  // 2..6
        int range = 1 + static_cast<int>(inst % 2);
        runCase(1, range, L, ++inst, i % 2 == 0);
    }
    for (int i = 0; i < 80 && c.pass; ++i) {
        std::int64_t L = 2 + static_cast<std::int64_t>(inst % 3);  // 2..4
        runCase(2, 1, L, ++inst, i % 2 == 0);
    }
    c.detail = c.pass ? std::to_string(checked) + " instances exact" : c.detail;
    return c;
}

// C7: xi_1..xi_J are iid Exp(1) over randomized instances; the domination
// inequality holds exactly whenever sup G_J <= rho'.
inline CriterionResult sltXi(bool quick) {
    CriterionResult c{7, "slt-exp1-and-domination", true, 0.0, ""};
    const std::size_t instances = quick ? 1000 : 10000;
    std::vector<double> xis;
    std::size_t qineqViolations = 0, applicable = 0;
    for (std::size_t inst = 0; inst < instances; ++inst) {
        rnd::Substream gs(4242, rnd::RandomKey::make(rnd::Stream::Replica, inst));
        std::size_t nSites = 2 + static_cast<std::size_t>(gs.at(0) * 6.0);
        std::size_t J = 2 + static_cast<std::size_t>(gs.at(1) * 6.0);
        std::vector<std::vector<double>> densities(J);
        std::uint64_t draw = 2;
        double maxG = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            densities[j].assign(nSites, 0.0);
            double total = 0.0;
            for (std::size_t z = 0; z < nSites; ++z) {
                densities[j][z] = 0.05 + gs.at(draw++);
                total += densities[j][z];
            }
            for (std::size_t z = 0; z < nSites; ++z) {
                densities[j][z] /= total;
                maxG = std::max(maxG, densities[j][z]);
            }
        }
        double rhoPrime = 0.5 * static_cast<double>(J) * maxG + 1.0;
        double ceiling = slt::sltCeiling(J, maxG, rhoPrime);
        auto pts = slt::poissonPoints(nSites, ceiling, 4242, inst, 1);
        auto st = slt::softLocalTimes(nSites, densities, pts);
        for (double x : st.xis) xis.push_back(x);

        double supG = *std::max_element(st.G.begin(), st.G.end());
        if (supG <= rhoPrime) {
            ++applicable;
            std::vector<std::int32_t> sample(nSites, 0), cloud(nSites, 0);
            for (auto z : st.matchedSite) ++sample[static_cast<std::size_t>(z)];
            for (const auto& pt : pts)
                if (pt.v < rhoPrime) ++cloud[static_cast<std::size_t>(pt.siteIdx)];
            for (std::size_t z = 0; z < nSites; ++z)
                if (sample[z] > cloud[z]) ++qineqViolations;
        }
    }
    auto ks = stats::ksTest(xis, [](double x) { return x <= 0 ? 0.0 : 1.0 - std::exp(-x); }, 0.01,
                            "xi-exp1");
    c.pass = ks.pass && qineqViolations == 0;
    std::ostringstream ss;
    ss << "ks p=" << ks.pValue << ", qineq " << (applicable - qineqViolations) << "/" << applicable;
    c.detail = ss.str();
    return c;
}

} // namespace acceptance_detail

inline std::vector<CriterionResult> runAcceptance(const std::filesystem::path& outDir, bool quick,
                                                  int workers) {
    namespace ad = acceptance_detail;
    std::vector<CriterionResult> results;
    auto timeIt = [&](CriterionResult r, auto&& fn) {
        auto t0 = std::chrono::steady_clock::now();
        try {
            fn(r);
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = std::string("exception: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        results.push_back(r);
        std::printf("[%s] criterion %2d %-32s (%.1fs) %s\n", r.pass ? "PASS" : "FAIL", r.id,
                    r.name.c_str(), r.seconds, r.detail.c_str());
        std::fflush(stdout);
    };

    // 1. exact scale arithmetic at L0 = 10^50
    timeIt({1, "scale-arithmetic", false, 0, ""}, [&](CriterionResult& r) {
        auto cfg = ad::pinned("seed = 1\nscales.L0 = 1e50\nscales.ktop = 20\nscales.vHat = 1\n"
                              "scales.rhoHat = 1\n");
        auto run = runScales(cfg, outDir / "c1_scales");
        bool l1Exact = run.summary["L1"] == renorm::parseBigInt("1e75").str();
        r.pass = run.pass && l1Exact;
        r.detail = l1Exact ? "L1 = 10^75 exact; all inequality flags hold" : "L1 mismatch";
    });

    // 2. DP oracle equivalence
    timeIt({2, "dp-oracle-equivalence", false, 0, ""}, [&](CriterionResult& r) {
        r = ad::dpOracle();
    });

    // 3. environment covariance oracle
    timeIt({3, "covariance-oracle", false, 0, ""}, [&](CriterionResult& r) {
        std::ostringstream ss;
        ss << "seed = 3\ncov.rho = 5\ncov.A = " << (quick ? 1500 : 4000)
           << "\nreplicas = " << (quick ? 64 : 256) << "\n"
           << "cov.tgrid = [16,32,64,128,256,512,1024]\n";
        auto run = runCovarianceDecay(ad::pinned(ss.str()), outDir / "c3_covariance", workers);
        r.pass = run.pass;
        std::ostringstream d;
        d << "slope=" << run.summary["slope"].get<double>();
        r.detail = d.str();
    });

    // 4 & 10. LLN gate and ballisticity trend share runs
    WalkerEngineOut walkerEng;
    timeIt({4, "lln-gate", false, 0, ""}, [&](CriterionResult& r) {
        std::ostringstream ss;
        ss << "seed = 4\nlln.rho = 3\nlln.T = 2000\nlln.vstar = 0.25\nreplicas = "
           << (quick ? 100 : 500) << "\n";
        auto cfg = ad::pinned(ss.str());
        walkerEng = runWalkerEngine(cfg, workers);
        std::vector<double> vT, vMid;
        for (const auto& ro : walkerEng.replicas) {
            vT.push_back(ro.xT / static_cast<double>(walkerEng.T));
            vMid.push_back(ro.xMid / static_cast<double>(walkerEng.T / 2));
        }
        double vhat = stats::mean(vT), seT = stats::stderrOfMean(vT);
        double vmid = stats::mean(vMid), seM = stats::stderrOfMean(vMid);
        bool ci = std::fabs(vhat) > stats::normalQuantile(0.995) * seT;
        bool stable = std::fabs(vhat - vmid) <= 3.0 * std::sqrt(seT * seT + seM * seM);
        r.pass = ci && stable;
        std::ostringstream d;
        d << "vhat=" << vhat << " se=" << seT;
        r.detail = d.str();
    });

    // 5 & 6. regeneration consistency and CLT gate share runs
    RegenEngineOut regenEng;
    RegenAnalysis regenA;
    timeIt({5, "regeneration-consistency", false, 0, ""}, [&](CriterionResult& r) {
        std::ostringstream ss;
        ss << "seed = 5\nregen.rho = 0.25\nregen.T = 5000\nregen.Tc = 200\nregen.vstar = 0.45\n"
           << "kernel.rows = [{\"kmin\":0,\"steps\":[{\"dx\":[1],\"p\":0.7},{\"dx\":[-1],\"p\":0.3}]},"
           << "{\"kmin\":1,\"steps\":[{\"dx\":[1],\"p\":0.85},{\"dx\":[-1],\"p\":0.15}]}]\n"
           << "replicas = " << (quick ? 60 : 300) << "\n";
        regenEng = runRegenEngine(ad::pinned(ss.str()), workers);
        regenA = analyzeRegen(regenEng);
        double combSe = std::sqrt(regenA.vel.se[0] * regenA.vel.se[0] +
                                  regenA.directSe * regenA.directSe);
        bool consistent = std::fabs(regenA.vel.v[0] - regenA.directV) <= 3.0 * combSe;
        r.pass = consistent && regenA.diag.pass;
        std::ostringstream d;
        d << "v_regen=" << regenA.vel.v[0] << " v_direct=" << regenA.directV << " blocks="
          << regenA.untruncated;
        r.detail = d.str();
    });

    timeIt({6, "clt-gate", false, 0, ""}, [&](CriterionResult& r) {
        if (regenA.untruncated < (quick ? std::size_t(100) : std::size_t(500))) {
            r.pass = false;
            r.detail = "insufficient untruncated blocks";
            return;
        }
        auto gate = stats::adNormal(regenA.cltZ, 0.01, "clt-ad");
        r.pass = gate.pass;
        std::ostringstream d;
        d << "A*^2=" << gate.statistic << " over " << regenA.cltZ.size() << " batch sums ("
          << regenA.untruncated << " blocks)";
        r.detail = d.str();
    });

    // 7. soft local times
    timeIt({7, "slt-exp1-and-domination", false, 0, ""}, [&](CriterionResult& r) {
        r = ad::sltXi(quick);
    });

    // 8. coupling bound
    timeIt({8, "coupling-bound", false, 0, ""}, [&](CriterionResult& r) {
        std::ostringstream ss;
        ss << "seed = 8\nslt.L = 8\nslt.n = 256\nslt.rho = 0.5\nreplicas = " << (quick ? 200 : 1000)
           << "\n";
        auto run = runSltCoupling(ad::pinned(ss.str()), outDir / "c8_coupling", workers);
        double freq = run.summary["domination_frequency"].get<double>();
        r.pass = run.pass || (quick && freq >= 0.95 &&
                              run.summary["gates"]["monotone_in_rho_prime"].get<bool>() &&
                              run.summary["gates"]["qineq_exact"].get<bool>());
        std::ostringstream d;
        d << "freq=" << freq;
        r.detail = d.str();
    });

    // 9. infection front
    timeIt({9, "infection-front", false, 0, ""}, [&](CriterionResult& r) {
        std::ostringstream ss;
        ss << "seed = 9\ninfection.rho = 2\ninfection.T = 2000\ninfection.r = 10\nreplicas = "
           << (quick ? 60 : 300) << "\n";
        auto run = runInfection(ad::pinned(ss.str()), outDir / "c9_infection", workers);
        r.pass = run.pass;
        std::ostringstream d;
        d << "speed=" << run.summary["speed"].get<double>() << " obs_frac="
          << run.summary["observable_fraction"].get<double>();
        r.detail = d.str();
    });

    // 10. ballisticity trend from the criterion-4 runs
    timeIt({10, "ballisticity-trend", false, 0, ""}, [&](CriterionResult& r) {
        std::vector<stats::WilsonInterval> cis;
        for (std::size_t li = 0; li < walkerEng.Ls.size(); ++li) {
            std::size_t hits = 0;
            for (const auto& ro : walkerEng.replicas) hits += ro.hitByL[li];
            cis.push_back(stats::wilson(hits, walkerEng.replicas.size()));
        }
        r.pass = true;
        for (std::size_t i = 0; i + 1 < cis.size(); ++i)
            if (cis[i].phat < cis[i + 1].phat && cis[i].hi < cis[i + 1].lo) r.pass = false;
        std::ostringstream d;
        for (std::size_t i = 0; i < cis.size(); ++i)
            d << (i ? " " : "") << "p(L" << walkerEng.Ls[i] << ")=" << cis[i].phat;
        r.detail = d.str();
    });

    // 11. determinism across worker counts
    timeIt({11, "determinism", false, 0, ""}, [&](CriterionResult& r) {
        auto cfg = ad::pinned("seed = 11\nlln.T = 60\nreplicas = 12\nlln.rho = 1\n");
        auto dirA = outDir / "c11_w1";
        auto dirB = outDir / "c11_w2";
        runWalkerLln(cfg, dirA, 1);
        runWalkerLln(cfg, dirB, 2);
        auto slurp = [](const std::filesystem::path& p) {
            std::ifstream in(p, std::ios::binary);
            std::ostringstream ss;
            ss << in.rdbuf();
            return ss.str();
        };
        bool same = slurp(dirA / "walker_lln.csv") == slurp(dirB / "walker_lln.csv") &&
                    slurp(dirA / "walker_lln_summary.json") == slurp(dirB / "walker_lln_summary.json");
        r.pass = same;
        r.detail = same ? "byte-identical across 1 and 2 workers" : "outputs differ";
    });

    // write machine-readable report
    nlohmann::ordered_json report;
    report["quick_mode"] = quick;
    bool all = true;
    for (const auto& r : results) {
        nlohmann::ordered_json c;
        c["id"] = r.id;
        c["name"] = r.name;
        c["pass"] = r.pass;
        c["seconds"] = r.seconds;
        c["detail"] = r.detail;
        report["criteria"].push_back(c);
        all = all && r.pass;
    }
    report["all_pass"] = all;
    writeJson(outDir / "acceptance.json", report);
    return results;
}

} // namespace rwdre::harness
