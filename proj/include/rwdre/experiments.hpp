#pragma once

// Experiment drivers: each takes a resolved Config, runs its replicas through
// the worker pool, writes CSV data plus a JSON summary with gate results, and
// reports whether all configured gates passed.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "rwdre/config.hpp"
#include "rwdre/environment.hpp"
#include "rwdre/infection.hpp"
#include "rwdre/io.hpp"
#include "rwdre/kernel.hpp"
#include "rwdre/parallel.hpp"
#include "rwdre/regen.hpp"
#include "rwdre/renorm.hpp"
#include "rwdre/slt.hpp"
#include "rwdre/stats.hpp"
#include "rwdre/walker.hpp"

namespace rwdre::harness {

struct RunResult {
    nlohmann::ordered_json summary;
    bool pass = true;
};

inline nlohmann::ordered_json gateJson(const stats::GateResult& g) {
    nlohmann::ordered_json j;
    j["name"] = g.name;
    j["statistic"] = g.statistic;
    if (g.pValue >= 0.0) j["p_value"] = g.pValue;
    j["threshold"] = g.threshold;
    j["pass"] = g.pass;
    j["n"] = g.sampleSize;
    if (!g.detail.empty()) j["detail"] = g.detail;
    return j;
}

// --- kernels from config -------------------------------------------------------

inline kernel::Kernel twoRowKernel() {
    // symmetric below occupation 1, e1-drift 3/4 at and above it
    kernel::KernelRow low{0, {{site(1), 0.5}, {site(-1), 0.5}}};
    kernel::KernelRow high{1, {{site(1), 0.75}, {site(-1), 0.25}}};
    return kernel::Kernel(1, {low, high});
}

// drift at every occupancy, stronger on occupied sites: keeps the environment
// modulation while the per-record regeneration probability stays order one
inline kernel::Kernel driftModulatedKernel() {
    kernel::KernelRow low{0, {{site(1), 0.7}, {site(-1), 0.3}}};
    kernel::KernelRow high{1, {{site(1), 0.85}, {site(-1), 0.15}}};
    return kernel::Kernel(1, {low, high});
}

inline kernel::Kernel kernelFromConfig(const Config& cfg) {
    if (!cfg.has("kernel.rows")) return twoRowKernel();
    auto rowsJson = cfg.getJson("kernel.rows");
    int dim = static_cast<int>(cfg.getInt("kernel.dim", 1));
    std::vector<kernel::KernelRow> rows;
    for (const auto& r : rowsJson) {
        kernel::KernelRow row;
        row.kMin = r.at("kmin").get<std::int64_t>();
        for (const auto& s : r.at("steps")) {
            Site x{};
            auto dx = s.at("dx");
            for (std::size_t i = 0; i < dx.size() && i < kMaxDim; ++i)
                x[static_cast<int>(i)] = dx[i].get<std::int32_t>();
            row.steps.push_back({x, s.at("p").get<double>()});
        }
        rows.push_back(std::move(row));
    }
    return kernel::Kernel(dim, rows);
}

// --- scales ---------------------------------------------------------------------

inline RunResult runScales(const Config& cfg, const std::filesystem::path& outDir) {
    using renorm::BigFloat;
    auto L0 = renorm::parseBigInt(cfg.getString("scales.L0", "1e50"));
    std::size_t kTop = static_cast<std::size_t>(cfg.getInt("scales.ktop", 20));
    BigFloat rhoHat(cfg.getString("scales.rhoHat", "1"));
    BigFloat vHat(cfg.getString("scales.vHat", "1"));
    bool nonIncreasing = cfg.getString("scales.direction", "nonincreasing") != "nondecreasing";

    auto up = renorm::buildScaleTable(L0, kTop, rhoHat, vHat, renorm::Direction::NonIncreasing);
    auto down = renorm::buildScaleTable(L0, kTop, rhoHat, vHat, renorm::Direction::NonDecreasing);
    const auto& t = nonIncreasing ? up : down;

    CsvWriter csv(outDir / "scales.csv", cfg);
    csv.header({"k", "L_k", "rho_k", "v_k", "rho_floor_ok", "v_floor_ok", "lower_bound_ok",
                "cascade_ok"});
    bool lowerAll = true, cascadeAll = true;
    auto abbrev = [](const std::string& digits) {
        if (digits.size() <= 60) return digits;
        return digits.substr(0, 24) + "..." + digits.substr(digits.size() - 8) + " (" +
               std::to_string(digits.size()) + " digits)";
    };
    for (std::size_t k = 0; k <= kTop; ++k) {
        bool lower = t.lowerBoundHolds(k);
        bool casc = (k + 1 <= kTop) ? t.cascadeMarginHolds(k) : true;
        lowerAll = lowerAll && lower;
        cascadeAll = cascadeAll && casc;
        csv.row({static_cast<std::int64_t>(k), t.levels[k].str(), t.rho[k].str(30),
                 t.v[k].str(30), std::int64_t(t.rhoFloorOk[k]), std::int64_t(t.vFloorOk[k]),
                 std::int64_t(lower), std::int64_t(casc)});
        std::printf("k=%2zu  L_k=%s  rho_k=%s  v_k=%s  floors(rho,v)=(%d,%d) lower=%d cascade=%d\n",
                    k, abbrev(t.levels[k].str()).c_str(), t.rho[k].str(12).c_str(),
                    t.v[k].str(12).c_str(), int(t.rhoFloorOk[k]), int(t.vFloorOk[k]), int(lower),
                    int(casc));
    }
    bool rhoStar = up.rhoWithinIotaBounds();
    bool rhoStarStar = down.rhoWithinIotaBounds();

    RunResult r;
    r.summary["experiment"] = "scales";
    r.summary["config"] = configAsJson(cfg);
    r.summary["L1"] = up.levels.size() > 1 ? up.levels[1].str() : "";
    r.summary["iota"] = up.iota.str(30);
    r.summary["v_infinity"] = up.vInfinity.str(30);
    r.summary["gates"]["lower_bound_all"] = lowerAll;
    r.summary["gates"]["cascade_margin_all"] = cascadeAll;
    r.summary["gates"]["rho_upper_iota"] = rhoStar;
    r.summary["gates"]["rho_lower_iota"] = rhoStarStar;
    r.pass = lowerAll && cascadeAll && rhoStar && rhoStarStar;
    writeJson(outDir / "scales_summary.json", r.summary);
    return r;
}

// --- p_k estimation --------------------------------------------------------------

inline RunResult runPk(const Config& cfg, const std::filesystem::path& outDir) {
    auto L0 = renorm::parseBigInt(cfg.getString("pk.L0", "16"));
    std::size_t kLevels = static_cast<std::size_t>(cfg.getInt("pk.klevels", 1));
    int dim = static_cast<int>(cfg.getInt("pk.dim", 1));
    int range = static_cast<int>(cfg.getInt("pk.range", 1));
    std::int64_t K = cfg.getInt("pk.K", 1);
    double rhoHat = cfg.getDouble("pk.rhoHat", 2.0);
    double vHat = cfg.getDouble("pk.vHat", 0.9);
    double co = cfg.getDouble("pk.co", 1.0);
    std::size_t replicas = static_cast<std::size_t>(cfg.getInt("replicas", 200));
    std::uint64_t seed = static_cast<std::uint64_t>(cfg.getInt("seed", 1));

    auto table = renorm::buildScaleTable(L0, kLevels, renorm::BigFloat(rhoHat),
                                         renorm::BigFloat(vHat), renorm::Direction::NonIncreasing);

    CsvWriter csv(outDir / "pk.csv", cfg);
    csv.header({"k", "L_k", "rho_k", "v_k", "phat", "ci_lo", "ci_hi"});
    std::vector<double> phats, rhos, vks;
    std::vector<std::int64_t> Ls;
    for (std::size_t k = 0; k <= kLevels; ++k) {
        std::int64_t L = table.levels[k].convert_to<std::int64_t>();
        double rhoK = table.rho[k].convert_to<double>();
        double vK = table.v[k].convert_to<double>();
        auto est = renorm::estimatePk(dim, range, L, K, vK, rhoK, seed, replicas);
        csv.row({static_cast<std::int64_t>(k), L, rhoK, vK, est.phat, est.lo, est.hi});
        phats.push_back(est.phat);
        rhos.push_back(rhoK);
        vks.push_back(vK);
        Ls.push_back(L);
    }

    RunResult r;
    r.summary["experiment"] = "pk";
    r.summary["config"] = configAsJson(cfg);
    r.summary["phat"] = phats;
    // Fitted recursion constant: phat_{k+1} <= Co L_k^{2d+1} (phat_k^2 + exp(-co rho_k L_k^{1/8}))
    for (std::size_t k = 0; k + 1 <= kLevels; ++k) {
        double lk = static_cast<double>(Ls[k]);
        double bracket = phats[k] * phats[k] +
                         std::exp(-co * rhos[k] * std::pow(lk, 1.0 / 8.0));
        double denom = std::pow(lk, 2.0 * dim + 1.0) * bracket;
        r.summary["fitted_Co"].push_back(denom > 0.0 ? phats[k + 1] / denom : 0.0);
    }
    writeJson(outDir / "pk_summary.json", r.summary);
    return r;
}

// --- heat kernel ------------------------------------------------------------------

inline RunResult runHeatKernel(const Config& cfg, const std::filesystem::path& outDir) {
    int dim = static_cast<int>(cfg.getInt("heatkernel.d", 1));
    double laziness = cfg.getDouble("heatkernel.laziness", 0.5);
    std::int64_t nMax = cfg.getInt("heatkernel.nmax", 64);
    std::string outName = cfg.getString("heatkernel.out", "heat_kernel.csv");

    slt::HeatKernel hk(dim, laziness, nMax);
    CsvWriter csv(outDir / outName, cfg);
    if (dim == 1) {
        csv.header({"n", "x", "p"});
        for (std::int64_t n = 0; n <= nMax; ++n)
            for (std::int64_t x = -n; x <= n; ++x)
                csv.row({n, x, hk.at(n, site(static_cast<std::int32_t>(x)))});
    } else {
        csv.header({"n", "x0", "x1", "p"});
        for (std::int64_t n = 0; n <= nMax; ++n)
            for (std::int64_t x = -n; x <= n; ++x)
                for (std::int64_t y = -n; y <= n; ++y)
                    csv.row({n, x, y, hk.at(n, site(static_cast<std::int32_t>(x),
                                                    static_cast<std::int32_t>(y)))});
    }

    RunResult r;
    r.summary["experiment"] = "heat-kernel";
    r.summary["config"] = configAsJson(cfg);
    r.summary["normalization_error"] = hk.normalizationError();
    r.summary["fitted_Csup"] = hk.fittedCsup();
    r.summary["fitted_Clip"] = hk.fittedClip();
    r.summary["fitted_Ctail"] = hk.fittedCtail();
    r.summary["gates"]["normalized"] = hk.normalizationError() <= 1e-12;
    r.pass = hk.normalizationError() <= 1e-12;
    writeJson(outDir / "heat_kernel_summary.json", r.summary);
    return r;
}

// --- covariance decay --------------------------------------------------------------

inline RunResult runCovarianceDecay(const Config& cfg, const std::filesystem::path& outDir,
                                    int workers) {
    double rho = cfg.getDouble("cov.rho", 5.0);
    std::int64_t A = cfg.getInt("cov.A", 4000);
    double laziness = cfg.getDouble("cov.laziness", 0.5);
    std::vector<std::int64_t> tGrid;
    if (cfg.has("cov.tgrid"))
        for (const auto& v : cfg.getJson("cov.tgrid")) tGrid.push_back(v.get<std::int64_t>());
    else
        tGrid = {16, 32, 64, 128, 256, 512, 1024};
    std::int64_t T = *std::max_element(tGrid.begin(), tGrid.end());
    std::size_t replicas = static_cast<std::size_t>(cfg.getInt("replicas", 256));
    std::uint64_t seed = static_cast<std::uint64_t>(cfg.getInt("seed", 1));

    slt::HeatKernel hk(1, laziness, T);

    std::vector<std::vector<double>> covByReplica(replicas);
    forEachReplica(replicas, workers, [&](std::size_t r) {
        env::EnvConfig ec = env::EnvConfig::centered(1, rho, A, T);
        ec.laziness = laziness;
        ec.seed = seed;
        ec.replica = r;
        env::EnvironmentWindow w(ec);
        std::vector<double>& out = covByReplica[r];
        // centered products: removes the common mean-field fluctuation the
        // uncentered estimator shares across all lags
        for (std::int64_t t : tGrid) {
            double sum = 0.0;
            std::int64_t count = 0;
            for (std::int64_t x = -A; x <= A; ++x) {
                double n0 = w.occupation({site(static_cast<std::int32_t>(x)), 0});
                double nt = w.occupation({site(static_cast<std::int32_t>(x)), t});
                sum += (n0 - rho) * (nt - rho);
                ++count;
            }
            out.push_back(sum / static_cast<double>(count));
        }
    });

    if (cfg.getBool("cov.dumpWindow", false)) {
        env::EnvConfig ec = env::EnvConfig::centered(1, rho, std::min<std::int64_t>(A, 200),
                                                     std::min<std::int64_t>(T, 64));
        ec.laziness = laziness;
        ec.seed = seed;
        env::EnvironmentWindow w(ec);
        CsvWriter dump(outDir / "env_window.csv", cfg);
        dump.header({"x", "t", "N"});
        for (std::int64_t t = 0; t <= ec.T; ++t)
            for (std::int64_t x = ec.boxLo[0]; x <= ec.boxHi[0]; ++x)
                dump.row({x, t, static_cast<std::int64_t>(
                                    w.occupation({site(static_cast<std::int32_t>(x)), t}))});
    }

    CsvWriter csv(outDir / "covariance.csv", cfg);
    csv.header({"t", "cov", "se", "oracle"});
    bool withinAll = true;
    std::vector<double> logT, logC;
    for (std::size_t i = 0; i < tGrid.size(); ++i) {
        std::vector<double> vals;
        for (const auto& row : covByReplica) vals.push_back(row[i]);
        double m = stats::mean(vals);
        double se = stats::stderrOfMean(vals);
        double oracle = rho * hk.atOrigin(tGrid[i]);
        withinAll = withinAll && std::fabs(m - oracle) <= 3.0 * se;
        if (m > 0.0) {
            logT.push_back(std::log(static_cast<double>(tGrid[i])));
            logC.push_back(std::log(m));
        }
        csv.row({tGrid[i], m, se, oracle});
    }
    bool slopeOk = false;
    double slope = 0.0;
    if (logT.size() == tGrid.size()) {
        auto fit = stats::slopeFit(logT, logC);
        slope = fit.slope;
        slopeOk = std::fabs(slope + 0.5) <= 0.15;
    }

    RunResult r;
    r.summary["experiment"] = "covariance-decay";
    r.summary["config"] = configAsJson(cfg);
    r.summary["slope"] = slope;
    r.summary["gates"]["within_3se_all_t"] = withinAll;
    r.summary["gates"]["slope_within_band"] = slopeOk;
    r.pass = withinAll && slopeOk;
    writeJson(outDir / "covariance_summary.json", r.summary);
    return r;
}

// --- walker engine (LLN + ballisticity) ----------------------------------------------

struct WalkerReplicaOut {
    double xT = 0.0;
    double xMid = 0.0;
    std::vector<std::uint8_t> hitByL;
    walker::WalkerPath dumpedPath;  // kept only for the first few replicas when dumping
};

struct WalkerEngineOut {
    std::vector<WalkerReplicaOut> replicas;
    std::vector<std::int64_t> Ls;
    std::int64_t T = 0;
    double vstar = 0.0;
    std::size_t dumpPaths = 0;
};

inline WalkerEngineOut runWalkerEngine(const Config& cfg, int workers) {
    WalkerEngineOut out;
    double rho = cfg.getDouble("lln.rho", 3.0);
    out.T = cfg.getInt("lln.T", 2000);
    out.vstar = cfg.getDouble("lln.vstar", 0.25);
    double laziness = cfg.getDouble("lln.laziness", 0.5);
    std::size_t replicas = static_cast<std::size_t>(cfg.getInt("replicas", 500));
    std::uint64_t seed = static_cast<std::uint64_t>(cfg.getInt("seed", 1));
    if (cfg.has("ballisticity.Ls"))
        for (const auto& v : cfg.getJson("ballisticity.Ls")) out.Ls.push_back(v.get<std::int64_t>());
    else
        out.Ls = {10, 20, 40};
    out.dumpPaths = static_cast<std::size_t>(cfg.getInt("lln.dumpPaths", 0));

    auto kern = kernelFromConfig(cfg);
    auto partition = kernel::buildPartitions(kern, 8);
    const int range = kern.range();
    const std::int64_t T = out.T;

    out.replicas.resize(replicas);
    forEachReplica(replicas, workers, [&](std::size_t r) {
        env::EnvConfig ec = env::EnvConfig::centered(1, rho, range * T, T);
        ec.laziness = laziness;
        ec.seed = seed;
        ec.replica = r;
        ec.wantDenseField = false;
        ec.wantTube = true;
        ec.tubeRange = range;
        env::EnvironmentWindow w(ec);
        walker::TubeEnvView<env::EnvironmentWindow> view{w};
        auto path = walker::evolve(view, kern, partition, Point{Site{}, 0}, T);

        WalkerReplicaOut& ro = out.replicas[r];
        if (r < out.dumpPaths) ro.dumpedPath = path;
        ro.xT = static_cast<double>(path.positions.back()[0]);
        ro.xMid = static_cast<double>(path.positions[static_cast<std::size_t>(T / 2)][0]);
        ro.hitByL.assign(out.Ls.size(), 0);
        for (std::int64_t n = 0; n <= T; ++n) {
            double x1 = static_cast<double>(path.positions[static_cast<std::size_t>(n)][0]);
            for (std::size_t li = 0; li < out.Ls.size(); ++li)
                if (x1 <= -static_cast<double>(out.Ls[li]) + out.vstar * static_cast<double>(n))
                    ro.hitByL[li] = 1;
        }
    });
    return out;
}

inline RunResult runWalkerLln(const Config& cfg, const std::filesystem::path& outDir, int workers) {
    auto eng = runWalkerEngine(cfg, workers);
    const std::int64_t T = eng.T;

    if (eng.dumpPaths > 0) {
        CsvWriter paths(outDir / "walker_paths.csv", cfg);
        paths.header({"replica", "step", "x0", "N_seen", "drift", "M"});
        for (std::size_t r = 0; r < std::min(eng.dumpPaths, eng.replicas.size()); ++r) {
            const auto& path = eng.replicas[r].dumpedPath;
            auto m = walker::martingaleResidual(path);
            for (std::int64_t l = 0; l < path.steps(); ++l)
                paths.row({static_cast<std::int64_t>(r), l,
                           static_cast<std::int64_t>(path.positions[static_cast<std::size_t>(l)][0]),
                           static_cast<std::int64_t>(path.occupationSeen[static_cast<std::size_t>(l)]),
                           path.driftLedger[static_cast<std::size_t>(l)],
                           m[static_cast<std::size_t>(l)]});
        }
    }

    CsvWriter csv(outDir / "walker_lln.csv", cfg);
    std::vector<std::string> cols = {"replica", "xT", "xMid"};
    for (auto L : eng.Ls) cols.push_back("hit_L" + std::to_string(L));
    csv.header(cols);
    std::vector<double> vT, vMid;
    for (std::size_t r = 0; r < eng.replicas.size(); ++r) {
        const auto& ro = eng.replicas[r];
        std::vector<Cell> cells = {static_cast<std::int64_t>(r), ro.xT, ro.xMid};
        for (auto h : ro.hitByL) cells.push_back(static_cast<std::int64_t>(h));
        csv.row(cells);
        vT.push_back(ro.xT / static_cast<double>(T));
        vMid.push_back(ro.xMid / static_cast<double>(T / 2));
    }
    double vhat = stats::mean(vT), seT = stats::stderrOfMean(vT);
    double vmid = stats::mean(vMid), seM = stats::stderrOfMean(vMid);
    double z99 = stats::normalQuantile(0.995);
    bool ciExcludesZero = std::fabs(vhat) > z99 * seT;
    double combSe = std::sqrt(seT * seT + seM * seM);
    bool stable = std::fabs(vhat - vmid) <= 3.0 * combSe;

    RunResult r;
    r.summary["experiment"] = "walker-lln";
    r.summary["config"] = configAsJson(cfg);
    r.summary["vhat"] = vhat;
    r.summary["se"] = seT;
    r.summary["vhat_half_horizon"] = vmid;
    r.summary["gates"]["ci99_excludes_zero"] = ciExcludesZero;
    r.summary["gates"]["horizon_stability_3se"] = stable;
    r.pass = ciExcludesZero && stable;
    writeJson(outDir / "walker_lln_summary.json", r.summary);
    return r;
}

inline RunResult runBallisticity(const Config& cfg, const std::filesystem::path& outDir,
                                 int workers) {
    auto eng = runWalkerEngine(cfg, workers);
    CsvWriter csv(outDir / "ballisticity.csv", cfg);
    csv.header({"L", "hits", "replicas", "phat", "ci_lo", "ci_hi"});
    std::vector<stats::WilsonInterval> cis;
    for (std::size_t li = 0; li < eng.Ls.size(); ++li) {
        std::size_t hits = 0;
        for (const auto& ro : eng.replicas) hits += ro.hitByL[li];
        auto ci = stats::wilson(hits, eng.replicas.size());
        cis.push_back(ci);
        csv.row({eng.Ls[li], static_cast<std::int64_t>(hits),
                 static_cast<std::int64_t>(eng.replicas.size()), ci.phat, ci.lo, ci.hi});
    }
    bool monotone = true;
    for (std::size_t i = 0; i + 1 < cis.size(); ++i)
        if (cis[i].phat < cis[i + 1].phat && cis[i].hi < cis[i + 1].lo) monotone = false;

    RunResult r;
    r.summary["experiment"] = "ballisticity";
    r.summary["config"] = configAsJson(cfg);
    r.summary["gates"]["nonincreasing_within_ci"] = monotone;
    r.pass = monotone;
    writeJson(outDir / "ballisticity_summary.json", r.summary);
    return r;
}

// --- regeneration engine (regen + clt) -------------------------------------------------

struct RegenReplicaOut {
    double xT = 0.0;
    std::vector<regen::RegenBlock> blocks;       // primary scan (T_c)
    std::vector<regen::RegenBlock> blocksDouble; // sensitivity scan (2 T_c)
    bool pAngle = false;
    std::size_t recordsChecked = 0;
    std::size_t pathConeFailures = 0;
    std::size_t crossFailures = 0;
};

struct RegenEngineOut {
    std::vector<RegenReplicaOut> replicas;
    std::int64_t T = 0;
    regen::RegenConfig rcfg;
};

inline RegenEngineOut runRegenEngine(const Config& cfg, int workers) {
    RegenEngineOut out;
    double rho = cfg.getDouble("regen.rho", 0.25);
    out.T = cfg.getInt("regen.T", 5000);
    std::int64_t Tpast = cfg.getInt("regen.Tpast", out.T);
    out.rcfg.vStar = cfg.getDouble("regen.vstar", 0.45);
    out.rcfg.coneCheckHorizon = cfg.getInt("regen.Tc", 200);
    double laziness = cfg.getDouble("regen.laziness", 0.5);
    std::size_t replicas = static_cast<std::size_t>(cfg.getInt("replicas", 300));
    std::uint64_t seed = static_cast<std::uint64_t>(cfg.getInt("seed", 1));

    auto kern = cfg.has("kernel.rows") ? kernelFromConfig(cfg) : driftModulatedKernel();
    auto partition = kernel::buildPartitions(kern, 8);
    out.rcfg.range = kern.range();
    const std::int64_t T = out.T;

    out.replicas.resize(replicas);
    forEachReplica(replicas, workers, [&](std::size_t r) {
        env::EnvConfig ec = env::EnvConfig::centered(1, rho, out.rcfg.range * T, T, Tpast);
        ec.laziness = laziness;
        ec.seed = seed;
        ec.replica = r;
        ec.wantDenseField = false;
        ec.wantTube = true;
        ec.tubeRange = out.rcfg.range;
        ec.wantSummaries = true;
        ec.vbar = out.rcfg.effectiveVbar();
        env::EnvironmentWindow w(ec);
        walker::TubeEnvView<env::EnvironmentWindow> view{w};
        auto path = walker::evolve(view, kern, partition, Point{Site{}, 0}, T);

        auto scan = regen::findRegeneration(w, path, out.rcfg);
        regen::RegenConfig doubled = out.rcfg;
        doubled.coneCheckHorizon = 2 * out.rcfg.coneCheckHorizon;
        auto scan2 = regen::findRegeneration(w, path, doubled);

        RegenReplicaOut& ro = out.replicas[r];
        ro.xT = static_cast<double>(path.positions.back()[0]);
        for (auto& b : scan.blocks) b.replica = r;
        for (auto& b : scan2.blocks) b.replica = r;
        ro.blocks = std::move(scan.blocks);
        ro.blocksDouble = std::move(scan2.blocks);
        ro.pAngle = scan.timeZeroConditionsHold;
        ro.recordsChecked = scan.recordsChecked;
        ro.pathConeFailures = scan.pathConeFailures;
        ro.crossFailures = scan.crossFailures;
    });
    return out;
}

// Blocks distributed as under the cone-conditioned law: every block after the
// first regeneration, plus the first block when the time-zero conditions held.
inline std::vector<regen::RegenBlock> angleBlocks(const std::vector<regen::RegenBlock>& blocks,
                                                  bool pAngle) {
    std::vector<regen::RegenBlock> out;
    for (const auto& b : blocks)
        if (b.index >= 1 || pAngle) out.push_back(b);
    return out;
}

struct RegenAnalysis {
    regen::VelocityEstimate vel;
    regen::VelocityEstimate velDoubled;
    regen::CovarianceEstimate cov;
    regen::IidDiagnostics diag;
    double directV = 0.0;
    double directSe = 0.0;
    std::size_t totalBlocks = 0;
    std::size_t untruncated = 0;
    std::vector<double> cltZ;   // standardized batch sums
};

inline RegenAnalysis analyzeRegen(const RegenEngineOut& eng, std::size_t cltBatch = 0) {
    RegenAnalysis a;
    std::vector<regen::RegenBlock> flat, flatDouble;
    std::vector<std::vector<regen::RegenBlock>> perReplica;
    std::vector<double> direct;
    for (const auto& ro : eng.replicas) {
        auto filtered = angleBlocks(ro.blocks, ro.pAngle);
        perReplica.push_back(filtered);
        flat.insert(flat.end(), filtered.begin(), filtered.end());
        auto filtered2 = angleBlocks(ro.blocksDouble, ro.pAngle);
        flatDouble.insert(flatDouble.end(), filtered2.begin(), filtered2.end());
        direct.push_back(ro.xT / static_cast<double>(eng.T));
        a.totalBlocks += ro.blocks.size();
    }
    a.vel = regen::velocityEstimate(flat);
    a.velDoubled = regen::velocityEstimate(flatDouble);
    a.cov = regen::covarianceEstimate(flat, a.vel);
    a.diag = regen::iidDiagnostics(perReplica);
    a.directV = stats::mean(direct);
    a.directSe = stats::stderrOfMean(direct);
    a.untruncated = a.vel.used;

    // standardized batch sums over consecutive untruncated blocks. Block
    // displacements are skewed (heavy tau tail), so batches target ~100 sums:
    // large enough batches for the central limit to bite, enough sums for the
    // gate to have power. The scale is deterministic per batch
    // (sigma^2 * m * mean tau): dividing by the batch's own random time span
    // would correlate numerator and denominator and skew the sums.
    if (cltBatch == 0) cltBatch = std::max<std::size_t>(64, a.untruncated / 100);
    double sigma11 = a.cov.sigma[0][0];
    double meanTau = 0.0;
    for (const auto& b : flat)
        if (!b.truncated) meanTau += static_cast<double>(b.tau);
    meanTau /= static_cast<double>(a.untruncated);
    const double scale = std::sqrt(sigma11 * static_cast<double>(cltBatch) * meanTau);
    double sumDx = 0.0;
    std::size_t inBatch = 0;
    for (const auto& b : flat) {
        if (b.truncated) continue;
        sumDx += static_cast<double>(b.displacement[0]) - a.vel.v[0] * static_cast<double>(b.tau);
        if (++inBatch == cltBatch) {
            a.cltZ.push_back(sumDx / scale);
            sumDx = 0.0;
            inBatch = 0;
        }
    }
    return a;
}

inline void writeRegenCsv(const Config& cfg, const std::filesystem::path& path,
                          const RegenEngineOut& eng) {
    CsvWriter csv(path, cfg);
    csv.header({"replica", "blockIndex", "tau", "dx0", "truncated"});
    for (std::size_t r = 0; r < eng.replicas.size(); ++r)
        for (const auto& b : eng.replicas[r].blocks)
            csv.row({static_cast<std::int64_t>(r), static_cast<std::int64_t>(b.index),
                     b.tau, static_cast<std::int64_t>(b.displacement[0]),
                     static_cast<std::int64_t>(b.truncated)});
}

inline RunResult runRegen(const Config& cfg, const std::filesystem::path& outDir, int workers) {
    auto eng = runRegenEngine(cfg, workers);
    auto a = analyzeRegen(eng, static_cast<std::size_t>(cfg.getInt("clt.batch", 0)));
    writeRegenCsv(cfg, outDir / "regen_blocks.csv", eng);

    double combSe = std::sqrt(a.vel.se[0] * a.vel.se[0] + a.directSe * a.directSe);
    bool velocityConsistent = std::fabs(a.vel.v[0] - a.directV) <= 3.0 * combSe;
    bool sensitivityOk = std::fabs(a.vel.v[0] - a.velDoubled.v[0]) <= std::max(a.vel.se[0], 1e-12);

    RunResult r;
    r.summary["experiment"] = "regen";
    r.summary["config"] = configAsJson(cfg);
    r.summary["velocity_regen"] = a.vel.v[0];
    r.summary["velocity_regen_se"] = a.vel.se[0];
    r.summary["velocity_direct"] = a.directV;
    r.summary["velocity_direct_se"] = a.directSe;
    r.summary["velocity_doubled_Tc"] = a.velDoubled.v[0];
    r.summary["sigma11"] = a.cov.sigma[0][0];
    r.summary["blocks_total"] = a.totalBlocks;
    r.summary["blocks_used"] = a.vel.used;
    r.summary["lag1_tau"] = a.diag.lag1Tau;
    r.summary["lag1_dx"] = a.diag.lag1Disp;
    r.summary["lag1_null_band"] = a.diag.nullBand;
    r.summary["split_ks_tau"] = gateJson(a.diag.splitKsTau);
    r.summary["split_ks_dx"] = gateJson(a.diag.splitKsDisp);
    bool velocityFloor = a.vel.v[0] >= eng.rcfg.vStar - 3.0 * a.vel.se[0];
    r.summary["gates"]["velocity_consistent_3se"] = velocityConsistent;
    r.summary["gates"]["iid_diagnostics"] = a.diag.pass;
    r.summary["gates"]["Tc_sensitivity_1se"] = sensitivityOk;
    r.summary["gates"]["velocity_at_least_vstar"] = velocityFloor;
    r.pass = velocityConsistent && a.diag.pass && sensitivityOk && velocityFloor;
    writeJson(outDir / "regen_summary.json", r.summary);
    return r;
}

inline RunResult runClt(const Config& cfg, const std::filesystem::path& outDir, int workers) {
    auto eng = runRegenEngine(cfg, workers);
    auto a = analyzeRegen(eng, static_cast<std::size_t>(cfg.getInt("clt.batch", 0)));
    auto gate = stats::adNormal(a.cltZ, 0.01, "clt-ad-normal");

    RunResult r;
    r.summary["experiment"] = "clt";
    r.summary["config"] = configAsJson(cfg);
    r.summary["batch_sums"] = a.cltZ.size();
    r.summary["blocks_used"] = a.untruncated;
    r.summary["ad"] = gateJson(gate);
    r.summary["gates"]["ad_normal"] = gate.pass;
    r.pass = gate.pass;
    writeJson(outDir / "clt_summary.json", r.summary);
    return r;
}

// --- infection -------------------------------------------------------------------------

inline RunResult runInfection(const Config& cfg, const std::filesystem::path& outDir, int workers) {
    infection::InfectionConfig base;
    base.rho = cfg.getDouble("infection.rho", 2.0);
    std::int64_t T = cfg.getInt("infection.T", 2000);
    std::int64_t rObs = cfg.getInt("infection.r", 10);
    base.windowRadius = cfg.getInt("infection.A", T + 100);
    base.laziness = cfg.getDouble("infection.laziness", 0.0);
    base.seed = static_cast<std::uint64_t>(cfg.getInt("seed", 1));
    std::size_t replicas = static_cast<std::size_t>(cfg.getInt("replicas", 300));
    std::int64_t stride = cfg.getInt("infection.outputStride", 10);

    std::vector<infection::FrontRun> runs(replicas);
    forEachReplica(replicas, workers, [&](std::size_t r) {
        infection::InfectionConfig c = base;
        c.replica = r;
        runs[r] = infection::runFront(c, T, rObs);
    });

    CsvWriter csv(outDir / "infection.csv", cfg);
    csv.header({"replica", "t", "front", "infectedCount"});
    std::vector<double> speeds;
    std::size_t degenerate = 0, dominationFailures = 0, observableOk = 0, valid = 0;
    for (std::size_t r = 0; r < replicas; ++r) {
        const auto& run = runs[r];
        if (run.degenerate) {
            ++degenerate;
            continue;
        }
        ++valid;
        for (std::int64_t t = 0; t <= T; t += stride)
            csv.row({static_cast<std::int64_t>(r), t, run.front[static_cast<std::size_t>(t)],
                     static_cast<std::int64_t>(run.infectedCount[static_cast<std::size_t>(t)])});
        speeds.push_back(static_cast<double>(run.front.back()) / static_cast<double>(T));
        if (!run.dominationHeld) ++dominationFailures;
        if (run.observableTimeAverage >= 0.1) ++observableOk;
    }

    double speed = stats::mean(speeds), se = stats::stderrOfMean(speeds);
    double z99 = stats::normalQuantile(0.995);
    bool speedPositive = speed - z99 * se > 0.0;
    bool dominationAll = dominationFailures == 0;
    double obsFrac = static_cast<double>(observableOk) / static_cast<double>(valid);
    bool observableGate = obsFrac >= 0.95;

    RunResult r;
    r.summary["experiment"] = "infection";
    r.summary["config"] = configAsJson(cfg);
    r.summary["speed"] = speed;
    r.summary["speed_se"] = se;
    r.summary["degenerate_replicas"] = degenerate;
    r.summary["observable_fraction"] = obsFrac;
    r.summary["gates"]["speed_ci99_positive"] = speedPositive;
    r.summary["gates"]["srw_domination_pathwise"] = dominationAll;
    r.summary["gates"]["window_observable_95pct"] = observableGate;
    r.pass = speedPositive && dominationAll && observableGate;
    writeJson(outDir / "infection_summary.json", r.summary);
    return r;
}

// --- soft-local-times coupling ------------------------------------------------------------

inline RunResult runSltCoupling(const Config& cfg, const std::filesystem::path& outDir,
                                int workers) {
    std::int64_t L = cfg.getInt("slt.L", 8);
    std::int64_t n = cfg.getInt("slt.n", 256);
    double rho = cfg.getDouble("slt.rho", 0.5);
    std::int64_t cells = cfg.getInt("slt.cells", 8);
    double laziness = cfg.getDouble("slt.laziness", 0.5);
    std::vector<double> factors;
    if (cfg.has("slt.rhoPrimeFactors"))
        for (const auto& v : cfg.getJson("slt.rhoPrimeFactors")) factors.push_back(v.get<double>());
    else
        factors = {2.5, 5.0, 7.5, 10.0};
    std::size_t replicas = static_cast<std::size_t>(cfg.getInt("replicas", 1000));
    std::uint64_t seed = static_cast<std::uint64_t>(cfg.getInt("seed", 1));

    // rho-sparse starts: floor(rho L) per cell of the canonical L-paving.
    std::vector<Site> starts;
    std::int64_t perCell = static_cast<std::int64_t>(rho * static_cast<double>(L));
    for (std::int64_t c = 0; c < cells; ++c)
        for (std::int64_t j = 0; j < perCell; ++j)
            starts.push_back(site(static_cast<std::int32_t>(c * L + (j * L) / perCell)));
    std::vector<Site> hPrime;
    for (std::int64_t x = 0; x < cells * L; ++x)
        hPrime.push_back(site(static_cast<std::int32_t>(x)));

    slt::HeatKernel hk(1, laziness, n);
    double topRhoPrime = rho * factors.back();

    std::vector<double> rhoPrimes;
    for (double f : factors) rhoPrimes.push_back(rho * f);

    struct Out {
        std::vector<std::uint8_t> dominated;
        double supG = 0.0;
        bool qineqHeld = true;
    };
    std::vector<Out> outs(replicas);
    forEachReplica(replicas, workers, [&](std::size_t r) {
        auto sweep = slt::coupleSrwPoisson(starts, n, rhoPrimes, hPrime, hk, seed, r);
        Out& o = outs[r];
        o.supG = sweep.back().supG;
        o.dominated.assign(factors.size(), 0);
        for (std::size_t fi = 0; fi < factors.size(); ++fi) {
            o.dominated[fi] = sweep[fi].dominated ? 1 : 0;
            o.qineqHeld = o.qineqHeld && sweep[fi].qineqHeld;
        }
    });

    CsvWriter csv(outDir / "slt_coupling.csv", cfg);
    csv.header({"replica", "dominated", "supG", "threshold"});
    std::vector<std::size_t> domCount(factors.size(), 0);
    std::size_t qineqFailures = 0;
    for (std::size_t r = 0; r < replicas; ++r) {
        csv.row({static_cast<std::int64_t>(r), static_cast<std::int64_t>(outs[r].dominated.back()),
                 outs[r].supG, topRhoPrime});
        for (std::size_t fi = 0; fi < factors.size(); ++fi) domCount[fi] += outs[r].dominated[fi];
        if (!outs[r].qineqHeld) ++qineqFailures;
    }

    double topFreq = static_cast<double>(domCount.back()) / static_cast<double>(replicas);
    bool freqGate = topFreq >= 0.99;
    bool monotone = true;
    for (std::size_t fi = 0; fi + 1 < factors.size(); ++fi) {
        double p1 = static_cast<double>(domCount[fi]) / static_cast<double>(replicas);
        double p2 = static_cast<double>(domCount[fi + 1]) / static_cast<double>(replicas);
        double se = std::sqrt((p1 * (1 - p1) + p2 * (1 - p2)) / static_cast<double>(replicas));
        if (p2 < p1 - 2.0 * se) monotone = false;
    }
    bool qineqGate = qineqFailures == 0;

    RunResult r;
    r.summary["experiment"] = "slt-coupling";
    r.summary["config"] = configAsJson(cfg);
    r.summary["domination_frequency"] = topFreq;
    for (std::size_t fi = 0; fi < factors.size(); ++fi)
        r.summary["sweep"].push_back(
            {{"rho_prime", rho * factors[fi]},
             {"freq", static_cast<double>(domCount[fi]) / static_cast<double>(replicas)}});
    r.summary["gates"]["domination_freq_099"] = freqGate;
    r.summary["gates"]["monotone_in_rho_prime"] = monotone;
    r.summary["gates"]["qineq_exact"] = qineqGate;
    r.pass = freqGate && monotone && qineqGate;
    writeJson(outDir / "slt_coupling_summary.json", r.summary);
    return r;
}

// --- dispatch --------------------------------------------------------------------------

inline void validateKeys(const std::string& name, const Config& cfg) {
    std::set<std::string> allowed{"seed", "replicas", "workers", "quick"};
    auto add = [&](std::initializer_list<std::string> keys) {
        for (const auto& k : keys) allowed.insert(k);
    };
    if (name == "scales")
        add({"scales.L0", "scales.ktop", "scales.rhoHat", "scales.vHat", "scales.direction"});
    else if (name == "pk")
        add({"pk.L0", "pk.klevels", "pk.dim", "pk.range", "pk.K", "pk.rhoHat", "pk.vHat", "pk.co"});
    else if (name == "heat-kernel")
        add({"heatkernel.d", "heatkernel.laziness", "heatkernel.nmax", "heatkernel.out"});
    else if (name == "covariance-decay")
        add({"cov.rho", "cov.A", "cov.laziness", "cov.tgrid", "cov.dumpWindow"});
    else if (name == "walker-lln" || name == "ballisticity")
        add({"lln.rho", "lln.T", "lln.vstar", "lln.laziness", "lln.dumpPaths", "kernel.rows",
             "kernel.dim", "ballisticity.Ls"});
    else if (name == "regen" || name == "clt")
        add({"regen.rho", "regen.T", "regen.Tpast", "regen.Tc", "regen.vstar", "regen.laziness",
             "kernel.rows", "kernel.dim", "clt.batch"});
    else if (name == "infection")
        add({"infection.rho", "infection.T", "infection.r", "infection.A", "infection.laziness",
             "infection.outputStride"});
    else if (name == "slt-coupling")
        add({"slt.L", "slt.n", "slt.rho", "slt.cells", "slt.laziness", "slt.rhoPrimeFactors"});
    cfg.requireKnown(allowed);
}

inline RunResult runExperiment(const std::string& name, const Config& cfg,
                               const std::filesystem::path& outDir, int workers) {
    std::string canonical = name;
    if (name == "verify-scales") canonical = "scales";
    if (name == "estimate-pk") canonical = "pk";
    validateKeys(canonical, cfg);
    if (canonical == "scales") return runScales(cfg, outDir);
    if (canonical == "pk") return runPk(cfg, outDir);
    if (canonical == "heat-kernel") return runHeatKernel(cfg, outDir);
    if (canonical == "covariance-decay") return runCovarianceDecay(cfg, outDir, workers);
    if (canonical == "walker-lln") return runWalkerLln(cfg, outDir, workers);
    if (canonical == "ballisticity") return runBallisticity(cfg, outDir, workers);
    if (canonical == "regen") return runRegen(cfg, outDir, workers);
    if (canonical == "clt") return runClt(cfg, outDir, workers);
    if (canonical == "infection") return runInfection(cfg, outDir, workers);
    if (canonical == "slt-coupling") return runSltCoupling(cfg, outDir, workers);
    throw UsageError("unknown experiment '" + name + "'");
}

} // namespace rwdre::harness
