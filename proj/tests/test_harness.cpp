#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rwdre/experiments.hpp"

using namespace rwdre;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path tmpDir(const std::string& leaf) {
    auto p = fs::temp_directory_path() / "rwdre_tests" / leaf;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_CASE("config parsing: sections, types, and errors") {
    auto cfg = harness::Config::fromString(
        "# comment\n"
        "seed = 7\n"
        "[env]\n"
        "rho = 2.5\n"
        "window.A = 100\n"
        "[kernel]\n"
        "rows = [{\"kmin\":0,\"steps\":[{\"dx\":[1],\"p\":1.0}]}]\n");
    REQUIRE(cfg.getInt("seed", 0) == 7);
    REQUIRE(cfg.getDouble("env.rho", 0) == 2.5);
    REQUIRE(cfg.getInt("env.window.A", 0) == 100);
    REQUIRE(cfg.getJson("kernel.rows")[0]["kmin"] == 0);

    REQUIRE_THROWS_AS(harness::Config::fromString("bad line\n"), harness::UsageError);
    auto bad = harness::Config::fromString("x = notanumber\n");
    REQUIRE_THROWS_AS(bad.getInt("x", 0), harness::UsageError);
    REQUIRE_THROWS_AS(bad.requireKnown({"y"}), harness::UsageError);
}

TEST_CASE("kernel config round trip") {
    harness::Config cfg;
    cfg.set("kernel.rows",
            R"([{"kmin":0,"steps":[{"dx":[1],"p":0.5},{"dx":[-1],"p":0.5}]},)"
            R"({"kmin":2,"steps":[{"dx":[1],"p":1.0}]}])");
    auto k = harness::kernelFromConfig(cfg);
    REQUIRE(k.alpha(0, site(1)) == 0.5);
    REQUIRE(k.alpha(2, site(1)) == 1.0);
    REQUIRE(k.range() == 1);
}

TEST_CASE("walker-lln outputs are byte-identical across worker counts") {
    auto cfg = harness::Config::fromString("seed = 101\nlln.T = 50\nreplicas = 10\nlln.rho = 1\n");
    auto d1 = tmpDir("det_w1");
    auto d2 = tmpDir("det_w2");
    auto r1 = harness::runWalkerLln(cfg, d1, 1);
    auto r2 = harness::runWalkerLln(cfg, d2, 2);
    REQUIRE(slurp(d1 / "walker_lln.csv") == slurp(d2 / "walker_lln.csv"));
    REQUIRE(slurp(d1 / "walker_lln_summary.json") == slurp(d2 / "walker_lln_summary.json"));
}

TEST_CASE("csv headers echo the resolved config and seed") {
    auto cfg = harness::Config::fromString("seed = 202\nlln.T = 30\nreplicas = 4\nlln.rho = 0.5\n");
    auto d = tmpDir("echo");
    harness::runWalkerLln(cfg, d, 1);
    auto text = slurp(d / "walker_lln.csv");
    REQUIRE(text.find("# seed = 202") != std::string::npos);
    REQUIRE(text.find("# lln.T = 30") != std::string::npos);
    REQUIRE(text.rfind("# ", 0) == 0);
}

TEST_CASE("scales experiment emits the exact table and passes its gates") {
    auto cfg = harness::Config::fromString("scales.L0 = 100\nscales.ktop = 4\nseed = 1\n");
    auto d = tmpDir("scales");
    auto r = harness::runScales(cfg, d);
    REQUIRE(r.pass);
    auto text = slurp(d / "scales.csv");
    REQUIRE(text.find("1000") != std::string::npos);
    REQUIRE(text.find("31000") != std::string::npos);
}

TEST_CASE("pk experiment: identically-one observable yields zero rows") {
    auto cfg = harness::Config::fromString(
        "pk.L0 = 16\npk.klevels = 1\npk.K = 0\npk.rhoHat = 2\npk.vHat = 0.9\nreplicas = 20\nseed = 3\n");
    auto d = tmpDir("pk");
    auto r = harness::runPk(cfg, d);
    REQUIRE(r.pass);
    for (const auto& v : r.summary["phat"]) REQUIRE(v.get<double>() == 0.0);
}

TEST_CASE("heat kernel experiment writes a normalized table") {
    auto cfg = harness::Config::fromString("heatkernel.d = 1\nheatkernel.nmax = 16\nseed = 1\n");
    auto d = tmpDir("hk");
    auto r = harness::runHeatKernel(cfg, d);
    REQUIRE(r.pass);
    REQUIRE(fs::exists(d / "heat_kernel.csv"));
}

TEST_CASE("unknown experiment name raises a usage error") {
    harness::Config cfg;
    REQUIRE_THROWS_AS(harness::runExperiment("nope", cfg, tmpDir("nope"), 1), harness::UsageError);
}

TEST_CASE("unknown config keys are rejected with the key path") {
    auto cfg = harness::Config::fromString("seed = 1\nlln.Tee = 50\n");
    try {
        harness::runExperiment("walker-lln", cfg, tmpDir("badkey"), 1);
        FAIL("expected UsageError");
    } catch (const harness::UsageError& e) {
        REQUIRE(std::string(e.what()).find("lln.Tee") != std::string::npos);
    }
}

TEST_CASE("ballisticity: driftless walker hits every moving half-space") {
    // symmetric kernel, vstar > 0: the half-space boundary advances while the
    // walker diffuses, so the hit probability approaches one
    auto cfg = harness::Config::fromString(
        "seed = 9\nlln.T = 1500\nlln.rho = 1\nlln.vstar = 0.3\nreplicas = 40\n"
        "ballisticity.Ls = [10]\n"
        "kernel.rows = [{\"kmin\":0,\"steps\":[{\"dx\":[1],\"p\":0.5},{\"dx\":[-1],\"p\":0.5}]}]\n");
    auto eng = harness::runWalkerEngine(cfg, 2);
    std::size_t hits = 0;
    for (const auto& ro : eng.replicas) hits += ro.hitByL[0];
    REQUIRE(static_cast<double>(hits) / static_cast<double>(eng.replicas.size()) >= 0.9);
}

TEST_CASE("ballisticity: forward-deterministic walker never backtracks") {
    auto cfg = harness::Config::fromString(
        "seed = 10\nlln.T = 300\nlln.rho = 0\nlln.vstar = 0.5\nreplicas = 5\n"
        "kernel.rows = [{\"kmin\":0,\"steps\":[{\"dx\":[1],\"p\":1.0}]}]\n");
    auto eng = harness::runWalkerEngine(cfg, 1);
    for (const auto& ro : eng.replicas)
        for (auto h : ro.hitByL) REQUIRE(h == 0);
}

TEST_CASE("slt coupling experiment passes its gates at reduced size") {
    auto cfg = harness::Config::fromString("replicas = 120\nseed = 5\nslt.n = 128\n");
    auto d = tmpDir("sltc");
    auto r = harness::runSltCoupling(cfg, d, 2);
    REQUIRE(r.summary["gates"]["qineq_exact"].get<bool>());
    REQUIRE(r.summary["gates"]["monotone_in_rho_prime"].get<bool>());
    REQUIRE(r.summary["domination_frequency"].get<double>() >= 0.95);
}
