// Command-line front end: rwdre <experiment> --config FILE --out DIR
// [--seed N] [--workers K] [--quick], plus the acceptance suite driver.
// Exit codes: 0 gates pass, 1 gate failure, 2 usage error, 3 resource error.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "rwdre/acceptance.hpp"
#include "rwdre/experiments.hpp"

int main(int argc, char** argv) {
    using namespace rwdre;

    CLI::App app{"random walks in a dynamic random environment of random walks:"
                 " simulation and verification lab"};
    app.require_subcommand(1);

    std::string configPath, outDir = "out", seedStr, workersStr;
    bool quick = false;

    const std::vector<std::string> experiments = {
        "walker-lln", "regen", "clt", "ballisticity", "pk", "scales",
        "infection", "slt-coupling", "heat-kernel", "covariance-decay"};
    const std::map<std::string, std::string> aliases = {
        {"verify-scales", "scales"}, {"estimate-pk", "pk"}};

    std::map<std::string, CLI::App*> subs;
    std::map<std::string, std::map<std::string, std::string>> flagValues;
    auto addCommon = [&](CLI::App* sub, const std::string& canonical) {
        sub->add_option("--config", configPath, "experiment config file");
        sub->add_option("--out", outDir, "output directory");
        sub->add_option("--seed", seedStr, "master seed (echoed into outputs)");
        sub->add_option("--workers", workersStr, "worker thread count");
        sub->add_flag("--quick", quick, "reduced replicas, widened gates");
        subs[canonical] = sub;
    };
    for (const auto& name : experiments) addCommon(app.add_subcommand(name), name);
    for (const auto& [alias, canonical] : aliases) {
        auto* sub = app.add_subcommand(alias);
        addCommon(sub, canonical + "#" + alias);
    }
    // direct flags mirroring the config keys of the table/kernel tools
    for (auto& [key, sub] : subs) {
        std::string canonical = key.substr(0, key.find('#'));
        if (canonical == "scales") {
            sub->add_option("--L0", flagValues[key]["scales.L0"]);
            sub->add_option("--k-top", flagValues[key]["scales.ktop"]);
        }
        if (canonical == "heat-kernel") {
            sub->add_option("--d", flagValues[key]["heatkernel.d"]);
            sub->add_option("--laziness", flagValues[key]["heatkernel.laziness"]);
            sub->add_option("--nmax", flagValues[key]["heatkernel.nmax"]);
            sub->add_option("--out-file", flagValues[key]["heatkernel.out"]);
        }
    }

    auto* acc = app.add_subcommand("acceptance", "run the full acceptance suite");
    acc->add_option("--out", outDir, "output directory");
    acc->add_option("--workers", workersStr, "worker thread count");
    acc->add_flag("--quick", quick, "reduced replicas, widened gates");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        int workers = workersStr.empty() ? 0 : std::stoi(workersStr);

        if (acc->parsed()) {
            if (workers == 0) workers = harness::defaultWorkers();
            auto results = harness::runAcceptance(outDir, quick, workers);
            for (const auto& r : results)
                if (!r.pass) return 1;
            return 0;
        }

        for (auto& [key, sub] : subs) {
            if (!sub->parsed()) continue;
            std::string canonical = key.substr(0, key.find('#'));
            harness::Config cfg;
            if (!configPath.empty()) cfg = harness::Config::fromFile(configPath);
            for (const auto& [k, v] : flagValues[key])
                if (!v.empty()) cfg.set(k, v);
            if (!seedStr.empty()) cfg.set("seed", seedStr);
            if (quick) cfg.set("quick", "true");
            if (workers == 0)
                workers = static_cast<int>(cfg.getInt("workers", harness::defaultWorkers()));
            auto result = harness::runExperiment(canonical, cfg, outDir, workers);
            return result.pass ? 0 : 1;
        }
        std::fprintf(stderr, "no experiment selected\n");
        return 2;
    } catch (const harness::UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const env::ResourceError& e) {
        std::fprintf(stderr, "resource error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
