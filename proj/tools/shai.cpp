#include "shai/bench.hpp"
#include "shai/parser.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace shai;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spill(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
}

std::uint64_t effectiveSeed(std::uint64_t cliSeed) {
    if (const char* env = std::getenv("SHAI_SIM_SEED")) return std::strtoull(env, nullptr, 10);
    return cliSeed;
}

Mode parseMode(const std::string& m) {
    if (m == "baseline") return Mode::Baseline;
    if (m == "dynamic") return Mode::Dynamic;
    if (m == "shai") return Mode::Shai;
    throw CLI::ValidationError("--mode", "must be baseline, dynamic or shai");
}

// "<len>x<count>" pairs
void parseSessions(const std::vector<std::string>& specs, RunConfig& cfg) {
    if (specs.empty()) return;
    cfg.sessionLengths.clear();
    cfg.sessionsPerLength = 0;
    for (const auto& s : specs) {
        auto x = s.find('x');
        if (x == std::string::npos)
            throw CLI::ValidationError("--sessions", "expected <len>x<count>");
        int len = std::stoi(s.substr(0, x));
        int count = std::stoi(s.substr(x + 1));
        cfg.sessionLengths.push_back(len);
        cfg.sessionsPerLength = count; // last count wins; lengths accumulate
    }
}

MetadataView loadStandaloneMetadata(const std::string& manifestPath,
                                    const std::string& policiesPath,
                                    const std::string& listsDir, Manifest& manifest) {
    MetadataView view;
    manifest = parseManifest(slurp(manifestPath));
    view.policies = parsePolicyFile(slurp(policiesPath));
    for (const auto& [id, decl] : manifest.classes) view.classPolicy[id] = decl.policyName;
    if (!listsDir.empty()) {
        for (const auto& entry : fs::directory_iterator(listsDir)) {
            MetaList l;
            l.id = entry.path().stem().string();
            std::istringstream in(slurp(entry.path().string()));
            std::string e;
            while (in >> e) l.entries.insert(e);
            view.lists[l.id] = std::move(l);
        }
    }
    view.clock = 1;
    return view;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"offline-certified information-flow enforcement simulator"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "generate a corpus directory");
    CorpusSpec spec;
    std::string genOut = "corpus";
    gen->add_option("--users", spec.users);
    gen->add_option("--docs", spec.docCount);
    gen->add_option("--regions", spec.regions);
    gen->add_option("--friends", spec.friendsPerUser);
    gen->add_option("--seed", spec.seed);
    gen->add_option("--out", genOut);

    // oa
    auto* oaCmd = app.add_subcommand("oa", "run the offline analysis");
    std::string oaCorpus, oaManifest, oaPolicies, oaMetadata, oaOut = "oa.txt";
    OAOptions oaOpts;
    oaCmd->add_option("--corpus", oaCorpus, "corpus directory from `gen`");
    oaCmd->add_option("--manifest", oaManifest);
    oaCmd->add_option("--policies", oaPolicies);
    oaCmd->add_option("--metadata", oaMetadata, "directory of list files");
    oaCmd->add_option("--out", oaOut);
    oaCmd->add_option("--parallel", oaOpts.parallel);
    oaCmd->add_flag("--active-only", oaOpts.activeOnly);

    // run
    auto* runCmd = app.add_subcommand("run", "run the benchmark");
    std::string runCorpus = "corpus", runOa, runModeName = "shai", runOut;
    std::vector<std::string> sessionSpecs;
    RunConfig cfg;
    runCmd->add_option("--corpus", runCorpus);
    runCmd->add_option("--oa", runOa, "offline-analysis output (shai mode)");
    runCmd->add_option("--mode", runModeName);
    runCmd->add_option("--sessions", sessionSpecs, "<len>x<count>, repeatable");
    runCmd->add_option("--mispredict", cfg.mispredictFraction);
    runCmd->add_option("--seed", cfg.seed);
    runCmd->add_flag("--patch-slowpath", cfg.patchSlowpath);
    runCmd->add_option("--tick-lwc", cfg.costs.lwcReset);
    runCmd->add_option("--tick-exec", cfg.costs.execReset);
    runCmd->add_option("--out", runOut, "metrics csv path");

    // sweep
    auto* sweepCmd = app.add_subcommand("sweep", "misprediction sweep");
    std::string swCorpus = "corpus", swOa, swModeName = "shai", swOut;
    std::vector<std::string> swSessions;
    std::vector<double> swFractions = {0, 0.25, 0.5, 0.75, 1.0};
    RunConfig swCfg;
    sweepCmd->add_option("--corpus", swCorpus);
    sweepCmd->add_option("--oa", swOa);
    sweepCmd->add_option("--mode", swModeName);
    sweepCmd->add_option("--sessions", swSessions);
    sweepCmd->add_option("--mispredict", swFractions)->delimiter(',');
    sweepCmd->add_option("--seed", swCfg.seed);
    sweepCmd->add_flag("--patch-slowpath", swCfg.patchSlowpath);
    sweepCmd->add_option("--out", swOut);

    // faults
    auto* faultsCmd = app.add_subcommand("faults", "run the fault-injection suite");
    std::string fCorpus = "corpus", fOa;
    std::uint64_t fSeed = 7;
    faultsCmd->add_option("--corpus", fCorpus);
    faultsCmd->add_option("--oa", fOa);
    faultsCmd->add_option("--seed", fSeed);

    // report
    auto* reportCmd = app.add_subcommand("report", "render a metrics csv as text");
    std::string repIn;
    TickCosts repCosts;
    reportCmd->add_option("--in", repIn)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 2;
    }

    try {
        if (*gen) {
            persistCorpus(generateCorpus(spec), genOut);
            std::cout << "corpus written to " << genOut << "\n";
            return 0;
        }
        if (*oaCmd) {
            Manifest manifest;
            MetadataView view;
            if (!oaCorpus.empty()) {
                Corpus c = loadCorpus(oaCorpus);
                manifest = c.manifest;
                view = c.metadata;
            } else if (!oaManifest.empty() && !oaPolicies.empty()) {
                view = loadStandaloneMetadata(oaManifest, oaPolicies, oaMetadata, manifest);
            } else {
                std::cerr << "oa: need --corpus or --manifest + --policies\n";
                return 2;
            }
            OAStats stats;
            OAOutput out = runOA(manifest, view, oaOpts, &stats);
            persistOAFile(out, oaOut);
            std::cout << "certified " << out.certified.size() << " accesses, "
                      << stats.restrictivenessChecks << " checks over " << stats.policyClasses
                      << " policy classes -> " << oaOut << "\n";
            return 0;
        }
        if (*runCmd) {
            cfg.mode = parseMode(runModeName);
            cfg.seed = effectiveSeed(cfg.seed);
            parseSessions(sessionSpecs, cfg);
            Corpus c = loadCorpus(runCorpus);
            OAOutput oa;
            bool haveOa = false;
            if (!runOa.empty()) {
                oa = loadOAFile(runOa);
                haveOa = true;
            } else if (cfg.mode == Mode::Shai) {
                oa = runOA(c.manifest, c.metadata);
                haveOa = true;
            }
            MetricsReport report = runBenchmark(c, haveOa ? &oa : nullptr, cfg);
            std::string csv = metricsCsv(report);
            if (!runOut.empty()) spill(runOut, csv);
            std::cout << textReport(report, cfg.costs);
            if (runOut.empty()) std::cout << "\n" << csv;
            return 0;
        }
        if (*sweepCmd) {
            swCfg.mode = parseMode(swModeName);
            swCfg.seed = effectiveSeed(swCfg.seed);
            parseSessions(swSessions, swCfg);
            if (swCfg.sessionLengths.empty()) swCfg.sessionLengths = {8};
            if (!swCfg.sessionsPerLength) swCfg.sessionsPerLength = 50;
            Corpus c = loadCorpus(swCorpus);
            OAOutput oa;
            bool haveOa = false;
            if (!swOa.empty()) {
                oa = loadOAFile(swOa);
                haveOa = true;
            } else if (swCfg.mode == Mode::Shai) {
                oa = runOA(c.manifest, c.metadata);
                haveOa = true;
            }
            auto points = sweepMispredict(c, haveOa ? &oa : nullptr, swCfg, swFractions);
            std::ostringstream out;
            out << "fraction,slowpath,interceptions_total,denials\n";
            for (const auto& p : points)
                out << p.fraction << ',' << p.slowpath << ',' << p.interceptionsTotal << ','
                    << p.denials << '\n';
            if (!swOut.empty()) spill(swOut, out.str());
            std::cout << out.str();
            return 0;
        }
        if (*faultsCmd) {
            Corpus c = loadCorpus(fCorpus);
            OAOutput oa = fOa.empty() ? runOA(c.manifest, c.metadata) : loadOAFile(fOa);
            bool leaked = false;
            for (Mode m : {Mode::Shai, Mode::Dynamic}) {
                Pipeline p(c, m, &oa);
                p.buildIndex();
                for (const FaultResult& r : p.runFaultSuite()) {
                    std::cout << modeName(m) << " " << r.name << " "
                              << (r.blocked ? "blocked" : "LEAKED") << " (" << r.detail << ")\n";
                    if (!r.blocked) leaked = true;
                }
                if (p.leaks() != 0) {
                    std::cout << modeName(m) << " provenance leaks: " << p.leaks() << "\n";
                    leaked = true;
                }
            }
            return leaked ? 3 : 0;
        }
        if (*reportCmd) {
            std::cout << textReport(parseMetricsCsv(slurp(repIn)), repCosts);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
