// End-to-end acceptance checks. Each criterion prints one pass/fail line;
// the process exits non-zero if any criterion fails.
#include "support.hpp"

#include "shai/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace shai;

namespace {

int failures = 0;

void report(int n, const std::string& name, bool ok, const std::string& detail = "") {
    std::cout << "C" << n << " " << name << ": " << (ok ? "PASS" : "FAIL");
    if (!detail.empty()) std::cout << " (" << detail << ")";
    std::cout << "\n" << std::flush;
    if (!ok) ++failures;
}

double seconds(std::chrono::steady_clock::time_point from) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - from).count();
}

Corpus benchCorpus() {
    CorpusSpec spec;
    spec.users = 20;
    spec.friendsPerUser = 5;
    spec.docCount = 200;
    spec.regions = 3;
    spec.censoredFraction = 0.05;
    spec.seed = 11;
    return generateCorpus(spec);
}

std::vector<AccessRecord> runTraces(const Corpus& c, Mode mode, const OAOutput* oa,
                                    const std::vector<SessionScript>& scripts,
                                    std::size_t* leaks = nullptr) {
    Pipeline p(c, mode, oa);
    p.buildIndex();
    for (const auto& s : scripts) p.runSession(s);
    if (leaks) *leaks += p.leaks();
    auto r = p.records();
    std::sort(r.begin(), r.end());
    return r;
}

// --- criterion 1: soundness of the restrictiveness check -----------------

void criterion1() {
    auto t0 = std::chrono::steady_clock::now();
    testsupport::Gen gen(2026);
    FiniteUniverse u = testsupport::smallUniverse();
    int okays = 0, violations = 0;
    for (int i = 0; i < 10000; ++i) {
        Rule r1 = gen.rule();
        Rule r2 = gen.rule();
        MetadataView v = gen.view();
        CheckResult r = isAsRestr(r1, r2, v);
        if (!r.okay) continue;
        ++okays;
        if (!semanticImpliesUnder(r1, r2, u, r.conds, v.clock)) ++violations;
    }
    double dt = seconds(t0);
    std::ostringstream d;
    d << okays << " positives, " << violations << " violations, " << dt << " s";
    report(1, "restrictiveness soundness", violations == 0 && okays > 500 && dt < 60.0,
           d.str());
}

// --- criterion 2: every offline certification replays as allow -----------

void criterion2() {
    auto t0 = std::chrono::steady_clock::now();
    CorpusSpec spec; // defaults: 200 users, 5000 docs
    spec.seed = 11;
    Corpus c = generateCorpus(spec);
    OAOutput oa = runOA(c.manifest, c.metadata, {.activeOnly = false, .parallel = 4});

    MetadataStore store(c.metadata);
    Sandbox sandbox;
    for (const auto& [id, decl] : c.manifest.classes)
        sandbox.createConduit("cv:" + id, id, ConduitKind::Internal);
    ShaiMonitor mon(&sandbox, &store, &c.manifest, oa, {}, false);
    sandbox.setMonitor(&mon);
    for (const auto& [id, task] : c.manifest.tasks) mon.registerTask("replay", "h:" + id, id);

    std::size_t total = 0, allowed = 0;
    for (const CertifiedAccess& cert : oa.certified) {
        ++total;
        Verdict v = mon.onOpenFault("h:" + cert.task, "cv:" + cert.conduitClass, cert.mode);
        if (v.allow) ++allowed;
    }
    double dt = seconds(t0);
    std::ostringstream d;
    d << allowed << "/" << total << " allowed, " << dt << " s";
    report(2, "offline/slow-path agreement", total > 1000 && allowed == total && dt < 30.0,
           d.str());
}

// --- criteria 3 and 9 share the trace set ---------------------------------

Corpus g_traceCorpus;
std::vector<SessionScript> g_traceScripts;
std::vector<AccessRecord> g_traceRecords; // enforcing-mode reference decisions
std::size_t g_leaks = 0;

void criterion3() {
    g_traceCorpus = benchCorpus();
    OAOutput oa = runOA(g_traceCorpus.manifest, g_traceCorpus.metadata);
    g_traceScripts = makeScripts(g_traceCorpus, 1000, 5, 0.25, 91);
    g_traceRecords = runTraces(g_traceCorpus, Mode::Shai, &oa, g_traceScripts, &g_leaks);
    auto dyn = runTraces(g_traceCorpus, Mode::Dynamic, nullptr, g_traceScripts, &g_leaks);
    std::ostringstream d;
    d << g_traceScripts.size() << " traces, " << g_traceRecords.size() << " decisions";
    report(3, "mode equivalence", !g_traceRecords.empty() && g_traceRecords == dyn, d.str());
}

void criterion9() {
    // delete half of the manifest's expected-access entries at random
    Corpus mutated = g_traceCorpus;
    std::mt19937_64 rng(4242);
    std::size_t dropped = 0, kept = 0;
    for (auto& [id, task] : mutated.manifest.tasks) {
        auto prune = [&](std::vector<std::string>& v) {
            std::vector<std::string> out;
            for (auto& cls : v)
                if (rng() % 2) { out.push_back(std::move(cls)); ++kept; }
                else ++dropped;
            v = std::move(out);
        };
        prune(task.reads);
        prune(task.writes);
    }
    OAOutput oa = runOA(mutated.manifest, mutated.metadata);
    auto records = runTraces(mutated, Mode::Shai, &oa, g_traceScripts, &g_leaks);
    std::ostringstream d;
    d << dropped << " entries dropped, " << kept << " kept";
    report(9, "untrusted-manifest safety", dropped > 0 && records == g_traceRecords, d.str());
}

// --- criterion 4: four interceptions per predicted session ----------------

void criterion4(const Corpus& c, const OAOutput& oa) {
    bool ok = true;
    std::ostringstream d;
    for (int len : {1, 8, 32, 1000}) {
        Pipeline p(c, Mode::Shai, &oa);
        p.buildIndex();
        std::size_t before = p.interceptions().size();
        auto scripts = makeScripts(c, 5, len, 0.0, 17);
        std::size_t first = p.sessionsRun();
        for (const auto& s : scripts) p.runSession(s);
        g_leaks += p.leaks();
        for (std::size_t i = first; i < p.sessionsRun(); ++i)
            if (p.sessionInterceptions("s" + std::to_string(i)) != 4) ok = false;
        std::size_t total = p.interceptions().size() - before;
        if (total != 4 * scripts.size()) ok = false;
        double perQuery = double(total) / double(scripts.size() * len);
        if (perQuery != 4.0 / double(len)) ok = false;
        d << "L=" << len << ":" << total << " ";
    }
    report(4, "four interceptions per session", ok, d.str());
}

// --- criterion 5: overhead trends across session lengths ------------------

void criterion5(const Corpus& c, const OAOutput& oa, const RunConfig& base,
                MetricsReport& shaiOut, MetricsReport& dynOut) {
    RunConfig cfg = base;
    cfg.mode = Mode::Shai;
    shaiOut = runBenchmark(c, &oa, cfg);
    cfg.mode = Mode::Dynamic;
    dynOut = runBenchmark(c, nullptr, cfg);

    bool ok = shaiOut.rows.size() == dynOut.rows.size() && !shaiOut.rows.empty();
    std::ostringstream d;
    double prev = -1.0;
    std::vector<double> dynTicks;
    for (std::size_t i = 0; ok && i < shaiOut.rows.size(); ++i) {
        const MetricsRow& s = shaiOut.rows[i];
        const MetricsRow& y = dynOut.rows[i];
        if (!(s.interceptionsPerQuery < y.interceptionsPerQuery)) ok = false;
        double t = ticksPerQuery(s, base.costs);
        if (prev >= 0 && t > prev + 1e-9) ok = false; // monotone non-increasing
        prev = t;
        dynTicks.push_back(ticksPerQuery(y, base.costs));
        d << "L=" << s.sessionLen << ":" << s.interceptionsPerQuery << "<"
          << y.interceptionsPerQuery << " ";
    }
    if (ok) {
        double mean = 0;
        for (double t : dynTicks) mean += t;
        mean /= double(dynTicks.size());
        for (double t : dynTicks)
            if (std::abs(t - mean) > 0.10 * mean) ok = false;
        d << "dyn-ticks~" << mean;
    }
    report(5, "overhead trend", ok, d.str());
}

// --- criterion 6: linear misprediction degradation -------------------------

void criterion6(const Corpus& c, const OAOutput& oa) {
    RunConfig cfg;
    cfg.mode = Mode::Shai;
    cfg.sessionLengths = {8};
    cfg.sessionsPerLength = 50;
    cfg.seed = 23;
    std::vector<double> fractions = {0.0, 0.25, 0.5, 0.75, 1.0};
    auto points = sweepMispredict(c, &oa, cfg, fractions);

    std::vector<double> xs, ys;
    for (const SweepPoint& p : points) {
        xs.push_back(p.fraction);
        ys.push_back(double(p.slowpath));
    }
    double r2 = linearFitR2(xs, ys);

    RunConfig dcfg = cfg;
    dcfg.mode = Mode::Dynamic;
    auto dyn = sweepMispredict(c, nullptr, dcfg, {1.0});

    bool grows = points.back().slowpath > points.front().slowpath;
    bool ok = r2 >= 0.98 && grows && points.back().slowpath <= dyn.front().slowpath;
    std::ostringstream d;
    d << "R2=" << r2 << ", slowpath@1.0 " << points.back().slowpath
      << " <= dyn " << dyn.front().slowpath;
    report(6, "linear misprediction degradation", ok, d.str());
}

// --- criterion 7: fault suite + provenance detector ------------------------

void criterion7(const Corpus& c, const OAOutput& oa) {
    bool ok = true;
    std::ostringstream d;
    for (Mode m : {Mode::Shai, Mode::Dynamic}) {
        Pipeline p(c, m, m == Mode::Shai ? &oa : nullptr);
        p.buildIndex();
        auto results = p.runFaultSuite();
        if (results.size() != 6) ok = false;
        for (const FaultResult& r : results) {
            if (!r.blocked) {
                ok = false;
                d << modeName(m) << " " << r.name << " LEAKED; ";
            }
        }
        if (p.leaks() != 0) {
            ok = false;
            d << modeName(m) << " provenance leaks=" << p.leaks() << "; ";
        }
    }
    if (g_leaks != 0) {
        ok = false;
        d << "benchmark leaks=" << g_leaks << "; ";
    }
    if (ok) d << "12 scenarios blocked, 0 flows";
    report(7, "fault suite and provenance", ok, d.str());
}

// --- criterion 8: analysis cost scales with policy classes -----------------

void criterion8() {
    const int N = 10000, T = 5;
    bool ok = true;
    std::ostringstream d;
    for (int K : {10, 100}) {
        std::ostringstream pol, man;
        for (int k = 0; k < K; ++k)
            pol << "policy p" << k << " { read :- key(u" << k
                << "); update :- key(owner); declassify :- propagate; }\n";
        for (int n = 0; n < N; ++n)
            man << "class c" << n << " policy=p" << (n % K) << " members=x\n";
        for (int t = 0; t < T; ++t) {
            man << "task t" << t << " user=owner region=eu taint=\n";
            for (int n = 0; n < N; ++n)
                man << "reads t" << t << " c" << n << "\nwrites t" << t << " c" << n << "\n";
        }
        Manifest m = parseManifest(man.str());
        MetadataView v;
        v.policies = parsePolicyFile(pol.str());
        for (const auto& [id, decl] : m.classes) v.classPolicy[id] = decl.policyName;

        OAStats stats;
        runOA(m, v, {}, &stats);
        double bound = 1.1 * double(T) * double(K) * 2.0;
        if (double(stats.restrictivenessChecks) > bound) ok = false;
        d << "K=" << K << ":" << stats.restrictivenessChecks << "<=" << bound << " ";
    }
    report(8, "analysis dedup scaling", ok, d.str());
}

} // namespace

int main() {
    criterion1();
    criterion2();
    criterion3();

    Corpus bench = benchCorpus();
    OAOutput benchOA = runOA(bench.manifest, bench.metadata);
    criterion4(bench, benchOA);

    RunConfig base;
    base.sessionsPerLength = 20;
    base.seed = 7;
    MetricsReport shaiRep, dynRep;
    criterion5(bench, benchOA, base, shaiRep, dynRep);
    criterion6(bench, benchOA);
    criterion7(bench, benchOA);
    criterion8();
    criterion9();

    if (failures) {
        std::cout << failures << " criteria failed\n";
        return 1;
    }
    std::cout << "all criteria passed\n";
    return 0;
}
