#pragma once

#include "shai/pipeline.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace shai {

struct RunConfig {
    Mode mode = Mode::Shai;
    std::vector<int> sessionLengths = {1, 8, 32, 1000};
    int sessionsPerLength = 20;
    double mispredictFraction = 0.0;
    std::uint64_t seed = 7;
    TickCosts costs;
    bool patchSlowpath = false;
    int indexShards = 16;
};

// One benchmark configuration point. Counters are deltas over the session
// phase only; index construction and service registration are excluded.
struct MetricsRow {
    std::string mode;
    int sessionLen = 0;
    int sessions = 0;
    long interceptionsTotal = 0;
    double interceptionsPerQuery = 0.0;
    long fastpathOpens = 0;
    long slowpathOpens = 0;
    long denials = 0;
    long resetTicks = 0;
    long rmTicks = 0;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;
};

// Runs one Pipeline per session length with identical scripts per seed.
// `oa` may be null for baseline and dynamic modes.
MetricsReport runBenchmark(const Corpus& corpus, const OAOutput* oa, const RunConfig& config);

// Modeled total cost of one query: base work plus amortized enforcement.
double ticksPerQuery(const MetricsRow& row, const TickCosts& costs);

std::string metricsCsv(const MetricsReport& report);
MetricsReport parseMetricsCsv(const std::string& text);

// Plain-text rendering with the per-session-length amortization table.
std::string textReport(const MetricsReport& report, const TickCosts& costs);

struct SweepPoint {
    double fraction = 0.0;
    long slowpath = 0;           // non-lifecycle interceptions in the session phase
    long interceptionsTotal = 0; // including the 4-per-session lifecycle rows
    long denials = 0;
};

// Fixed-length sessions at each misprediction fraction; scripts share the
// seed so only the region predictions differ across points.
std::vector<SweepPoint> sweepMispredict(const Corpus& corpus, const OAOutput* oa,
                                        RunConfig config, const std::vector<double>& fractions);

// Least-squares fit y = a + b*x; returns R^2 (1.0 for a perfect fit).
double linearFitR2(const std::vector<double>& xs, const std::vector<double>& ys);

} // namespace shai
