#include "shai/bench.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace shai {

namespace {

bool lifecycleKind(const std::string& kind) {
    return kind == "register" || kind == "accept" || kind == "authenticate" || kind == "reset";
}

struct Snapshot {
    std::size_t rows = 0;
    SandboxCounters counters;
    std::size_t denials = 0;
    long rmTicks = 0;
    long resetTicks = 0;

    static Snapshot of(const Pipeline& p) {
        return {p.interceptions().size(), p.counters(), p.denials(), p.rmTicks(),
                p.resetTicks()};
    }
};

} // namespace

MetricsReport runBenchmark(const Corpus& corpus, const OAOutput* oa, const RunConfig& config) {
    MetricsReport report;
    for (int len : config.sessionLengths) {
        Pipeline p(corpus, config.mode, oa, config.costs, config.patchSlowpath);
        p.buildIndex(config.indexShards);
        Snapshot pre = Snapshot::of(p);
        auto scripts = makeScripts(corpus, config.sessionsPerLength, len,
                                   config.mispredictFraction,
                                   config.seed + std::uint64_t(len) * 1000003ull);
        for (const auto& s : scripts) p.runSession(s);
        Snapshot post = Snapshot::of(p);

        MetricsRow row;
        row.mode = modeName(config.mode);
        row.sessionLen = len;
        row.sessions = config.sessionsPerLength;
        row.interceptionsTotal = long(post.rows - pre.rows);
        long queries = long(config.sessionsPerLength) * len;
        row.interceptionsPerQuery = queries ? double(row.interceptionsTotal) / queries : 0.0;
        row.fastpathOpens = long(post.counters.fastpathOpens - pre.counters.fastpathOpens);
        row.slowpathOpens = long(post.counters.openFaults - pre.counters.openFaults);
        row.denials = long(post.denials - pre.denials);
        row.resetTicks = post.resetTicks - pre.resetTicks;
        row.rmTicks = post.rmTicks - pre.rmTicks;
        report.rows.push_back(row);
    }
    return report;
}

double ticksPerQuery(const MetricsRow& row, const TickCosts& costs) {
    long queries = long(row.sessions) * row.sessionLen;
    if (!queries) return double(costs.queryBase);
    return costs.queryBase + double(row.rmTicks + row.resetTicks) / queries;
}

std::string metricsCsv(const MetricsReport& report) {
    std::ostringstream out;
    out << "mode,session_len,sessions,interceptions_total,interceptions_per_query,"
           "fastpath_opens,slowpath_opens,denials,reset_ticks,rm_ticks\n";
    for (const MetricsRow& r : report.rows) {
        out << r.mode << ',' << r.sessionLen << ',' << r.sessions << ','
            << r.interceptionsTotal << ',' << std::setprecision(10) << r.interceptionsPerQuery
            << ',' << r.fastpathOpens << ',' << r.slowpathOpens << ',' << r.denials << ','
            << r.resetTicks << ',' << r.rmTicks << '\n';
    }
    return out.str();
}

MetricsReport parseMetricsCsv(const std::string& text) {
    MetricsReport report;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("mode,", 0) != 0)
        throw std::runtime_error("metrics csv: missing header");
    int lineNo = 1;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty()) continue;
        std::istringstream ls(line);
        MetricsRow r;
        std::string field;
        auto next = [&] {
            if (!std::getline(ls, field, ','))
                throw std::runtime_error("metrics csv line " + std::to_string(lineNo) +
                                         ": too few fields");
            return field;
        };
        r.mode = next();
        r.sessionLen = std::stoi(next());
        r.sessions = std::stoi(next());
        r.interceptionsTotal = std::stol(next());
        r.interceptionsPerQuery = std::stod(next());
        r.fastpathOpens = std::stol(next());
        r.slowpathOpens = std::stol(next());
        r.denials = std::stol(next());
        r.resetTicks = std::stol(next());
        r.rmTicks = std::stol(next());
        report.rows.push_back(r);
    }
    return report;
}

std::string textReport(const MetricsReport& report, const TickCosts& costs) {
    std::ostringstream out;
    out << "mode      len  sessions  icpt/query  ticks/query  fastpath  slowpath  denials\n";
    for (const MetricsRow& r : report.rows) {
        out << std::left << std::setw(10) << r.mode << std::right << std::setw(4)
            << r.sessionLen << std::setw(10) << r.sessions << std::setw(12) << std::fixed
            << std::setprecision(4) << r.interceptionsPerQuery << std::setw(13)
            << std::setprecision(3) << ticksPerQuery(r, costs) << std::setw(10)
            << r.fastpathOpens << std::setw(10) << r.slowpathOpens << std::setw(9) << r.denials
            << '\n';
    }
    out << "\namortization (shai lifecycle budget: 4 interceptions per session)\n";
    out << "len   4/len\n";
    for (const MetricsRow& r : report.rows) {
        if (r.mode != "shai") continue;
        out << std::left << std::setw(6) << r.sessionLen << std::setprecision(4)
            << 4.0 / r.sessionLen << '\n';
    }
    return out.str();
}

std::vector<SweepPoint> sweepMispredict(const Corpus& corpus, const OAOutput* oa,
                                        RunConfig config, const std::vector<double>& fractions) {
    std::vector<SweepPoint> points;
    for (double f : fractions) {
        Pipeline p(corpus, config.mode, oa, config.costs, config.patchSlowpath);
        p.buildIndex(config.indexShards);
        std::size_t preRows = p.interceptions().size();
        std::size_t preDenials = p.denials();
        int len = config.sessionLengths.empty() ? 8 : config.sessionLengths.front();
        auto scripts = makeScripts(corpus, config.sessionsPerLength, len, f, config.seed);
        for (const auto& s : scripts) p.runSession(s);

        SweepPoint pt;
        pt.fraction = f;
        auto rows = p.interceptions();
        for (std::size_t i = preRows; i < rows.size(); ++i) {
            ++pt.interceptionsTotal;
            if (!lifecycleKind(rows[i].kind)) ++pt.slowpath;
        }
        pt.denials = long(p.denials() - preDenials);
        points.push_back(pt);
    }
    return points;
}

double linearFitR2(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("linearFitR2: need >=2 matched points");
    double n = double(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    double denom = n * sxx - sx * sx;
    if (denom == 0) return 0.0;
    double b = (n * sxy - sx * sy) / denom;
    double a = (sy - b * sx) / n;
    double ssRes = 0, ssTot = 0;
    double mean = sy / n;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double fit = a + b * xs[i];
        ssRes += (ys[i] - fit) * (ys[i] - fit);
        ssTot += (ys[i] - mean) * (ys[i] - mean);
    }
    if (ssTot == 0) return ssRes == 0 ? 1.0 : 0.0;
    return 1.0 - ssRes / ssTot;
}

} // namespace shai
