#pragma once

#include "shai/dynamic.hpp"
#include "shai/monitor.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace shai {

struct CorpusSpec {
    int users = 200;
    int friendsPerUser = 50; // capped at users/4
    int docCount = 5000;
    double publicFrac = 0.5;
    double privateFrac = 0.3;
    double friendsFrac = 0.2;
    double censoredFraction = 0.011; // drawn from the public share
    int regions = 3;
    int vocabulary = 60;
    int wordsPerDoc = 8;
    std::uint64_t seed = 7;
};

struct Corpus {
    CorpusSpec spec;
    std::vector<std::string> users;
    std::vector<std::string> regions;
    std::map<std::string, std::string> userRegion; // predicted region per user

    std::map<std::string, std::string> docClass; // doc id -> conduit class
    std::map<std::string, std::string> docOwner; // empty for public docs
    std::map<std::string, std::string> docText;
    std::set<std::string> censoredDocs;

    Manifest manifest;
    MetadataView metadata; // policies, class bindings, friend/blacklist lists
};

// Deterministic for a fixed CorpusSpec. Friendships are symmetric; doc
// policy proportions follow the configured mix.
Corpus generateCorpus(const CorpusSpec& spec);

void persistCorpus(const Corpus& c, const std::string& dir);
Corpus loadCorpus(const std::string& dir);

struct SessionScript {
    std::string user;
    std::string region; // actual region for the session
    std::vector<std::string> queries;
};

std::vector<SessionScript> makeScripts(const Corpus& c, int count, int length,
                                       double mispredictFraction, std::uint64_t seed);
std::string serializeScripts(const std::vector<SessionScript>& s);
std::vector<SessionScript> parseScripts(const std::string& text);

enum class Mode { Baseline, Dynamic, Shai };
const char* modeName(Mode m);

// One mediated operation as the workload saw it, for cross-mode comparison.
struct AccessRecord {
    std::string kind; // open-r|open-w|transfer|fd-read|kv|create
    std::string task; // instance id, mode-independent
    std::string conduit;
    bool allow = false;

    auto operator<=>(const AccessRecord&) const = default;
};

struct FaultResult {
    std::string name;
    bool blocked = false;
    std::string detail;
};

// One full enforcement run: owns the sandbox, the metadata store and the
// mode's monitor, executes indexer/engine/worker tasks, and keeps the
// shadow-provenance oracle the monitors never see.
class Pipeline {
public:
    Pipeline(const Corpus& corpus, Mode mode, const OAOutput* oa, TickCosts costs = {},
             bool patchSlowpath = false);
    ~Pipeline();

    // Builds the toy inverted index; index-file creations are writes of new
    // conduits and fault to the monitor in shai mode.
    void buildIndex(int shards = 16);

    void runSession(const SessionScript& script);

    // Fault scenarios F1..F6; each runs its own short session around the
    // injected misbehavior.
    FaultResult injectFault(int scenario);
    std::vector<FaultResult> runFaultSuite();

    const std::vector<AccessRecord>& records() const { return records_; }
    std::vector<InterceptionRow> interceptions() const; // merged monitor log
    std::size_t sessionInterceptions(const std::string& sessionId) const;
    const SandboxCounters& counters() const { return sandbox_.counters(); }
    std::size_t leaks() const { return leaks_; }
    std::size_t denials() const { return denials_; }
    std::size_t sessionsRun() const { return sessionCounter_; }
    std::size_t queriesRun() const { return queries_; }
    long rmTicks() const;
    long resetTicks() const;
    Mode mode() const { return mode_; }
    MetadataStore& store() { return store_; }
    Sandbox& sandbox() { return sandbox_; }
    ShaiMonitor* shaiMonitor() { return shai_.get(); }
    DynamicMonitor* dynamicMonitor() { return dyn_.get(); }

    // Readability oracle the engine personalizes with (and tests reuse).
    bool readableBy(const std::string& docId, const std::string& user,
                    const std::string& region) const;
    std::vector<std::string> search(const std::string& query, const std::string& user,
                                    const std::string& region, int k = 10) const;

private:
    struct SessionState {
        std::string id;
        std::string handle;
        std::string user;
        std::string region; // actual
        std::string qpipe, rpipe, egress;
        bool live = false;
    };

    SessionState beginSession(const std::string& user, const std::string& region);
    void endSession(SessionState& s);
    void runQuery(SessionState& s, const std::string& query);
    void record(const std::string& kind, const std::string& task, const std::string& conduit,
                bool allow);
    void taintTag(const std::string& handle, const std::string& ingressId);
    void mergeTag(const std::string& handle, const std::set<std::string>& ids);
    // Writes a version to an egress conduit after the monitor allowed it and
    // scores it against the provenance oracle.
    void egressWrite(const SessionState& s, const std::string& content);
    void registerServiceTask(const std::string& session, const std::string& handle,
                             const std::string& instanceId);

    const Corpus& corpus_;
    Mode mode_;
    TickCosts costs_;
    MetadataStore store_;
    Sandbox sandbox_;
    std::unique_ptr<ShaiMonitor> shai_;
    std::unique_ptr<DynamicMonitor> dyn_;

    std::map<std::string, std::vector<std::string>> index_; // token -> doc ids
    std::map<std::string, std::string> tokenShard_;         // token -> shard conduit
    std::map<std::string, std::set<std::string>> shardDocs_; // shard -> provenance
    bool indexBuilt_ = false;

    std::map<std::string, std::set<std::string>> tags_; // task handle -> ingress ids
    std::vector<AccessRecord> records_;
    std::size_t sessionCounter_ = 0;
    std::size_t queries_ = 0;
    std::size_t leaks_ = 0;
    std::size_t denials_ = 0;
};

} // namespace shai
