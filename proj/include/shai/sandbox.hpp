#pragma once

#include "shai/oa.hpp"

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace shai {

using TaskHandle = std::string;

enum class DenyReason {
    None,
    ReadNotImplied,
    UpdateRuleFailed,
    DeclassFailed,
    NoReceiverCapability,
    FdOnlyData,
    FilterDenied,
    TaintDecrease,
    OpenWriteLeak,
    UnknownInstance,
    UnknownConduit,
};

const char* denyReasonName(DenyReason r);

struct Verdict {
    bool allow = false;
    DenyReason reason = DenyReason::None;

    static Verdict ok() { return {true, DenyReason::None}; }
    static Verdict deny(DenyReason r) { return {false, r}; }
};

// Adjudicates accesses the sandbox cannot decide from granted capabilities.
class AccessMonitor {
public:
    virtual ~AccessMonitor() = default;
    virtual Verdict onOpenFault(const TaskHandle& task, const std::string& conduitId,
                                AccessMode mode) = 0;
    virtual Verdict onTransferFault(const TaskHandle& receiver, const std::string& conduitId) = 0;
    virtual Verdict onKvFault(const TaskHandle& task, const std::string& op,
                              const std::string& key) = 0;
};

enum class ConduitKind { Ingress, Internal, Egress };

struct ConduitVersion {
    std::string content;
    std::set<std::string> provenance; // ingress ids; test oracle, unseen by monitors
};

struct Conduit {
    std::string id;
    std::string classId;
    ConduitKind kind = ConduitKind::Internal;
    bool fdOnlyPipe = false;
    std::vector<ConduitVersion> versions; // append-only
};

// Ordered grant structure; transfer lookups binary-search the group vector
// and report their probe count, mirroring the kernel's capability tree.
class CapabilitySet {
public:
    CapabilitySet() = default;
    explicit CapabilitySet(std::vector<CapabilityGroup> groups);

    bool covers(const std::string& conduitClass, Rights need) const;
    // probe count of the last groupLookup call; <= ceil(log2(groups)) + 1
    bool groupLookup(const std::string& conduitClass, Rights need, std::size_t* probes) const;
    std::size_t groupCount() const { return groups_.size(); }
    const std::vector<CapabilityGroup>& groups() const { return groups_; }
    bool empty() const { return groups_.empty(); }

private:
    std::vector<CapabilityGroup> groups_; // sorted by id
    std::unordered_map<std::string, std::size_t> classGroup_; // class -> index
};

struct KvFilter {
    std::set<std::string> ops;        // "GET", "PUT"
    std::vector<std::string> prefixes; // allowed key prefixes

    bool permits(const std::string& op, const std::string& key) const;
};

struct SandboxCounters {
    std::size_t fastpathOpens = 0;
    std::size_t openFaults = 0;
    std::size_t transferChecks = 0;
    std::size_t transferFaults = 0;
    std::size_t fdOnlyDataBlocks = 0;
    std::size_t kvServed = 0;
    std::size_t kvDenied = 0;
    std::size_t maxTransferProbes = 0;
};

struct OpenHandle {
    std::string conduitId;
    Rights rights;
};

// The single mediation point for every conduit access in the simulation:
// opens, descriptor transfers, pipe data writes and KV requests all pass
// through here and end in a capability check or a monitor verdict.
class Sandbox {
public:
    void setMonitor(AccessMonitor* m) { monitor_ = m; }

    Conduit& createConduit(const std::string& id, const std::string& classId, ConduitKind kind,
                           bool fdOnlyPipe = false);
    bool hasConduit(const std::string& id) const { return conduits_.count(id) != 0; }
    Conduit* conduit(const std::string& id);
    const Conduit* conduit(const std::string& id) const;

    // Monitor-side grant interface.
    void installCapabilities(const TaskHandle& task, CapabilitySet set);
    void installKvFilter(const TaskHandle& task, KvFilter filter);
    void removeKvFilter(const TaskHandle& task);
    void dropTaskState(const TaskHandle& task); // capabilities, filters, handles
    const CapabilitySet& capabilitiesOf(const TaskHandle& task) const;
    const std::vector<OpenHandle>& openHandlesOf(const TaskHandle& task) const;
    std::vector<OpenHandle> openWriteHandlesOf(const TaskHandle& task) const;
    void closeHandles(const TaskHandle& task) { handles_[task].clear(); }

    struct OpenResult {
        Verdict verdict;
        bool fastPath = false;
    };

    OpenResult openConduit(const TaskHandle& task, const std::string& conduitId,
                           AccessMode mode);

    // Descriptor transfer over an fd-only pipe; the receiver must already be
    // able to open the referenced conduit.
    struct TransferResult {
        Verdict verdict;
        bool fastPath = false; // decided by the capability tree alone
    };
    TransferResult transferDescriptor(const TaskHandle& sender, const TaskHandle& receiver,
                                      const std::string& conduitId, const std::string& pipeId);

    // Data write; denied unconditionally on fd-only pipes.
    Verdict pipeWriteData(const TaskHandle& task, const std::string& pipeId);

    Verdict kvRequest(const TaskHandle& task, const std::string& op, const std::string& key);

    void appendVersion(const std::string& conduitId, ConduitVersion v);

    const SandboxCounters& counters() const { return counters_; }
    void resetCounters() { counters_ = {}; }

private:
    AccessMonitor* monitor_ = nullptr;
    std::map<std::string, Conduit> conduits_;
    std::map<TaskHandle, CapabilitySet> caps_;
    std::map<TaskHandle, KvFilter> kvFilters_;
    std::map<TaskHandle, std::vector<OpenHandle>> handles_;
    SandboxCounters counters_;
};

} // namespace shai
