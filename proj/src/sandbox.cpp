#include "shai/sandbox.hpp"

#include <algorithm>
#include <stdexcept>

namespace shai {

const char* denyReasonName(DenyReason r) {
    switch (r) {
    case DenyReason::None: return "none";
    case DenyReason::ReadNotImplied: return "read-not-implied";
    case DenyReason::UpdateRuleFailed: return "update-rule-failed";
    case DenyReason::DeclassFailed: return "declass-failed";
    case DenyReason::NoReceiverCapability: return "no-receiver-capability";
    case DenyReason::FdOnlyData: return "fd-only-data";
    case DenyReason::FilterDenied: return "filter-denied";
    case DenyReason::TaintDecrease: return "taint-decrease";
    case DenyReason::OpenWriteLeak: return "open-write-leak";
    case DenyReason::UnknownInstance: return "unknown-instance";
    case DenyReason::UnknownConduit: return "unknown-conduit";
    }
    return "?";
}

CapabilitySet::CapabilitySet(std::vector<CapabilityGroup> groups) : groups_(std::move(groups)) {
    std::sort(groups_.begin(), groups_.end(),
              [](const CapabilityGroup& a, const CapabilityGroup& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < groups_.size(); ++i)
        for (const auto& cls : groups_[i].classes) classGroup_[cls] = i;
}

bool CapabilitySet::covers(const std::string& conduitClass, Rights need) const {
    auto it = classGroup_.find(conduitClass);
    return it != classGroup_.end() && grants(groups_[it->second].rights, need);
}

bool CapabilitySet::groupLookup(const std::string& conduitClass, Rights need,
                                std::size_t* probes) const {
    // the conduit names the directory group it is linked under; the tree
    // search over granted groups is what the kernel would pay for
    auto it = classGroup_.find(conduitClass);
    if (it == classGroup_.end()) {
        if (probes) *probes = 1;
        return false;
    }
    const std::string& wanted = groups_[it->second].id;
    std::size_t lo = 0, hi = groups_.size(), n = 0;
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        ++n;
        if (groups_[mid].id == wanted) {
            if (probes) *probes = n;
            return grants(groups_[mid].rights, need);
        }
        if (groups_[mid].id < wanted)
            lo = mid + 1;
        else
            hi = mid;
    }
    if (probes) *probes = n + 1;
    return false;
}

bool KvFilter::permits(const std::string& op, const std::string& key) const {
    if (!ops.count(op)) return false;
    for (const auto& p : prefixes)
        if (key.rfind(p, 0) == 0) return true;
    return false;
}

Conduit& Sandbox::createConduit(const std::string& id, const std::string& classId,
                                ConduitKind kind, bool fdOnlyPipe) {
    Conduit& c = conduits_[id];
    c.id = id;
    c.classId = classId;
    c.kind = kind;
    c.fdOnlyPipe = fdOnlyPipe;
    return c;
}

Conduit* Sandbox::conduit(const std::string& id) {
    auto it = conduits_.find(id);
    return it == conduits_.end() ? nullptr : &it->second;
}

const Conduit* Sandbox::conduit(const std::string& id) const {
    auto it = conduits_.find(id);
    return it == conduits_.end() ? nullptr : &it->second;
}

void Sandbox::installCapabilities(const TaskHandle& task, CapabilitySet set) {
    caps_[task] = std::move(set); // atomic snapshot swap in the model
}

void Sandbox::installKvFilter(const TaskHandle& task, KvFilter filter) {
    kvFilters_[task] = std::move(filter);
}

void Sandbox::removeKvFilter(const TaskHandle& task) {
    kvFilters_.erase(task);
}

void Sandbox::dropTaskState(const TaskHandle& task) {
    caps_.erase(task);
    kvFilters_.erase(task);
    handles_.erase(task);
}

const CapabilitySet& Sandbox::capabilitiesOf(const TaskHandle& task) const {
    static const CapabilitySet empty;
    auto it = caps_.find(task);
    return it == caps_.end() ? empty : it->second;
}

const std::vector<OpenHandle>& Sandbox::openHandlesOf(const TaskHandle& task) const {
    static const std::vector<OpenHandle> none;
    auto it = handles_.find(task);
    return it == handles_.end() ? none : it->second;
}

std::vector<OpenHandle> Sandbox::openWriteHandlesOf(const TaskHandle& task) const {
    std::vector<OpenHandle> out;
    for (const auto& h : openHandlesOf(task))
        if (grants(h.rights, Rights::Write)) out.push_back(h);
    return out;
}

Sandbox::OpenResult Sandbox::openConduit(const TaskHandle& task, const std::string& conduitId,
                                         AccessMode mode) {
    const Conduit* c = conduit(conduitId);
    if (!c) return {Verdict::deny(DenyReason::UnknownConduit), false};
    Rights need = mode == AccessMode::Read ? Rights::Read : Rights::Write;
    auto capIt = caps_.find(task);
    if (capIt != caps_.end() && capIt->second.covers(c->classId, need)) {
        ++counters_.fastpathOpens;
        handles_[task].push_back({conduitId, need});
        return {Verdict::ok(), true};
    }
    ++counters_.openFaults;
    if (!monitor_) return {Verdict::ok(), false}; // unmonitored: baseline behavior
    Verdict v = monitor_->onOpenFault(task, conduitId, mode);
    if (v.allow) handles_[task].push_back({conduitId, need});
    return {v, false};
}

Sandbox::TransferResult Sandbox::transferDescriptor(const TaskHandle& sender,
                                                    const TaskHandle& receiver,
                                                    const std::string& conduitId,
                                                    const std::string& pipeId) {
    (void)sender;
    const Conduit* pipe = conduit(pipeId);
    const Conduit* c = conduit(conduitId);
    if (!pipe || !c) return {Verdict::deny(DenyReason::UnknownConduit), false};
    ++counters_.transferChecks;
    std::size_t probes = 0;
    auto capIt = caps_.find(receiver);
    if (capIt != caps_.end() &&
        capIt->second.groupLookup(c->classId, Rights::Read, &probes)) {
        counters_.maxTransferProbes = std::max(counters_.maxTransferProbes, probes);
        return {Verdict::ok(), true};
    }
    counters_.maxTransferProbes = std::max(counters_.maxTransferProbes, probes);
    ++counters_.transferFaults;
    if (!monitor_) return {Verdict::ok(), false};
    return {monitor_->onTransferFault(receiver, conduitId), false};
}

Verdict Sandbox::pipeWriteData(const TaskHandle& task, const std::string& pipeId) {
    const Conduit* pipe = conduit(pipeId);
    if (!pipe) return Verdict::deny(DenyReason::UnknownConduit);
    if (pipe->fdOnlyPipe) {
        ++counters_.fdOnlyDataBlocks; // blocked-leak event, no monitor involved
        return Verdict::deny(DenyReason::FdOnlyData);
    }
    return openConduit(task, pipeId, AccessMode::Write).verdict;
}

Verdict Sandbox::kvRequest(const TaskHandle& task, const std::string& op,
                           const std::string& key) {
    auto it = kvFilters_.find(task);
    if (it != kvFilters_.end()) {
        if (it->second.permits(op, key)) {
            ++counters_.kvServed;
            return Verdict::ok();
        }
        ++counters_.kvDenied;
        return Verdict::deny(DenyReason::FilterDenied);
    }
    // no filter installed: the request faults to the monitor
    if (!monitor_) {
        ++counters_.kvServed;
        return Verdict::ok();
    }
    Verdict v = monitor_->onKvFault(task, op, key);
    if (v.allow)
        ++counters_.kvServed;
    else
        ++counters_.kvDenied;
    return v;
}

void Sandbox::appendVersion(const std::string& conduitId, ConduitVersion v) {
    Conduit* c = conduit(conduitId);
    if (!c) throw std::runtime_error("appendVersion: unknown conduit " + conduitId);
    c->versions.push_back(std::move(v));
}

} // namespace shai
