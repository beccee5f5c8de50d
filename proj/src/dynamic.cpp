#include "shai/dynamic.hpp"

namespace shai {

DynamicMonitor::DynamicMonitor(Sandbox* sandbox, MetadataStore* store, const Manifest* manifest,
                               TickCosts costs)
    : sandbox_(sandbox), store_(store), manifest_(manifest), costs_(costs) {}

void DynamicMonitor::logRow(const std::string& session, const std::string& kind,
                            const TaskHandle& task, const std::string& conduit,
                            const Verdict& v) {
    rmTicks_ += costs_.rmEntry;
    std::string decision = v.allow ? "allow" : std::string("deny:") + denyReasonName(v.reason);
    log_.push_back({session, kind, task, conduit, decision, rmTicks_});
}

bool DynamicMonitor::registerTask(const std::string& session, const TaskHandle& handle,
                                  const std::string& instanceId) {
    DynTaskState st;
    st.session = session;
    auto inst = manifest_->tasks.find(instanceId);
    if (inst != manifest_->tasks.end()) {
        st.principal = inst->second.principal;
        st.region = inst->second.region;
    }
    tasks_[handle] = std::move(st);
    // bookkeeping only: a pure-dynamic system has no registration protocol,
    // the kernel tracks task identity implicitly
    return true;
}

void DynamicMonitor::acceptConnection(const std::string& session, const TaskHandle& handle) {
    (void)session;
    (void)handle;
}

bool DynamicMonitor::authenticateSession(const std::string& session, const TaskHandle& handle,
                                         const std::string& credential,
                                         const std::string& actualRegion,
                                         const std::string& egressConduitId) {
    (void)egressConduitId; // no ahead-of-time grant to fold in
    auto it = tasks_.find(handle);
    if (it == tasks_.end()) {
        logRow(session, "authenticate", handle, "", Verdict::deny(DenyReason::UnknownInstance));
        return false;
    }
    if (!it->second.principal.empty() && it->second.principal != credential) {
        logRow(session, "authenticate", handle, "", Verdict::deny(DenyReason::UnknownInstance));
        return false;
    }
    it->second.principal = credential;
    it->second.region = actualRegion; // no prediction: the actual value binds
    return true;
}

void DynamicMonitor::resetSession(const std::string& session, const TaskHandle& handle) {
    sandbox_->dropTaskState(handle);
    tasks_.erase(handle);
    resetTicks_ += costs_.execReset; // teardown is a process re-exec here
    logRow(session, "reset", handle, "", Verdict::ok());
}

void DynamicMonitor::foldOpenLog(DynTaskState& st) {
    const MetadataView& view = store_->view();
    for (const std::string& cls : st.openLog) {
        const Policy* p = view.policyOfClass(cls);
        if (p) st.taint.add(*p);
    }
    st.openLog.clear();
}

const DynamicMonitor::DynTaskState* DynamicMonitor::stateOf(const TaskHandle& handle) const {
    auto it = tasks_.find(handle);
    return it == tasks_.end() ? nullptr : &it->second;
}

Verdict DynamicMonitor::writeCheck(DynTaskState& st, const std::string& classId,
                                   bool fdTransfer) {
    foldOpenLog(st);
    const MetadataView& view = store_->view();
    const Policy* pol = view.policyOfClass(classId);
    if (!pol) return Verdict::deny(DenyReason::UnknownConduit);
    ConduitFacts facts = ConduitFacts::of(classId, *pol);
    WriterIdentity writer{st.principal, st.region, fdTransfer || facts.fdOnly};
    if (!policyEval(pol->update, writer, view).okay)
        return Verdict::deny(DenyReason::UpdateRuleFailed);
    if (!isAsRestrWithDeclass(facts, st.taint, view).okay)
        return Verdict::deny(DenyReason::DeclassFailed);
    return Verdict::ok();
}

Verdict DynamicMonitor::onOpenFault(const TaskHandle& task, const std::string& conduitId,
                                    AccessMode mode) {
    auto it = tasks_.find(task);
    if (it == tasks_.end()) {
        Verdict v = Verdict::deny(DenyReason::UnknownInstance);
        logRow("", mode == AccessMode::Read ? "open" : "write-check", task, conduitId, v);
        return v;
    }
    DynTaskState& st = it->second;
    const Conduit* c = sandbox_->conduit(conduitId);
    if (!c) {
        Verdict v = Verdict::deny(DenyReason::UnknownConduit);
        logRow(st.session, "open", task, conduitId, v);
        return v;
    }
    if (mode == AccessMode::Read) {
        st.openLog.push_back(c->classId); // reads always succeed, taint catches up
        logRow(st.session, "open", task, conduitId, Verdict::ok());
        return Verdict::ok();
    }
    Verdict v = writeCheck(st, c->classId, false);
    logRow(st.session, "write-check", task, conduitId, v);
    return v;
}

Verdict DynamicMonitor::onTransferFault(const TaskHandle& receiver,
                                        const std::string& conduitId) {
    auto it = tasks_.find(receiver);
    const Conduit* c = sandbox_->conduit(conduitId);
    Verdict v = Verdict::deny(DenyReason::NoReceiverCapability);
    if (it != tasks_.end() && c) {
        const MetadataView& view = store_->view();
        const Policy* pol = view.policyOfClass(c->classId);
        SessionContext session{it->second.principal, it->second.region, view.clock};
        if (pol && evalRule(effectiveReadRequirement(*pol, view), session, view)) {
            it->second.openLog.push_back(c->classId); // receiving the fd is a read
            v = Verdict::ok();
        }
    }
    logRow(it == tasks_.end() ? "" : it->second.session, "transfer", receiver, conduitId, v);
    return v;
}

Verdict DynamicMonitor::onKvFault(const TaskHandle& task, const std::string& op,
                                  const std::string& key) {
    auto it = tasks_.find(task);
    if (it == tasks_.end()) {
        Verdict v = Verdict::deny(DenyReason::UnknownInstance);
        logRow("", "kv", task, "kv:" + key, v);
        return v;
    }
    DynTaskState& st = it->second;
    std::string conduitId = "kv:" + key;
    const Conduit* c = sandbox_->conduit(conduitId);
    if (!c) {
        Verdict v = Verdict::deny(DenyReason::UnknownConduit);
        logRow(st.session, "kv", task, conduitId, v);
        return v;
    }
    Verdict v;
    if (op == "PUT") {
        v = writeCheck(st, c->classId, false);
    } else {
        st.openLog.push_back(c->classId);
        v = Verdict::ok();
    }
    logRow(st.session, "kv", task, conduitId, v);
    return v;
}

} // namespace shai
