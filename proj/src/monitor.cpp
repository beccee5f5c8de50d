#include "shai/monitor.hpp"

#include <algorithm>
#include <sstream>

namespace shai {

std::string interceptionCsv(const std::vector<InterceptionRow>& rows) {
    std::ostringstream out;
    out << "session_id,kind,task,conduit,decision,tick\n";
    for (const InterceptionRow& r : rows)
        out << r.session << ',' << r.kind << ',' << r.task << ',' << r.conduit << ','
            << r.decision << ',' << r.tick << '\n';
    return out.str();
}

ShaiMonitor::ShaiMonitor(Sandbox* sandbox, MetadataStore* store, const Manifest* manifest,
                         OAOutput oa, TickCosts costs, bool patchSlowpath)
    : sandbox_(sandbox),
      store_(store),
      manifest_(manifest),
      oa_(std::move(oa)),
      costs_(costs),
      patchSlowpath_(patchSlowpath) {
    valid_.resize(oa_.certified.size());
    for (std::size_t i = 0; i < oa_.certified.size(); ++i) {
        byInstance_[oa_.certified[i].task].push_back(i);
        valid_[i] = conditionsHold(oa_.certified[i].conds, store_->view());
    }
}

void ShaiMonitor::logRow(const std::string& session, const std::string& kind,
                         const TaskHandle& task, const std::string& conduit, const Verdict& v) {
    rmTicks_ += costs_.rmEntry;
    std::string decision = v.allow ? "allow" : std::string("deny:") + denyReasonName(v.reason);
    log_.push_back({session, kind, task, conduit, decision, rmTicks_});
}

CapabilitySet ShaiMonitor::compileGrant(const RegisteredTask& rt) const {
    OAOutput subset;
    auto it = byInstance_.find(rt.instanceId);
    if (it != byInstance_.end()) {
        for (std::size_t idx : it->second) {
            if (!valid_[idx]) continue;
            const CertifiedAccess& c = oa_.certified[idx];
            if (rt.withheld.count(c.conduitClass)) continue;
            subset.certified.push_back(c);
        }
    }
    std::vector<CapabilityGroup> groups;
    auto blueprints = compileCapabilities(subset);
    auto bit = blueprints.find(rt.instanceId);
    if (bit != blueprints.end()) groups = bit->second.groups;
    groups.insert(groups.end(), rt.extraGroups.begin(), rt.extraGroups.end());
    return CapabilitySet(std::move(groups));
}

KvFilter ShaiMonitor::kvFilterFor(const RegisteredTask& rt) const {
    KvFilter f;
    auto it = byInstance_.find(rt.instanceId);
    if (it == byInstance_.end()) return f;
    for (std::size_t idx : it->second) {
        if (!valid_[idx]) continue;
        const CertifiedAccess& c = oa_.certified[idx];
        if (rt.withheld.count(c.conduitClass)) continue;
        auto cls = manifest_->classes.find(c.conduitClass);
        if (cls == manifest_->classes.end()) continue;
        const std::string& glob = cls->second.membersGlob;
        if (glob.rfind("kv:", 0) != 0) continue;
        std::string prefix = glob.substr(3);
        if (!prefix.empty() && prefix.back() == '*') prefix.pop_back();
        f.ops.insert(c.mode == AccessMode::Read ? "GET" : "PUT");
        f.prefixes.push_back(prefix);
    }
    return f;
}

void ShaiMonitor::installGrant(const TaskHandle& handle, const RegisteredTask& rt) {
    sandbox_->installCapabilities(handle, compileGrant(rt));
    // A filter is only a grant when it encodes at least one certification;
    // without one the task's kv requests must fault to the monitor instead
    // of being denied outright at the store.
    KvFilter filter = kvFilterFor(rt);
    if (filter.ops.empty())
        sandbox_->removeKvFilter(handle);
    else
        sandbox_->installKvFilter(handle, filter);
}

bool ShaiMonitor::registerTask(const std::string& session, const TaskHandle& handle,
                               const std::string& instanceId) {
    auto inst = manifest_->tasks.find(instanceId);
    if (inst == manifest_->tasks.end()) {
        // unknown instance: no grant; the handle may still use the slow path
        // with an empty (top) taint
        tasks_[handle] = RegisteredTask{instanceId, session, "", "", Taint{}, false, {}, {}};
        logRow(session, "register", handle, "", Verdict::deny(DenyReason::UnknownInstance));
        return false;
    }
    RegisteredTask rt;
    rt.instanceId = instanceId;
    rt.session = session;
    rt.principal = inst->second.principal;
    rt.region = inst->second.region;
    rt.taint = taintOf(inst->second, store_->view());
    tasks_[handle] = rt;
    installGrant(handle, rt);
    logRow(session, "register", handle, "", Verdict::ok());
    return true;
}

void ShaiMonitor::acceptConnection(const std::string& session, const TaskHandle& handle) {
    logRow(session, "accept", handle, "", Verdict::ok());
}

namespace {

Rule rebindRegion(Rule r, const std::string& from, const std::string& to) {
    for (Conjunct& c : r.disjuncts)
        for (Atom& a : c)
            if (a.kind == AtomKind::RegionIs && a.arg == from) a.arg = to;
    return normalize(std::move(r));
}

} // namespace

bool ShaiMonitor::revalidate(const CertifiedAccess& cert, const RegisteredTask& rt) const {
    const MetadataView& view = store_->view();
    const Policy* pol = view.policyOfClass(cert.conduitClass);
    if (!pol) return false;
    if (cert.mode == AccessMode::Read)
        return isAsRestr(rt.taint, effectiveReadRequirement(*pol, view), view).okay;
    ConduitFacts facts = ConduitFacts::of(cert.conduitClass, *pol);
    WriterIdentity writer{rt.principal, rt.region, facts.fdOnly};
    return isAsRestrWithDeclass(facts, rt.taint, view).okay &&
           policyEval(pol->update, writer, view).okay;
}

bool ShaiMonitor::authenticateSession(const std::string& session, const TaskHandle& handle,
                                      const std::string& credential,
                                      const std::string& actualRegion,
                                      const std::string& egressConduitId) {
    auto it = tasks_.find(handle);
    if (it == tasks_.end()) {
        logRow(session, "authenticate", handle, "", Verdict::deny(DenyReason::UnknownInstance));
        return false;
    }
    RegisteredTask& rt = it->second;
    if (!rt.principal.empty() && rt.principal != credential) {
        logRow(session, "authenticate", handle, "", Verdict::deny(DenyReason::UnknownInstance));
        return false;
    }
    bool regrant = false;
    if (!rt.region.empty() && rt.region != actualRegion) {
        // misprediction: rebind the runtime taint, re-validate every
        // certified access under it, withhold failures for this session
        std::string predicted = rt.region;
        for (Policy& c : rt.taint.components)
            c.read = rebindRegion(std::move(c.read), predicted, actualRegion);
        rt.region = actualRegion;
        auto certs = byInstance_.find(rt.instanceId);
        if (certs != byInstance_.end()) {
            for (std::size_t idx : certs->second) {
                if (!valid_[idx]) continue;
                const CertifiedAccess& c = oa_.certified[idx];
                if (!revalidate(c, rt)) rt.withheld.insert(c.conduitClass);
            }
        }
        predictions_.push_back(rt.instanceId + " region=" + actualRegion);
        regrant = true;
    }
    rt.region = actualRegion;
    rt.authenticated = true;
    if (!egressConduitId.empty()) {
        // the egress conduit exists only from this point on; certify its
        // write now and fold the grant into this same interception
        ConditionSet conds;
        Verdict v = slowCheck(&rt, egressConduitId, AccessMode::Write, &conds);
        if (v.allow) {
            const Conduit* c = sandbox_->conduit(egressConduitId);
            rt.extraGroups.push_back(
                {handle + "#egress", Rights::Write, {c->classId}, std::move(conds)});
            regrant = true;
        }
    }
    if (regrant) installGrant(handle, rt);
    logRow(session, "authenticate", handle, egressConduitId, Verdict::ok());
    return true;
}

Verdict ShaiMonitor::reRegister(const std::string& session, const TaskHandle& handle,
                                const std::string& newInstanceId) {
    auto it = tasks_.find(handle);
    auto inst = manifest_->tasks.find(newInstanceId);
    if (it == tasks_.end() || inst == manifest_->tasks.end()) {
        Verdict v = Verdict::deny(DenyReason::UnknownInstance);
        logRow(session, "register", handle, "", v);
        return v;
    }
    RegisteredTask& rt = it->second;
    const MetadataView& view = store_->view();
    Taint newTaint = taintOf(inst->second, view);
    for (const Policy& c : rt.taint.components) {
        if (!isAsRestr(newTaint, c.read, view).okay) {
            Verdict v = Verdict::deny(DenyReason::TaintDecrease);
            logRow(session, "register", handle, "", v);
            return v;
        }
    }
    for (const OpenHandle& h : sandbox_->openWriteHandlesOf(handle)) {
        const Conduit* c = sandbox_->conduit(h.conduitId);
        const Policy* pol = c ? view.policyOfClass(c->classId) : nullptr;
        if (!pol || !isAsRestrWithDeclass(ConduitFacts::of(c->classId, *pol), newTaint, view).okay) {
            Verdict v = Verdict::deny(DenyReason::OpenWriteLeak);
            logRow(session, "register", handle, h.conduitId, v);
            return v;
        }
    }
    rt.instanceId = newInstanceId;
    rt.principal = inst->second.principal;
    rt.region = inst->second.region;
    rt.taint = std::move(newTaint);
    rt.withheld.clear();
    rt.extraGroups.clear();
    installGrant(handle, rt);
    logRow(session, "register", handle, "", Verdict::ok());
    return Verdict::ok();
}

void ShaiMonitor::resetSession(const std::string& session, const TaskHandle& handle) {
    sandbox_->dropTaskState(handle);
    tasks_.erase(handle);
    resetTicks_ += costs_.lwcReset;
    logRow(session, "reset", handle, "", Verdict::ok());
}

Verdict ShaiMonitor::slowCheck(const RegisteredTask* rt, const std::string& conduitId,
                               AccessMode mode, ConditionSet* conds) const {
    const Conduit* c = sandbox_->conduit(conduitId);
    if (!c) return Verdict::deny(DenyReason::UnknownConduit);
    const MetadataView& view = store_->view();
    const Policy* pol = view.policyOfClass(c->classId);
    if (!pol) return Verdict::deny(DenyReason::UnknownConduit);
    static const Taint emptyTaint;
    const Taint& taint = rt ? rt->taint : emptyTaint;
    if (mode == AccessMode::Read) {
        CheckResult r = isAsRestr(taint, effectiveReadRequirement(*pol, view), view);
        if (!r.okay) return Verdict::deny(DenyReason::ReadNotImplied);
        if (conds) conds->insert(r.conds.begin(), r.conds.end());
        return Verdict::ok();
    }
    ConduitFacts facts = ConduitFacts::of(c->classId, *pol);
    WriterIdentity writer{rt ? rt->principal : "", rt ? rt->region : "", facts.fdOnly};
    CheckResult up = policyEval(pol->update, writer, view);
    if (!up.okay) return Verdict::deny(DenyReason::UpdateRuleFailed);
    CheckResult decl = isAsRestrWithDeclass(facts, taint, view);
    if (!decl.okay) return Verdict::deny(DenyReason::DeclassFailed);
    if (conds) {
        conds->insert(up.conds.begin(), up.conds.end());
        conds->insert(decl.conds.begin(), decl.conds.end());
    }
    return Verdict::ok();
}

Verdict ShaiMonitor::onOpenFault(const TaskHandle& task, const std::string& conduitId,
                                 AccessMode mode) {
    auto it = tasks_.find(task);
    RegisteredTask* rt = it == tasks_.end() ? nullptr : &it->second;
    ConditionSet conds;
    Verdict v = slowCheck(rt, conduitId, mode, &conds);
    std::string session = rt ? rt->session : "";
    logRow(session, mode == AccessMode::Read ? "slow-path-open" : "write-check", task,
           conduitId, v);
    if (patchSlowpath_ && v.allow && rt) {
        const Conduit* c = sandbox_->conduit(conduitId);
        rt->extraGroups.push_back({task + "#patch" + std::to_string(rt->extraGroups.size()),
                                   mode == AccessMode::Read ? Rights::Read : Rights::Write,
                                   {c->classId},
                                   std::move(conds)});
        installGrant(task, *rt);
    }
    return v;
}

Verdict ShaiMonitor::onTransferFault(const TaskHandle& receiver, const std::string& conduitId) {
    auto it = tasks_.find(receiver);
    RegisteredTask* rt = it == tasks_.end() ? nullptr : &it->second;
    Verdict v = slowCheck(rt, conduitId, AccessMode::Read);
    if (!v.allow && v.reason == DenyReason::ReadNotImplied)
        v.reason = DenyReason::NoReceiverCapability;
    logRow(rt ? rt->session : "", "transfer", receiver, conduitId, v);
    return v;
}

Verdict ShaiMonitor::onKvFault(const TaskHandle& task, const std::string& op,
                               const std::string& key) {
    auto it = tasks_.find(task);
    RegisteredTask* rt = it == tasks_.end() ? nullptr : &it->second;
    AccessMode mode = op == "PUT" ? AccessMode::Write : AccessMode::Read;
    Verdict v = slowCheck(rt, "kv:" + key, mode);
    logRow(rt ? rt->session : "", "kv", task, "kv:" + key, v);
    return v;
}

std::vector<ShaiMonitor::Transition> ShaiMonitor::onMetadataChange(const MetadataChange& change) {
    store_->apply(change);
    const MetadataView& view = store_->view();
    std::vector<Transition> report;
    for (std::size_t i = 0; i < oa_.certified.size(); ++i) {
        const CertifiedAccess& c = oa_.certified[i];
        if (change.kind != MetadataChange::Kind::PolicySet) {
            bool touched = std::any_of(c.conds.begin(), c.conds.end(),
                                       [&](const StateCondition& sc) {
                                           return sc.kind != StateCondition::Kind::PolicyEquals &&
                                                  sc.subject == change.subject;
                                       });
            if (!touched) continue;
        }
        bool now = conditionsHold(c.conds, view);
        if (now != valid_[i]) {
            valid_[i] = now;
            report.push_back({c.task, c.conduitClass, c.mode, now});
        }
    }
    return report;
}

std::vector<CertifiedAccess> ShaiMonitor::validAccessesOf(const std::string& instanceId) const {
    std::vector<CertifiedAccess> out;
    auto it = byInstance_.find(instanceId);
    if (it == byInstance_.end()) return out;
    for (std::size_t idx : it->second)
        if (valid_[idx]) out.push_back(oa_.certified[idx]);
    return out;
}

} // namespace shai
