#pragma once

#include "shai/sandbox.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace shai {

// Modeled costs; all enforcement comparisons are stated in these ticks.
struct TickCosts {
    long rmEntry = 2;   // one control transfer into a monitor
    long lwcReset = 3;  // lightweight-context rollback
    long execReset = 12; // process re-exec (dynamic baseline teardown)
    long queryBase = 100; // non-enforcement work per query, used by reports
};

struct InterceptionRow {
    std::string session;
    std::string kind; // register|accept|authenticate|reset|slow-path-open|write-check|transfer|kv
    std::string task;
    std::string conduit;
    std::string decision; // "allow" or "deny:<reason>"
    long tick = 0;        // cumulative monitor ticks when logged
};

std::string interceptionCsv(const std::vector<InterceptionRow>& rows);

// Runtime reference monitor: grants precompiled capability sets at
// registration and adjudicates everything the sandbox cannot decide.
class ShaiMonitor : public AccessMonitor {
public:
    ShaiMonitor(Sandbox* sandbox, MetadataStore* store, const Manifest* manifest, OAOutput oa,
                TickCosts costs = {}, bool patchSlowpath = false);

    // --- session lifecycle (each call is one interception) ---
    bool registerTask(const std::string& session, const TaskHandle& handle,
                      const std::string& instanceId);
    void acceptConnection(const std::string& session, const TaskHandle& handle);
    // Verifies the credential against the bound instance; rebinds the runtime
    // taint when the actual region differs from the predicted one, withholding
    // any certified access that no longer revalidates. When egressConduitId is
    // non-empty the egress write is checked and granted as part of this call.
    bool authenticateSession(const std::string& session, const TaskHandle& handle,
                             const std::string& credential, const std::string& actualRegion,
                             const std::string& egressConduitId = "");
    Verdict reRegister(const std::string& session, const TaskHandle& handle,
                       const std::string& newInstanceId);
    void resetSession(const std::string& session, const TaskHandle& handle);

    // --- sandbox fault hooks (slow path) ---
    Verdict onOpenFault(const TaskHandle& task, const std::string& conduitId,
                        AccessMode mode) override;
    Verdict onTransferFault(const TaskHandle& receiver, const std::string& conduitId) override;
    Verdict onKvFault(const TaskHandle& task, const std::string& op,
                      const std::string& key) override;

    struct Transition {
        std::string task;
        std::string conduitClass;
        AccessMode mode;
        bool nowValid;
    };
    // Applies the change to the store, then eagerly revalidates every
    // certification whose conditions mention the touched subject. Future
    // grants reflect the result; capabilities already installed stay.
    std::vector<Transition> onMetadataChange(const MetadataChange& change);

    // Valid-access list as currently maintained (for a given instance).
    std::vector<CertifiedAccess> validAccessesOf(const std::string& instanceId) const;

    const std::vector<InterceptionRow>& log() const { return log_; }
    long rmTicks() const { return rmTicks_; }
    long resetTicks() const { return resetTicks_; }
    const std::vector<std::string>& predictionLog() const { return predictions_; }
    const TickCosts& costs() const { return costs_; }

private:
    struct RegisteredTask {
        std::string instanceId;
        std::string session;
        std::string principal;
        std::string region; // actual once authenticated
        Taint taint;        // runtime taint, rebound on misprediction
        bool authenticated = false;
        std::set<std::string> withheld; // classes withheld for this session
        std::vector<CapabilityGroup> extraGroups; // session-scoped grants (egress)
    };

    void logRow(const std::string& session, const std::string& kind, const TaskHandle& task,
                const std::string& conduit, const Verdict& v);
    bool certValid(std::size_t idx) const { return valid_[idx]; }
    CapabilitySet compileGrant(const RegisteredTask& rt) const;
    void installGrant(const TaskHandle& handle, const RegisteredTask& rt);
    KvFilter kvFilterFor(const RegisteredTask& rt) const;
    Verdict slowCheck(const RegisteredTask* rt, const std::string& conduitId, AccessMode mode,
                      ConditionSet* conds = nullptr) const;
    // Re-runs the certification check for one certified access under the
    // task's runtime taint and the current metadata.
    bool revalidate(const CertifiedAccess& cert, const RegisteredTask& rt) const;

    Sandbox* sandbox_;
    MetadataStore* store_;
    const Manifest* manifest_;
    OAOutput oa_;
    TickCosts costs_;
    bool patchSlowpath_;

    std::vector<bool> valid_; // parallel to oa_.certified
    std::map<std::string, std::vector<std::size_t>> byInstance_;
    std::map<TaskHandle, RegisteredTask> tasks_;
    std::vector<InterceptionRow> log_;
    std::vector<std::string> predictions_;
    long rmTicks_ = 0;
    long resetTicks_ = 0;
};

} // namespace shai
