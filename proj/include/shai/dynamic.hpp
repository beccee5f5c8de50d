#pragma once

#include "shai/monitor.hpp"

#include <map>
#include <string>
#include <vector>

namespace shai {

// Pure-dynamic baseline: every open is intercepted, reads are logged and
// folded into a growing per-task taint, writes get the full policy check.
class DynamicMonitor : public AccessMonitor {
public:
    DynamicMonitor(Sandbox* sandbox, MetadataStore* store, const Manifest* manifest,
                   TickCosts costs = {});

    bool registerTask(const std::string& session, const TaskHandle& handle,
                      const std::string& instanceId);
    void acceptConnection(const std::string& session, const TaskHandle& handle);
    bool authenticateSession(const std::string& session, const TaskHandle& handle,
                             const std::string& credential, const std::string& actualRegion,
                             const std::string& egressConduitId = "");
    void resetSession(const std::string& session, const TaskHandle& handle);

    Verdict onOpenFault(const TaskHandle& task, const std::string& conduitId,
                        AccessMode mode) override;
    Verdict onTransferFault(const TaskHandle& receiver, const std::string& conduitId) override;
    Verdict onKvFault(const TaskHandle& task, const std::string& op,
                      const std::string& key) override;

    struct DynTaskState {
        std::string session;
        std::string principal;
        std::string region;
        Taint taint;                      // grows, never shrinks
        std::vector<std::string> openLog; // conduit classes read, not yet folded
    };

    // Folds the task's open log into its taint; idempotent and
    // order-independent (component set with classId dedup).
    void foldOpenLog(DynTaskState& st);
    const DynTaskState* stateOf(const TaskHandle& handle) const;

    const std::vector<InterceptionRow>& log() const { return log_; }
    long rmTicks() const { return rmTicks_; }
    long resetTicks() const { return resetTicks_; }
    const TickCosts& costs() const { return costs_; }

private:
    void logRow(const std::string& session, const std::string& kind, const TaskHandle& task,
                const std::string& conduit, const Verdict& v);
    Verdict writeCheck(DynTaskState& st, const std::string& classId, bool fdTransfer);

    Sandbox* sandbox_;
    MetadataStore* store_;
    const Manifest* manifest_;
    TickCosts costs_;
    std::map<TaskHandle, DynTaskState> tasks_;
    std::vector<InterceptionRow> log_;
    long rmTicks_ = 0;
    long resetTicks_ = 0;
};

} // namespace shai
