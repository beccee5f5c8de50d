#pragma once

#include "shai/metadata.hpp"
#include "shai/policy.hpp"

#include <set>
#include <string>
#include <vector>

namespace shai {

// A recorded fact about the system state under which a certification stays
// valid. Decidable against any MetadataView.
struct StateCondition {
    enum class Kind { PolicyEquals, ListIncludes, ListExcludes } kind;
    std::string subject; // conduit class / policy name, or list id
    std::string value;   // classId hash, or list entry

    auto operator<=>(const StateCondition&) const = default;

    static StateCondition policyEquals(std::string cls, std::string hash) {
        return {Kind::PolicyEquals, std::move(cls), std::move(hash)};
    }
    static StateCondition includes(std::string list, std::string entry) {
        return {Kind::ListIncludes, std::move(list), std::move(entry)};
    }
    static StateCondition excludes(std::string list, std::string entry) {
        return {Kind::ListExcludes, std::move(list), std::move(entry)};
    }
};

using ConditionSet = std::set<StateCondition>;

struct CheckResult {
    bool okay = false;
    ConditionSet conds; // meaningful only when okay
};

// The facts about a write target that declassification triggers can see.
struct ConduitFacts {
    std::string classId;  // conduit-class name
    const Policy* policy = nullptr;
    bool fdOnly = false;  // update rule forbids data

    static ConduitFacts of(const std::string& cls, const Policy& p) {
        return {cls, &p, forbidsData(p.update)};
    }
};

// The identity an update rule is evaluated against: either a live session or
// the parameters coded into an offline-analyzed task instance.
struct WriterIdentity {
    std::string principal;
    std::string region;
    bool descriptorTransfer = false; // the write only moves descriptors
};

// Syntactic disjunct-cover check that r1 is at least as restrictive as r2.
// Sound, incomplete. Residual list/time atoms of the covering disjunct are
// evaluated against the snapshot; satisfied list atoms surface as state
// conditions, satisfied time atoms surface as nothing (monotone once true).
CheckResult isAsRestr(const Rule& r1, const Rule& r2, const MetadataView& view);

// Component-wise form: every taint component must pass; conditions are
// unioned. An empty taint is the top element and behaves as the TRUE rule.
CheckResult isAsRestr(const Taint& taint, const Rule& r2, const MetadataView& view);

// Downstream read requirement of a policy as seen from a given state:
// the read rule, joined with results of escapes whose state-only triggers
// already hold (fd-only triggers never fire without a target).
Rule effectiveReadRequirement(const Policy& p, const MetadataView& view);

// Updated requirement list for one taint component against a write target:
// results of every escape whose trigger holds, or the unrelaxed read rule
// when none does.
std::vector<Rule> applyDeclass(const Policy& component, const ConduitFacts& target,
                               const MetadataView& view);

// Write-side comparison: every taint component, after declassification
// against the target, must have some requirement implied by the target's
// read rule. Records PolicyEquals for the target and every component.
CheckResult isAsRestrWithDeclass(const ConduitFacts& target, const Taint& taint,
                                 const MetadataView& view);

// Evaluates an update rule for a concrete writer; satisfied list atoms
// become state conditions. Missing metadata fails closed.
CheckResult policyEval(const Rule& update, const WriterIdentity& writer,
                       const MetadataView& view);

// True iff the condition holds under the given view.
bool conditionHolds(const StateCondition& c, const MetadataView& view);
bool conditionsHold(const ConditionSet& cs, const MetadataView& view);

// --- brute-force semantic oracle -----------------------------------------

struct FiniteUniverse {
    std::vector<std::string> principals;
    std::vector<std::string> regions;
    std::vector<std::string> listIds;
    std::vector<std::string> entryCandidates; // possible members of every list
    std::vector<Timestamp> clockGrid;

    // sessions x list assignments; throws std::length_error above the guard
    std::size_t modelCount() const;
};

// Exhaustive check that every (session, state) model satisfying r1 also
// satisfies r2. Guard: refuses universes above 10^6 models.
bool semanticImplies(const Rule& r1, const Rule& r2, const FiniteUniverse& u);

// Soundness form used by the test oracles: models are restricted to those
// consistent with `conds`, with clocks at or after the snapshot clock.
bool semanticImpliesUnder(const Rule& r1, const Rule& r2, const FiniteUniverse& u,
                          const ConditionSet& conds, Timestamp minClock);

} // namespace shai
