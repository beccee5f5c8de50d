#include "shai/restrict.hpp"

#include <algorithm>
#include <optional>
#include <stdexcept>

namespace shai {

namespace {

// A binding for the covering disjunct's variable: either a concrete
// principal from D1 or "the same variable" when D1 is not ground there.
struct Binding {
    bool symbolic = false;
    std::string principal;
};

bool contains(const Conjunct& c, const Atom& a) {
    return std::binary_search(c.begin(), c.end(), a);
}

bool hasTimeAtLeast(const Conjunct& c, Timestamp t) {
    for (const Atom& a : c)
        if (a.kind == AtomKind::TimeAfter && a.time >= t) return true;
    return false;
}

// Tries to cover covering-disjunct d2 from d1's constraints under one
// variable binding. Returns the state conditions the residual atoms needed.
std::optional<ConditionSet> coverWith(const Conjunct& d1, const Conjunct& d2,
                                      const Binding& bind, const MetadataView& view) {
    ConditionSet conds;
    for (const Atom& a2 : d2) {
        switch (a2.kind) {
        case AtomKind::True:
            break;
        case AtomKind::False:
            return std::nullopt;
        case AtomKind::KeyIs: {
            if (a2.var) {
                if (bind.symbolic) break; // d1 constrains the same variable
                if (!contains(d1, Atom::key(bind.principal))) return std::nullopt;
                break;
            }
            if (!contains(d1, a2)) return std::nullopt;
            break;
        }
        case AtomKind::RegionIs:
        case AtomKind::FdOnly:
            if (!contains(d1, a2)) return std::nullopt;
            break;
        case AtomKind::ListHas:
        case AtomKind::ListLacks: {
            Atom ground = a2;
            if (ground.var) {
                if (bind.symbolic) {
                    // stays symbolic; only a syntactic match in d1 helps
                    if (!contains(d1, a2)) return std::nullopt;
                    break;
                }
                ground.arg = bind.principal;
                ground.var = false;
            }
            if (contains(d1, ground)) break; // d1 already guarantees it
            const MetaList* l = view.list(ground.list);
            if (a2.kind == AtomKind::ListHas) {
                if (!l || !l->has(ground.arg)) return std::nullopt;
                conds.insert(StateCondition::includes(ground.list, ground.arg));
            } else {
                if (!l || l->has(ground.arg)) return std::nullopt; // fail closed
                conds.insert(StateCondition::excludes(ground.list, ground.arg));
            }
            break;
        }
        case AtomKind::TimeAfter:
            if (hasTimeAtLeast(d1, a2.time)) break; // implied by d1 itself
            if (view.clock <= a2.time) return std::nullopt;
            break; // monotone once true: no condition to record
        }
    }
    return conds;
}

std::optional<ConditionSet> cover(const Conjunct& d1, const Conjunct& d2,
                                  const MetadataView& view) {
    bool needsBinding = std::any_of(d2.begin(), d2.end(), [](const Atom& a) { return a.var; });
    if (!needsBinding) return coverWith(d1, d2, Binding{}, view);
    // candidate bindings come from d1's key atoms
    for (const Atom& a1 : d1) {
        if (a1.kind != AtomKind::KeyIs) continue;
        Binding b;
        if (a1.var)
            b.symbolic = true;
        else
            b.principal = a1.arg;
        if (auto c = coverWith(d1, d2, b, view)) return c;
    }
    return std::nullopt;
}

} // namespace

CheckResult isAsRestr(const Rule& r1, const Rule& r2, const MetadataView& view) {
    ConditionSet conds;
    for (const Conjunct& d1 : r1.disjuncts) {
        bool covered = false;
        for (const Conjunct& d2 : r2.disjuncts) {
            if (auto c = cover(d1, d2, view)) {
                conds.insert(c->begin(), c->end());
                covered = true;
                break;
            }
        }
        if (!covered) return {false, {}};
    }
    return {true, std::move(conds)};
}

CheckResult isAsRestr(const Taint& taint, const Rule& r2, const MetadataView& view) {
    if (taint.empty()) return isAsRestr(Rule::always(), r2, view);
    ConditionSet conds;
    for (const Policy& c : taint.components) {
        CheckResult r = isAsRestr(c.read, r2, view);
        if (!r.okay) return {false, {}};
        conds.insert(r.conds.begin(), r.conds.end());
    }
    return {true, std::move(conds)};
}

namespace {

bool triggerHolds(const Conjunct& trigger, const ConduitFacts* target,
                  const MetadataView& view) {
    for (const Atom& a : trigger) {
        switch (a.kind) {
        case AtomKind::True:
            break;
        case AtomKind::False:
            return false;
        case AtomKind::FdOnly:
            if (!target || !target->fdOnly) return false;
            break;
        case AtomKind::TimeAfter:
            if (view.clock <= a.time) return false;
            break;
        case AtomKind::ListHas: {
            const MetaList* l = view.list(a.list);
            if (!l || !l->has(a.arg)) return false;
            break;
        }
        case AtomKind::ListLacks: {
            const MetaList* l = view.list(a.list);
            if (!l || l->has(a.arg)) return false;
            break;
        }
        default:
            return false; // session atoms never hold in a trigger
        }
    }
    return true;
}

} // namespace

Rule effectiveReadRequirement(const Policy& p, const MetadataView& view) {
    Rule req = p.read;
    for (const Escape& e : p.declassify.escapes) {
        if (!triggerHolds(e.trigger, nullptr, view)) continue;
        req.disjuncts.insert(req.disjuncts.end(), e.result.disjuncts.begin(),
                             e.result.disjuncts.end());
    }
    return normalize(std::move(req));
}

std::vector<Rule> applyDeclass(const Policy& component, const ConduitFacts& target,
                               const MetadataView& view) {
    std::vector<Rule> out;
    for (const Escape& e : component.declassify.escapes) {
        if (triggerHolds(e.trigger, &target, view)) out.push_back(e.result);
    }
    if (out.empty()) out.push_back(component.read);
    return out;
}

CheckResult isAsRestrWithDeclass(const ConduitFacts& target, const Taint& taint,
                                 const MetadataView& view) {
    ConditionSet conds;
    conds.insert(StateCondition::policyEquals(target.classId, target.policy->classId));
    Rule targetReq = effectiveReadRequirement(*target.policy, view);
    for (const Policy& c : taint.components) {
        conds.insert(StateCondition::policyEquals(c.name, c.classId));
        bool okay = false;
        for (const Rule& req : applyDeclass(c, target, view)) {
            CheckResult sub = isAsRestr(targetReq, req, view);
            if (sub.okay) {
                conds.insert(sub.conds.begin(), sub.conds.end());
                okay = true;
                break;
            }
        }
        if (!okay) return {false, {}};
    }
    return {true, std::move(conds)};
}

CheckResult policyEval(const Rule& update, const WriterIdentity& writer,
                       const MetadataView& view) {
    for (const Conjunct& conj : update.disjuncts) {
        ConditionSet conds;
        bool all = true;
        for (const Atom& a : conj) {
            std::string entry = a.var ? writer.principal : a.arg;
            switch (a.kind) {
            case AtomKind::True:
                break;
            case AtomKind::False:
                all = false;
                break;
            case AtomKind::KeyIs:
                all = a.var || a.arg == writer.principal;
                break;
            case AtomKind::RegionIs:
                all = a.arg == writer.region;
                break;
            case AtomKind::ListHas: {
                const MetaList* l = view.list(a.list);
                if (!l || !l->has(entry)) {
                    all = false;
                } else {
                    conds.insert(StateCondition::includes(a.list, entry));
                }
                break;
            }
            case AtomKind::ListLacks: {
                const MetaList* l = view.list(a.list);
                if (!l || l->has(entry)) {
                    all = false;
                } else {
                    conds.insert(StateCondition::excludes(a.list, entry));
                }
                break;
            }
            case AtomKind::TimeAfter:
                all = view.clock > a.time;
                break;
            case AtomKind::FdOnly:
                all = writer.descriptorTransfer;
                break;
            }
            if (!all) break;
        }
        if (all) return {true, std::move(conds)};
    }
    return {false, {}};
}

bool conditionHolds(const StateCondition& c, const MetadataView& view) {
    switch (c.kind) {
    case StateCondition::Kind::PolicyEquals: {
        const Policy* p = view.policyOfClass(c.subject);
        if (!p) p = view.policyByName(c.subject);
        return p && p->classId == c.value;
    }
    case StateCondition::Kind::ListIncludes: {
        const MetaList* l = view.list(c.subject);
        return l && l->has(c.value);
    }
    case StateCondition::Kind::ListExcludes: {
        const MetaList* l = view.list(c.subject);
        return l && !l->has(c.value);
    }
    }
    return false;
}

bool conditionsHold(const ConditionSet& cs, const MetadataView& view) {
    return std::all_of(cs.begin(), cs.end(),
                       [&](const StateCondition& c) { return conditionHolds(c, view); });
}

// --- brute-force oracle ----------------------------------------------------

std::size_t FiniteUniverse::modelCount() const {
    std::size_t sessions = std::max<std::size_t>(1, principals.size()) *
                           std::max<std::size_t>(1, regions.size()) *
                           std::max<std::size_t>(1, clockGrid.size());
    std::size_t assignments = 1;
    for (std::size_t i = 0; i < listIds.size(); ++i) {
        if (entryCandidates.size() >= 20) throw std::length_error("universe too large");
        std::size_t per = std::size_t{1} << entryCandidates.size();
        if (assignments > 2'000'000 / per) throw std::length_error("universe too large");
        assignments *= per;
    }
    return sessions * assignments;
}

namespace {

template <typename Fn>
bool forEachModel(const FiniteUniverse& u, Fn&& fn) {
    if (u.modelCount() > 1'000'000) throw std::length_error("universe too large");
    if (!u.listIds.empty() && u.entryCandidates.size() >= 20)
        throw std::length_error("universe too large");
    std::vector<std::uint32_t> masks(u.listIds.size(), 0);
    const std::uint32_t top =
        masks.empty() ? 1u : std::uint32_t{1} << u.entryCandidates.size();
    while (true) {
        MetadataView view;
        for (std::size_t i = 0; i < u.listIds.size(); ++i) {
            MetaList l;
            l.id = u.listIds[i];
            for (std::size_t b = 0; b < u.entryCandidates.size(); ++b)
                if (masks[i] & (1u << b)) l.entries.insert(u.entryCandidates[b]);
            view.lists[l.id] = std::move(l);
        }
        for (const std::string& p : u.principals) {
            for (const std::string& r : u.regions) {
                for (Timestamp t : u.clockGrid) {
                    view.clock = t;
                    if (!fn(SessionContext{p, r, t}, view)) return false;
                }
            }
        }
        // next list assignment
        std::size_t i = 0;
        for (; i < masks.size(); ++i) {
            if (++masks[i] < top) break;
            masks[i] = 0;
        }
        if (i == masks.size()) break;
        if (masks.empty()) break;
    }
    return true;
}

bool condConsistent(const ConditionSet& conds, const MetadataView& view) {
    for (const StateCondition& c : conds) {
        if (c.kind == StateCondition::Kind::PolicyEquals) continue; // not modeled
        if (!conditionHolds(c, view)) return false;
    }
    return true;
}

} // namespace

bool semanticImplies(const Rule& r1, const Rule& r2, const FiniteUniverse& u) {
    return forEachModel(u, [&](const SessionContext& s, const MetadataView& v) {
        return !evalRule(r1, s, v) || evalRule(r2, s, v);
    });
}

bool semanticImpliesUnder(const Rule& r1, const Rule& r2, const FiniteUniverse& u,
                          const ConditionSet& conds, Timestamp minClock) {
    return forEachModel(u, [&](const SessionContext& s, const MetadataView& v) {
        if (s.clock < minClock) return true;
        if (!condConsistent(conds, v)) return true;
        return !evalRule(r1, s, v) || evalRule(r2, s, v);
    });
}

} // namespace shai
