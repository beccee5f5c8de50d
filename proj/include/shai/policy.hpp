#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace shai {

using Timestamp = std::int64_t;

// Opaque identifier standing for an authenticated public key.
struct Principal {
    std::string id;
    auto operator<=>(const Principal&) const = default;
};

struct Region {
    std::string id;
    auto operator<=>(const Region&) const = default;
};

// Runtime facts about one authenticated user session.
struct SessionContext {
    std::string principal;
    std::string region;
    Timestamp clock = 0;
};

enum class AtomKind {
    True,
    False,
    KeyIs,     // key(id) / key(X)
    RegionIs,  // region(id)
    ListHas,   // in(list, term)
    ListLacks, // notin(list, term)
    TimeAfter, // after(ts)
    FdOnly,    // holds of a conduit that can carry descriptors but no data
};

// One predicate of the DNF algebra. `arg` carries the principal, region or
// list entry; `var` marks `arg` as the conjunct's bound variable.
struct Atom {
    AtomKind kind = AtomKind::True;
    std::string list;
    std::string arg;
    bool var = false;
    Timestamp time = 0;

    auto operator<=>(const Atom&) const = default;

    static Atom truth() { return {AtomKind::True, {}, {}, false, 0}; }
    static Atom falsity() { return {AtomKind::False, {}, {}, false, 0}; }
    static Atom key(std::string p, bool isVar = false) {
        return {AtomKind::KeyIs, {}, std::move(p), isVar, 0};
    }
    static Atom region(std::string r) { return {AtomKind::RegionIs, {}, std::move(r), false, 0}; }
    static Atom in(std::string l, std::string e, bool isVar = false) {
        return {AtomKind::ListHas, std::move(l), std::move(e), isVar, 0};
    }
    static Atom notin(std::string l, std::string e, bool isVar = false) {
        return {AtomKind::ListLacks, std::move(l), std::move(e), isVar, 0};
    }
    static Atom after(Timestamp t) { return {AtomKind::TimeAfter, {}, {}, false, t}; }
    static Atom fdonly() { return {AtomKind::FdOnly, {}, {}, false, 0}; }
};

using Conjunct = std::vector<Atom>; // kept sorted and duplicate-free

// Disjunctive-normal-form rule. No disjuncts denotes FALSE; the single
// disjunct {true} denotes the all-permissive rule.
struct Rule {
    std::vector<Conjunct> disjuncts;

    auto operator<=>(const Rule&) const = default;

    bool isFalse() const { return disjuncts.empty(); }
    bool isTrue() const {
        return disjuncts.size() == 1 && disjuncts[0].size() == 1 &&
               disjuncts[0][0].kind == AtomKind::True;
    }

    static Rule always() { return Rule{{{Atom::truth()}}}; }
    static Rule never() { return Rule{}; }
};

// One relaxation clause: when `trigger` holds of the downstream conduit and
// global state, `result` replaces the propagated read requirement.
struct Escape {
    Conjunct trigger;
    Rule result;
    auto operator<=>(const Escape&) const = default;
};

// The propagated requirement is always this policy's read rule; escapes list
// the sanctioned relaxations.
struct DeclassRule {
    std::vector<Escape> escapes;
    auto operator<=>(const DeclassRule&) const = default;
};

struct Policy {
    std::string name;
    Rule read;
    Rule update;
    DeclassRule declassify;
    std::string classId; // hash of the canonical body, stable under reserialization

    bool structurallyEqual(const Policy& other) const {
        return read == other.read && update == other.update && declassify == other.declassify;
    }
};

// Conjunction of component policies carried by a task. No components means
// the unrestricted (top) taint.
struct Taint {
    std::vector<Policy> components; // unique classIds, sorted by classId

    void add(const Policy& p);
    bool empty() const { return components.empty(); }
};

struct MetaList {
    std::string id;
    std::set<std::string> entries;
    Timestamp lastUpdated = 0;

    bool has(const std::string& e) const { return entries.count(e) != 0; }
};

// Normalization: sort/dedup atoms, drop false conjuncts, strip redundant
// true atoms, collapse to TRUE when any conjunct is trivial. Idempotent.
Conjunct normalizeConjunct(Conjunct c);
Rule normalize(Rule r);
Escape normalizeEscape(Escape e);
DeclassRule normalizeDeclass(DeclassRule d);

// True iff every disjunct of the update rule carries the fdonly marker, i.e.
// the conduit may carry descriptors but never data bytes. FALSE update rules
// qualify vacuously.
bool forbidsData(const Rule& update);

} // namespace shai
