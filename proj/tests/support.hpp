#pragma once

#include "shai/parser.hpp"
#include "shai/restrict.hpp"

#include <random>
#include <string>
#include <vector>

namespace testsupport {

using namespace shai;

// Small closed universe shared by the random generators and the brute-force
// semantic oracle: 4 principals, 2 regions, 3 lists, 2 entry candidates.
inline FiniteUniverse smallUniverse() {
    FiniteUniverse u;
    u.principals = {"p0", "p1", "p2", "p3"};
    u.regions = {"r0", "r1"};
    u.listIds = {"l0", "l1", "l2"};
    u.entryCandidates = {"p0", "p1"};
    u.clockGrid = {0, 5, 10};
    return u;
}

class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    int upto(int n) { return int(rng_() % std::uint64_t(n)); }
    bool chance(int pct) { return upto(100) < pct; }

    std::string principal() { return "p" + std::to_string(upto(4)); }
    std::string region() { return "r" + std::to_string(upto(2)); }
    std::string listId() { return "l" + std::to_string(upto(3)); }
    std::string entry() { return "p" + std::to_string(upto(2)); }
    Timestamp stamp() { return Timestamp(upto(3)) * 5; }

    // One ground atom (no variables).
    Atom groundAtom() {
        switch (upto(7)) {
        case 0: return Atom::truth();
        case 1: return Atom::falsity();
        case 2: return Atom::key(principal());
        case 3: return Atom::region(region());
        case 4: return Atom::in(listId(), entry());
        case 5: return Atom::notin(listId(), entry());
        default: return Atom::after(stamp());
        }
    }

    // A conjunct; with probability ~1/3 it binds the variable X via key(X)
    // and may constrain it with list atoms.
    Conjunct conjunct() {
        Conjunct c;
        bool useVar = upto(3) == 0;
        if (useVar) c.push_back(Atom::key("X", true));
        int n = 1 + upto(3);
        for (int i = 0; i < n; ++i) {
            if (useVar && chance(40)) {
                c.push_back(chance(50) ? Atom::in(listId(), "X", true)
                                       : Atom::notin(listId(), "X", true));
            } else {
                c.push_back(groundAtom());
            }
        }
        return normalizeConjunct(std::move(c));
    }

    Rule rule() {
        Rule r;
        int n = 1 + upto(3);
        for (int i = 0; i < n; ++i) r.disjuncts.push_back(conjunct());
        return normalize(std::move(r));
    }

    // A state-or-target escape trigger (no session atoms).
    Conjunct trigger() {
        Conjunct t;
        switch (upto(4)) {
        case 0: t.push_back(Atom::fdonly()); break;
        case 1: t.push_back(Atom::after(stamp())); break;
        case 2: t.push_back(Atom::in(listId(), entry())); break;
        default: t.push_back(Atom::notin(listId(), entry())); break;
        }
        if (chance(25)) t.push_back(Atom::after(stamp()));
        return normalizeConjunct(std::move(t));
    }

    Policy policy(const std::string& name) {
        Policy p;
        p.name = name;
        p.read = rule();
        p.update = rule();
        if (chance(20)) p.update.disjuncts.push_back({Atom::fdonly()});
        p.update = normalize(std::move(p.update));
        int escapes = upto(3);
        for (int i = 0; i < escapes; ++i)
            p.declassify.escapes.push_back({trigger(), rule()});
        p.declassify = normalizeDeclass(std::move(p.declassify));
        p.classId = computeClassId(p);
        return p;
    }

    // A random metadata snapshot over the small universe.
    MetadataView view() {
        MetadataView v;
        for (const std::string& l : {"l0", "l1", "l2"}) {
            MetaList ml;
            ml.id = l;
            for (const std::string& e : {"p0", "p1"})
                if (chance(50)) ml.entries.insert(e);
            v.lists[l] = std::move(ml);
        }
        v.clock = stamp();
        return v;
    }

private:
    std::mt19937_64 rng_;
};

} // namespace testsupport
