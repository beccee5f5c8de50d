#include "shai/policy.hpp"

#include <algorithm>

namespace shai {

Conjunct normalizeConjunct(Conjunct c) {
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    if (c.size() > 1) {
        c.erase(std::remove_if(c.begin(), c.end(),
                               [](const Atom& a) { return a.kind == AtomKind::True; }),
                c.end());
    }
    if (c.empty()) c.push_back(Atom::truth());
    return c;
}

Rule normalize(Rule r) {
    std::vector<Conjunct> keep;
    for (auto& c : r.disjuncts) {
        Conjunct n = normalizeConjunct(std::move(c));
        bool dead = std::any_of(n.begin(), n.end(),
                                [](const Atom& a) { return a.kind == AtomKind::False; });
        if (dead) continue;
        if (n.size() == 1 && n[0].kind == AtomKind::True) return Rule::always();
        keep.push_back(std::move(n));
    }
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    return Rule{std::move(keep)};
}

Escape normalizeEscape(Escape e) {
    e.trigger = normalizeConjunct(std::move(e.trigger));
    e.result = normalize(std::move(e.result));
    return e;
}

DeclassRule normalizeDeclass(DeclassRule d) {
    for (auto& e : d.escapes) e = normalizeEscape(std::move(e));
    std::sort(d.escapes.begin(), d.escapes.end());
    d.escapes.erase(std::unique(d.escapes.begin(), d.escapes.end()), d.escapes.end());
    return d;
}

bool forbidsData(const Rule& update) {
    for (const auto& conj : update.disjuncts) {
        bool marked = std::any_of(conj.begin(), conj.end(),
                                  [](const Atom& a) { return a.kind == AtomKind::FdOnly; });
        if (!marked) return false;
    }
    return true;
}

void Taint::add(const Policy& p) {
    auto pos = std::lower_bound(components.begin(), components.end(), p,
                                [](const Policy& a, const Policy& b) {
                                    return a.classId < b.classId;
                                });
    if (pos != components.end() && pos->classId == p.classId) return;
    components.insert(pos, p);
}

} // namespace shai
