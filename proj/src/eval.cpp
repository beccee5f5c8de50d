#include "shai/metadata.hpp"

namespace shai {

namespace {

bool evalAtom(const Atom& a, const SessionContext& s, const MetadataView& state,
              MissingList mode) {
    auto resolve = [&](const Atom& atom) { return atom.var ? s.principal : atom.arg; };
    switch (a.kind) {
    case AtomKind::True:
        return true;
    case AtomKind::False:
        return false;
    case AtomKind::KeyIs:
        return a.var || a.arg == s.principal;
    case AtomKind::RegionIs:
        return a.arg == s.region;
    case AtomKind::ListHas: {
        const MetaList* l = state.list(a.list);
        if (!l) {
            if (mode == MissingList::Strict) throw MetadataMissing("missing list " + a.list);
            return false;
        }
        return l->has(resolve(a));
    }
    case AtomKind::ListLacks: {
        const MetaList* l = state.list(a.list);
        if (!l) {
            if (mode == MissingList::Strict) throw MetadataMissing("missing list " + a.list);
            return false; // fail closed: an unknown blacklist blocks the flow
        }
        return !l->has(resolve(a));
    }
    case AtomKind::TimeAfter:
        return s.clock > a.time;
    case AtomKind::FdOnly:
        return false; // a session is never an fd-only conduit
    }
    return false;
}

} // namespace

bool evalRule(const Rule& r, const SessionContext& s, const MetadataView& state,
              MissingList mode) {
    for (const Conjunct& conj : r.disjuncts) {
        bool all = true;
        for (const Atom& a : conj) {
            if (!evalAtom(a, s, state, mode)) {
                all = false;
                break;
            }
        }
        if (all) return true;
    }
    return false;
}

} // namespace shai
