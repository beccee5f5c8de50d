#pragma once

#include "shai/policy.hpp"

#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace shai {

struct MetadataMissing : std::runtime_error {
    explicit MetadataMissing(const std::string& what) : std::runtime_error(what) {}
};

// Immutable snapshot of everything a policy check may consult: named
// policies, the conduit-class -> policy binding, meta-data lists, and the
// wall clock.
struct MetadataView {
    std::map<std::string, Policy> policies;       // by policy name
    std::map<std::string, std::string> classPolicy; // conduit class -> policy name
    std::map<std::string, MetaList> lists;
    Timestamp clock = 0;

    const Policy* policyByName(const std::string& name) const {
        auto it = policies.find(name);
        return it == policies.end() ? nullptr : &it->second;
    }

    const Policy* policyOfClass(const std::string& classId) const {
        auto it = classPolicy.find(classId);
        if (it == classPolicy.end()) return nullptr;
        return policyByName(it->second);
    }

    const MetaList* list(const std::string& id) const {
        auto it = lists.find(id);
        return it == lists.end() ? nullptr : &it->second;
    }
};

struct MetadataChange {
    enum class Kind { PolicySet, ListAdd, ListRemove } kind;
    std::string subject; // class (PolicySet) or list id
    std::string value;   // new policy name, or list entry
};

// Authoritative mutable copy; monitors read `view()` and apply changes
// through `apply` so revalidation can key off the returned change.
class MetadataStore {
public:
    MetadataStore() = default;
    explicit MetadataStore(MetadataView v) : view_(std::move(v)) {}

    const MetadataView& view() const { return view_; }
    MetadataView& mutableView() { return view_; }

    void apply(const MetadataChange& ch) {
        switch (ch.kind) {
        case MetadataChange::Kind::PolicySet:
            view_.classPolicy[ch.subject] = ch.value;
            break;
        case MetadataChange::Kind::ListAdd:
            view_.lists[ch.subject].id = ch.subject;
            view_.lists[ch.subject].entries.insert(ch.value);
            view_.lists[ch.subject].lastUpdated = view_.clock;
            break;
        case MetadataChange::Kind::ListRemove:
            view_.lists[ch.subject].id = ch.subject;
            view_.lists[ch.subject].entries.erase(ch.value);
            view_.lists[ch.subject].lastUpdated = view_.clock;
            break;
        }
    }

private:
    MetadataView view_;
};

enum class MissingList { FailClosed, Strict };

// True iff some disjunct holds under (session, state); key(X) binds the
// conjunct variable to the session principal.
bool evalRule(const Rule& r, const SessionContext& s, const MetadataView& state,
              MissingList mode = MissingList::FailClosed);

} // namespace shai
