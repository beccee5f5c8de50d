#pragma once

#include "shai/metadata.hpp"
#include "shai/restrict.hpp"

#include <map>
#include <string>
#include <vector>

namespace shai {

enum class AccessMode { Read, Write };

enum class Rights : unsigned { Read = 1, Write = 2, ReadWrite = 3 };

inline Rights operator|(Rights a, Rights b) {
    return Rights(unsigned(a) | unsigned(b));
}
inline bool grants(Rights have, Rights need) {
    return (unsigned(have) & unsigned(need)) == unsigned(need);
}

// One pipeline task specialized to its predicted runtime parameters.
struct TaskInstance {
    std::string id;
    std::string principal;
    std::string region;
    std::vector<std::string> taintPolicies; // policy names
    bool active = true;                     // inactive instances are OA-deferred
    std::vector<std::string> reads;         // expected conduit classes
    std::vector<std::string> writes;
};

struct ConduitClassDecl {
    std::string id;
    std::string policyName;
    std::string membersGlob;
};

struct Manifest {
    std::map<std::string, ConduitClassDecl> classes;
    std::map<std::string, TaskInstance> tasks;
};

Manifest parseManifest(const std::string& text);
std::string serializeManifest(const Manifest& m);

// One ahead-of-time certified access.
struct CertifiedAccess {
    AccessMode mode;
    std::string task;
    std::string conduitClass;
    ConditionSet conds;
};

struct OAOutput {
    std::vector<CertifiedAccess> certified; // sorted (task, class, mode)
    std::map<std::string, std::string> policySnapshot; // class -> classId hash
    Timestamp generatedAt = 0;
};

struct OAStats {
    std::size_t restrictivenessChecks = 0; // top-level read + write checks
    std::size_t policyClasses = 0;         // distinct policies after dedup
};

struct OAOptions {
    bool activeOnly = false;
    int parallel = 1;
};

// Partitions the declared conduit classes by structural policy identity; the
// analyzer checks one representative per partition and fans results out.
std::map<std::string, std::vector<std::string>> dedupByPolicyClass(
    const Manifest& m, const MetadataView& view);

// Algorithm-1 loops over the manifest's expected accesses. Deterministic for
// fixed inputs; unknown classes, tasks or policies are a hard error.
OAOutput runOA(const Manifest& m, const MetadataView& view, const OAOptions& opts = {},
               OAStats* stats = nullptr);

// Builds the task's taint from the view's named policies.
Taint taintOf(const TaskInstance& t, const MetadataView& view);

// One grant unit: emulates a link directory of conduit classes that share
// certification conditions.
struct CapabilityGroup {
    std::string id;
    Rights rights = Rights::Read;
    std::vector<std::string> classes; // sorted
    ConditionSet conds;
};

struct CapabilityBlueprint {
    std::string task;
    std::vector<CapabilityGroup> groups; // disjoint by conduit class, sorted by id
};

// Groups certified accesses by (rights, condition set); R and W entries of
// the same class merge into one readwrite member first.
std::map<std::string, CapabilityBlueprint> compileCapabilities(const OAOutput& out);

// Line-oriented persistence with a checksummed header. load(persist(x))
// is structurally the identity; re-persisting is byte-identical.
std::string persistOA(const OAOutput& out);
OAOutput loadOA(const std::string& text);

void persistOAFile(const OAOutput& out, const std::string& path);
OAOutput loadOAFile(const std::string& path);

} // namespace shai
