#include "shai/oa.hpp"

#include "shai/parser.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace shai {

namespace {

std::vector<std::string> splitWs(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

std::string kvValue(const std::string& tok, const std::string& key, int lineNo) {
    if (tok.rfind(key + "=", 0) != 0)
        throw std::runtime_error("manifest line " + std::to_string(lineNo) + ": expected " +
                                 key + "=...");
    return tok.substr(key.size() + 1);
}

std::vector<std::string> splitCommas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

} // namespace

Manifest parseManifest(const std::string& text) {
    Manifest m;
    std::istringstream in(text);
    std::string line;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto toks = splitWs(line);
        if (toks.empty()) continue;
        const std::string& kw = toks[0];
        auto need = [&](size_t n) {
            if (toks.size() < n)
                throw std::runtime_error("manifest line " + std::to_string(lineNo) +
                                         ": too few fields for '" + kw + "'");
        };
        if (kw == "class") {
            need(4);
            ConduitClassDecl d;
            d.id = toks[1];
            d.policyName = kvValue(toks[2], "policy", lineNo);
            d.membersGlob = kvValue(toks[3], "members", lineNo);
            m.classes[d.id] = std::move(d);
        } else if (kw == "task") {
            need(5);
            TaskInstance t;
            t.id = toks[1];
            t.principal = kvValue(toks[2], "user", lineNo);
            t.region = kvValue(toks[3], "region", lineNo);
            t.taintPolicies = splitCommas(kvValue(toks[4], "taint", lineNo));
            for (size_t i = 5; i < toks.size(); ++i) {
                if (toks[i] == "inactive")
                    t.active = false;
                else
                    throw std::runtime_error("manifest line " + std::to_string(lineNo) +
                                             ": unknown task flag '" + toks[i] + "'");
            }
            m.tasks[t.id] = std::move(t);
        } else if (kw == "reads" || kw == "writes") {
            need(3);
            auto it = m.tasks.find(toks[1]);
            if (it == m.tasks.end())
                throw std::runtime_error("manifest line " + std::to_string(lineNo) +
                                         ": unknown task '" + toks[1] + "'");
            (kw == "reads" ? it->second.reads : it->second.writes).push_back(toks[2]);
        } else {
            throw std::runtime_error("manifest line " + std::to_string(lineNo) +
                                     ": unknown keyword '" + kw + "'");
        }
    }
    return m;
}

std::string serializeManifest(const Manifest& m) {
    std::ostringstream out;
    for (const auto& [id, c] : m.classes)
        out << "class " << id << " policy=" << c.policyName << " members=" << c.membersGlob
            << "\n";
    for (const auto& [id, t] : m.tasks) {
        out << "task " << id << " user=" << t.principal << " region=" << t.region << " taint=";
        for (size_t i = 0; i < t.taintPolicies.size(); ++i)
            out << (i ? "," : "") << t.taintPolicies[i];
        if (!t.active) out << " inactive";
        out << "\n";
    }
    for (const auto& [id, t] : m.tasks) {
        for (const auto& c : t.reads) out << "reads " << id << " " << c << "\n";
        for (const auto& c : t.writes) out << "writes " << id << " " << c << "\n";
    }
    return out.str();
}

Taint taintOf(const TaskInstance& t, const MetadataView& view) {
    Taint taint;
    for (const auto& name : t.taintPolicies) {
        const Policy* p = view.policyByName(name);
        if (!p) throw std::runtime_error("task " + t.id + ": unknown taint policy " + name);
        taint.add(*p);
    }
    return taint;
}

std::map<std::string, std::vector<std::string>> dedupByPolicyClass(const Manifest& m,
                                                                   const MetadataView& view) {
    std::map<std::string, std::vector<std::string>> groups;
    for (const auto& [id, decl] : m.classes) {
        const Policy* p = view.policyByName(decl.policyName);
        if (!p)
            throw std::runtime_error("class " + id + ": unknown policy " + decl.policyName);
        groups[p->classId].push_back(id);
    }
    for (auto& [hash, members] : groups) std::sort(members.begin(), members.end());
    return groups;
}

namespace {

ConditionSet rewriteSubject(const ConditionSet& conds, const std::string& from,
                            const std::string& to) {
    ConditionSet out;
    for (StateCondition c : conds) {
        if (c.kind == StateCondition::Kind::PolicyEquals && c.subject == from) c.subject = to;
        out.insert(std::move(c));
    }
    return out;
}

struct TaskResult {
    std::vector<CertifiedAccess> certified;
    std::size_t checks = 0;
};

TaskResult analyzeTask(const TaskInstance& task, const Manifest& m, const MetadataView& view,
                       const std::map<std::string, std::string>& classHash) {
    TaskResult res;
    Taint taint = taintOf(task, view);

    // reads and writes both dedup to one check per distinct policy
    auto groupByHash = [&](const std::vector<std::string>& classes) {
        std::map<std::string, std::vector<std::string>> byHash;
        for (const auto& cls : classes) byHash[classHash.at(cls)].push_back(cls);
        for (auto& [h, v] : byHash) std::sort(v.begin(), v.end());
        return byHash;
    };

    for (auto& [hash, members] : groupByHash(task.reads)) {
        const std::string& rep = members.front();
        const Policy& pol = *view.policyOfClass(rep);
        ++res.checks;
        CheckResult r = isAsRestr(taint, effectiveReadRequirement(pol, view), view);
        if (!r.okay) continue;
        for (const auto& cls : members) {
            ConditionSet conds = rewriteSubject(r.conds, rep, cls);
            conds.insert(StateCondition::policyEquals(cls, pol.classId));
            res.certified.push_back({AccessMode::Read, task.id, cls, std::move(conds)});
        }
    }

    for (auto& [hash, members] : groupByHash(task.writes)) {
        const std::string& rep = members.front();
        const Policy& pol = *view.policyOfClass(rep);
        ConduitFacts facts = ConduitFacts::of(rep, pol);
        ++res.checks;
        CheckResult r1 = isAsRestrWithDeclass(facts, taint, view);
        WriterIdentity writer{task.principal, task.region, facts.fdOnly};
        CheckResult r2 = policyEval(pol.update, writer, view);
        if (!r1.okay || !r2.okay) continue;
        ConditionSet both = r1.conds;
        both.insert(r2.conds.begin(), r2.conds.end());
        for (const auto& cls : members) {
            res.certified.push_back(
                {AccessMode::Write, task.id, cls, rewriteSubject(both, rep, cls)});
        }
    }
    return res;
}

} // namespace

OAOutput runOA(const Manifest& m, const MetadataView& view, const OAOptions& opts,
               OAStats* stats) {
    // validate the whole manifest before any analysis
    std::map<std::string, std::string> classHash;
    for (const auto& [id, decl] : m.classes) {
        const Policy* p = view.policyByName(decl.policyName);
        if (!p)
            throw std::runtime_error("class " + id + ": unknown policy " + decl.policyName);
        classHash[id] = p->classId;
    }
    std::vector<const TaskInstance*> tasks;
    for (const auto& [id, t] : m.tasks) {
        for (const auto& cls : t.reads)
            if (!m.classes.count(cls))
                throw std::runtime_error("task " + id + " reads unknown class " + cls);
        for (const auto& cls : t.writes)
            if (!m.classes.count(cls))
                throw std::runtime_error("task " + id + " writes unknown class " + cls);
        taintOf(t, view); // throws on unknown taint policy
        if (opts.activeOnly && !t.active) continue;
        tasks.push_back(&t);
    }

    MetadataView working = view;
    for (const auto& [cls, hash] : classHash) {
        // a class -> policy binding is part of the snapshot the checks see
        working.classPolicy[cls] = m.classes.at(cls).policyName;
    }

    std::vector<TaskResult> results(tasks.size());
    int workers = std::max(1, opts.parallel);
    if (workers == 1 || tasks.size() < 2) {
        for (size_t i = 0; i < tasks.size(); ++i)
            results[i] = analyzeTask(*tasks[i], m, working, classHash);
    } else {
        std::vector<std::future<void>> futs;
        std::atomic<size_t> next{0};
        for (int w = 0; w < workers; ++w) {
            futs.push_back(std::async(std::launch::async, [&] {
                for (size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1))
                    results[i] = analyzeTask(*tasks[i], m, working, classHash);
            }));
        }
        for (auto& f : futs) f.get();
    }

    OAOutput out;
    out.generatedAt = view.clock;
    std::size_t checks = 0;
    for (auto& r : results) {
        checks += r.checks;
        out.certified.insert(out.certified.end(), r.certified.begin(), r.certified.end());
    }
    std::sort(out.certified.begin(), out.certified.end(),
              [](const CertifiedAccess& a, const CertifiedAccess& b) {
                  return std::tie(a.task, a.conduitClass, a.mode) <
                         std::tie(b.task, b.conduitClass, b.mode);
              });
    for (const auto& c : out.certified) out.policySnapshot[c.conduitClass] = classHash.at(c.conduitClass);
    if (stats) {
        stats->restrictivenessChecks = checks;
        std::set<std::string> distinct;
        for (auto& [cls, h] : classHash) distinct.insert(h);
        stats->policyClasses = distinct.size();
    }
    return out;
}

// --- capability compilation -------------------------------------------------

namespace {

std::string condToken(const StateCondition& c) {
    switch (c.kind) {
    case StateCondition::Kind::PolicyEquals: return "polEq:" + c.subject + "=" + c.value;
    case StateCondition::Kind::ListIncludes: return "inc:" + c.subject + ":" + c.value;
    case StateCondition::Kind::ListExcludes: return "exc:" + c.subject + ":" + c.value;
    }
    return "?";
}

std::string condsKey(const ConditionSet& cs) {
    std::string out;
    for (const auto& c : cs) out += condToken(c) + " ";
    return out;
}

} // namespace

std::map<std::string, CapabilityBlueprint> compileCapabilities(const OAOutput& out) {
    // per task: class -> (rights, conds), merging R and W on the same class
    std::map<std::string, std::map<std::string, std::pair<Rights, ConditionSet>>> perTask;
    for (const auto& c : out.certified) {
        Rights r = c.mode == AccessMode::Read ? Rights::Read : Rights::Write;
        auto& slot = perTask[c.task];
        auto it = slot.find(c.conduitClass);
        if (it == slot.end()) {
            slot.emplace(c.conduitClass, std::make_pair(r, c.conds));
        } else {
            it->second.first = it->second.first | r;
            it->second.second.insert(c.conds.begin(), c.conds.end());
        }
    }
    std::map<std::string, CapabilityBlueprint> blueprints;
    for (auto& [task, classes] : perTask) {
        std::map<std::pair<unsigned, std::string>, CapabilityGroup> groups;
        for (auto& [cls, rc] : classes) {
            auto key = std::make_pair(unsigned(rc.first), condsKey(rc.second));
            auto [it, fresh] = groups.try_emplace(key);
            if (fresh) {
                it->second.rights = rc.first;
                it->second.conds = rc.second;
            }
            it->second.classes.push_back(cls);
        }
        CapabilityBlueprint bp;
        bp.task = task;
        int n = 0;
        for (auto& [key, g] : groups) {
            g.id = task + "#g" + std::to_string(n++);
            std::sort(g.classes.begin(), g.classes.end());
            bp.groups.push_back(std::move(g));
        }
        blueprints[task] = std::move(bp);
    }
    return blueprints;
}

// --- persistence -------------------------------------------------------------

std::string persistOA(const OAOutput& out) {
    std::string body;
    for (const auto& c : out.certified) {
        body += c.mode == AccessMode::Read ? "R " : "W ";
        body += c.task + " " + c.conduitClass;
        for (const auto& cond : c.conds) body += " " + condToken(cond);
        body += "\n";
    }
    return "oa-v1 " + std::to_string(out.generatedAt) + " " + contentHash(body) + "\n" + body;
}

namespace {

StateCondition parseCondToken(const std::string& tok, int lineNo) {
    auto bad = [&]() -> std::runtime_error {
        return std::runtime_error("oa output line " + std::to_string(lineNo) +
                                  ": bad condition '" + tok + "'");
    };
    if (tok.rfind("polEq:", 0) == 0) {
        auto eq = tok.find('=', 6);
        if (eq == std::string::npos) throw bad();
        return StateCondition::policyEquals(tok.substr(6, eq - 6), tok.substr(eq + 1));
    }
    bool inc = tok.rfind("inc:", 0) == 0;
    bool exc = tok.rfind("exc:", 0) == 0;
    if (!inc && !exc) throw bad();
    auto colon = tok.find(':', 4);
    if (colon == std::string::npos) throw bad();
    std::string list = tok.substr(4, colon - 4);
    std::string entry = tok.substr(colon + 1);
    if (list.empty() || entry.empty()) throw bad();
    return inc ? StateCondition::includes(list, entry) : StateCondition::excludes(list, entry);
}

} // namespace

OAOutput loadOA(const std::string& text) {
    std::istringstream in(text);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("oa output: empty file");
    auto htoks = splitWs(header);
    if (htoks.size() != 3) throw std::runtime_error("oa output: malformed header");
    if (htoks[0] != "oa-v1")
        throw std::runtime_error("oa output: version mismatch (got '" + htoks[0] + "')");
    OAOutput out;
    out.generatedAt = std::stoll(htoks[1]);

    std::string body, line;
    std::vector<std::pair<int, std::string>> records;
    int lineNo = 1;
    while (std::getline(in, line)) {
        ++lineNo;
        body += line + "\n";
        records.emplace_back(lineNo, line);
    }
    if (contentHash(body) != htoks[2])
        throw std::runtime_error("oa output: checksum failure (truncated or corrupted file)");

    for (auto& [no, rec] : records) {
        auto toks = splitWs(rec);
        if (toks.size() < 3 || (toks[0] != "R" && toks[0] != "W"))
            throw std::runtime_error("oa output line " + std::to_string(no) + ": bad record");
        CertifiedAccess c;
        c.mode = toks[0] == "R" ? AccessMode::Read : AccessMode::Write;
        c.task = toks[1];
        c.conduitClass = toks[2];
        for (size_t i = 3; i < toks.size(); ++i) c.conds.insert(parseCondToken(toks[i], no));
        out.certified.push_back(std::move(c));
    }
    for (const auto& c : out.certified) {
        for (const auto& cond : c.conds)
            if (cond.kind == StateCondition::Kind::PolicyEquals &&
                cond.subject == c.conduitClass)
                out.policySnapshot[c.conduitClass] = cond.value;
    }
    return out;
}

void persistOAFile(const OAOutput& out, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << persistOA(out);
}

OAOutput loadOAFile(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return loadOA(ss.str());
}

} // namespace shai
