#include "shai/pipeline.hpp"

#include "shai/parser.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace shai {

const char* modeName(Mode m) {
    switch (m) {
    case Mode::Baseline: return "baseline";
    case Mode::Dynamic: return "dynamic";
    case Mode::Shai: return "shai";
    }
    return "?";
}

namespace {

std::string padded(int i, std::size_t width) {
    std::string s = std::to_string(i);
    return s.size() >= width ? s : std::string(width - s.size(), '0') + s;
}

std::string pad3(int i) { return padded(i, 3); }
std::string pad4(int i) { return padded(i, 4); }

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string readFile(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void writeFile(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
}

} // namespace

Corpus generateCorpus(const CorpusSpec& spec) {
    if (spec.users < 2 || spec.regions < 1 || spec.docCount < 0)
        throw std::invalid_argument("corpus spec: need >=2 users and >=1 region");
    double mixSum = spec.publicFrac + spec.privateFrac + spec.friendsFrac;
    if (std::abs(mixSum - 1.0) > 1e-9)
        throw std::invalid_argument("corpus spec: mix proportions must sum to 1");

    Corpus c;
    c.spec = spec;
    std::mt19937_64 rng(spec.seed);

    for (int i = 0; i < spec.users; ++i) c.users.push_back("u" + pad3(i));
    for (int r = 0; r < spec.regions; ++r) c.regions.push_back("r" + std::to_string(r));
    for (int i = 0; i < spec.users; ++i) c.userRegion[c.users[i]] = c.regions[i % spec.regions];

    // symmetric friendships
    int target = std::min(spec.friendsPerUser, spec.users / 4);
    std::map<std::string, std::set<std::string>> friends;
    for (const auto& u : c.users) friends[u]; // ensure every list exists
    for (const auto& u : c.users) {
        int guard = 0;
        while (int(friends[u].size()) < target && ++guard < spec.users * 20) {
            const std::string& v = c.users[rng() % c.users.size()];
            if (v == u) continue;
            friends[u].insert(v);
            friends[v].insert(u);
        }
    }

    // document mix: public / private / friends-only, censored drawn from public
    int nPub = int(std::lround(spec.docCount * spec.publicFrac));
    int nPriv = int(std::lround(spec.docCount * spec.privateFrac));
    int nFrn = spec.docCount - nPub - nPriv;
    int nCens = std::min(nPub, int(std::lround(spec.docCount * spec.censoredFraction)));
    nPub -= nCens;

    std::map<std::string, std::string> censRegion; // censored doc -> blocked region
    auto makeText = [&] {
        std::string t;
        for (int w = 0; w < spec.wordsPerDoc; ++w) {
            if (w) t += ' ';
            t += "w" + std::to_string(rng() % std::uint64_t(spec.vocabulary));
        }
        return t;
    };

    int docNo = 0;
    auto nextDoc = [&] { return "d" + pad4(docNo++); };
    for (int i = 0; i < nPub; ++i) {
        std::string d = nextDoc();
        c.docClass[d] = "cls_pub";
        c.docText[d] = makeText();
    }
    for (int i = 0; i < nCens; ++i) {
        std::string d = nextDoc();
        c.docClass[d] = "cls_cens_" + d;
        c.docText[d] = makeText();
        c.censoredDocs.insert(d);
        censRegion[d] = c.regions[rng() % c.regions.size()];
    }
    for (int i = 0; i < nPriv; ++i) {
        std::string d = nextDoc();
        const std::string& owner = c.users[rng() % c.users.size()];
        c.docClass[d] = "cls_priv_" + owner;
        c.docOwner[d] = owner;
        c.docText[d] = makeText();
    }
    for (int i = 0; i < nFrn; ++i) {
        std::string d = nextDoc();
        const std::string& owner = c.users[rng() % c.users.size()];
        c.docClass[d] = "cls_frn_" + owner;
        c.docOwner[d] = owner;
        c.docText[d] = makeText();
    }

    // policies
    std::ostringstream pol;
    const char* fdEsc = " declassify :- propagate until fdonly => true; }";
    pol << "policy pub { read :- true; update :- false;" << fdEsc << "\n";
    pol << "policy idx { read :- false; update :- key(svc.indexer);" << fdEsc << "\n";
    pol << "policy svct { read :- false; update :- false;" << fdEsc << "\n";
    pol << "policy board { read :- true; update :- true; declassify :- propagate; }\n";
    for (const auto& u : c.users) {
        pol << "policy priv_" << u << " { read :- key(" << u << "); update :- false;" << fdEsc
            << "\n";
        pol << "policy frn_" << u << " { read :- key(" << u << ") | key(X) & in(friends." << u
            << ", X); update :- false;" << fdEsc << "\n";
        pol << "policy rp_" << u << " { read :- key(" << u << "); update :- fdonly;" << fdEsc
            << "\n";
        pol << "policy pf_" << u << " { read :- key(" << u << "); update :- key(" << u << ");"
            << fdEsc << "\n";
        for (const auto& r : c.regions) {
            pol << "policy qp_" << u << "_" << r << " { read :- key(" << u << ") & region(" << r
                << "); update :- key(" << u << ");" << fdEsc << "\n";
            pol << "policy egr_" << u << "_" << r << " { read :- key(" << u << ") & region(" << r
                << "); update :- key(" << u << "); declassify :- propagate; }\n";
            pol << "policy wt_" << u << "_" << r << " { read :- key(" << u << ") & region(" << r
                << "); update :- false; declassify :- propagate; }\n";
        }
    }
    for (const auto& d : c.censoredDocs) {
        pol << "policy cens_" << d << " { read :- ";
        for (std::size_t r = 0; r < c.regions.size(); ++r) {
            if (r) pol << " | ";
            pol << "region(" << c.regions[r] << ") & notin(bl." << c.regions[r] << ", cls_cens_"
                << d << ")";
        }
        pol << "; update :- false;" << fdEsc << "\n";
    }
    c.metadata.policies = parsePolicyFile(pol.str());

    // manifest: classes, then one worker instance per user plus the services
    std::ostringstream man;
    man << "class cls_pub policy=pub members=doc:*\n";
    man << "class cls_idx policy=idx members=idx:*\n";
    man << "class cls_board policy=board members=board\n";
    for (const auto& u : c.users) {
        man << "class cls_priv_" << u << " policy=priv_" << u << " members=doc:" << u << ":*\n";
        man << "class cls_frn_" << u << " policy=frn_" << u << " members=doc:" << u << ":f*\n";
        man << "class cls_rp_" << u << " policy=rp_" << u << " members=rpipe:" << u << ":*\n";
        man << "class cls_pf_" << u << " policy=pf_" << u << " members=kv:profile:" << u << "\n";
        for (const auto& r : c.regions) {
            man << "class cls_qp_" << u << "_" << r << " policy=qp_" << u << "_" << r
                << " members=qpipe:" << u << ":" << r << ":*\n";
            man << "class cls_egr_" << u << "_" << r << " policy=egr_" << u << "_" << r
                << " members=egress:" << u << ":" << r << ":*\n";
        }
    }
    for (const auto& d : c.censoredDocs)
        man << "class cls_cens_" << d << " policy=cens_" << d << " members=doc:" << d << "\n";

    man << "task svc.indexer user=svc.indexer region=" << c.regions[0] << " taint=svct\n";
    man << "task svc.engine user=svc.engine region=" << c.regions[0] << " taint=svct\n";
    man << "task poster user=" << c.users[0] << " region=" << c.regions[0] << " taint=\n";
    man << "reads poster cls_board\nwrites poster cls_board\n";
    for (const auto& u : c.users) {
        const std::string& r = c.userRegion[u];
        man << "task worker_" << u << " user=" << u << " region=" << r << " taint=wt_" << u
            << "_" << r << "\n";
    }
    for (const auto& u : c.users) {
        man << "reads worker_" << u << " cls_pub\n";
        man << "reads worker_" << u << " cls_priv_" << u << "\n";
        man << "reads worker_" << u << " cls_frn_" << u << "\n";
        for (const auto& f : friends[u]) man << "reads worker_" << u << " cls_frn_" << f << "\n";
        for (const auto& d : c.censoredDocs)
            man << "reads worker_" << u << " cls_cens_" << d << "\n";
        man << "reads worker_" << u << " cls_rp_" << u << "\n";
        man << "reads worker_" << u << " cls_pf_" << u << "\n";
        man << "writes worker_" << u << " cls_qp_" << u << "_" << c.userRegion[u] << "\n";
    }
    man << "reads svc.indexer cls_pub\n";
    for (const auto& u : c.users) {
        man << "reads svc.indexer cls_priv_" << u << "\n";
        man << "reads svc.indexer cls_frn_" << u << "\n";
    }
    for (const auto& d : c.censoredDocs) man << "reads svc.indexer cls_cens_" << d << "\n";
    man << "reads svc.engine cls_idx\n";
    for (const auto& u : c.users) {
        for (const auto& r : c.regions) man << "reads svc.engine cls_qp_" << u << "_" << r << "\n";
        man << "writes svc.engine cls_rp_" << u << "\n";
    }
    c.manifest = parseManifest(man.str());

    for (const auto& [id, decl] : c.manifest.classes)
        c.metadata.classPolicy[id] = decl.policyName;

    for (const auto& [u, fs_] : friends) {
        MetaList l;
        l.id = "friends." + u;
        l.entries.insert(fs_.begin(), fs_.end());
        c.metadata.lists[l.id] = std::move(l);
    }
    for (const auto& r : c.regions) {
        MetaList l;
        l.id = "bl." + r;
        c.metadata.lists[l.id] = std::move(l);
    }
    for (const auto& [d, r] : censRegion)
        c.metadata.lists["bl." + r].entries.insert("cls_cens_" + d);
    c.metadata.clock = 1;
    return c;
}

// --- persistence --------------------------------------------------------------

void persistCorpus(const Corpus& c, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "lists");
    std::ostringstream spec;
    spec << "users " << c.spec.users << "\nfriendsPerUser " << c.spec.friendsPerUser
         << "\ndocCount " << c.spec.docCount << "\nmix " << c.spec.publicFrac << " "
         << c.spec.privateFrac << " " << c.spec.friendsFrac << "\ncensoredFraction "
         << c.spec.censoredFraction << "\nregions " << c.spec.regions << "\nvocabulary "
         << c.spec.vocabulary << "\nwordsPerDoc " << c.spec.wordsPerDoc << "\nseed "
         << c.spec.seed << "\n";
    writeFile(fs::path(dir) / "spec.txt", spec.str());

    std::ostringstream users;
    for (const auto& u : c.users) users << u << " " << c.userRegion.at(u) << "\n";
    writeFile(fs::path(dir) / "users.txt", users.str());

    std::ostringstream docs;
    for (const auto& [d, cls] : c.docClass) {
        auto owner = c.docOwner.find(d);
        docs << d << " " << cls << " " << (owner == c.docOwner.end() ? "-" : owner->second)
             << " " << c.docText.at(d) << "\n";
    }
    writeFile(fs::path(dir) / "docs.txt", docs.str());

    std::string pols;
    for (const auto& [name, p] : c.metadata.policies) pols += serializePolicy(p) + "\n";
    writeFile(fs::path(dir) / "policies.pol", pols);
    writeFile(fs::path(dir) / "manifest.txt", serializeManifest(c.manifest));

    for (const auto& [id, l] : c.metadata.lists) {
        std::string entries;
        for (const auto& e : l.entries) entries += e + "\n";
        writeFile(fs::path(dir) / "lists" / (id + ".txt"), entries);
    }
}

Corpus loadCorpus(const std::string& dir) {
    Corpus c;
    {
        std::istringstream in(readFile(fs::path(dir) / "spec.txt"));
        std::string key;
        while (in >> key) {
            if (key == "users") in >> c.spec.users;
            else if (key == "friendsPerUser") in >> c.spec.friendsPerUser;
            else if (key == "docCount") in >> c.spec.docCount;
            else if (key == "mix")
                in >> c.spec.publicFrac >> c.spec.privateFrac >> c.spec.friendsFrac;
            else if (key == "censoredFraction") in >> c.spec.censoredFraction;
            else if (key == "regions") in >> c.spec.regions;
            else if (key == "vocabulary") in >> c.spec.vocabulary;
            else if (key == "wordsPerDoc") in >> c.spec.wordsPerDoc;
            else if (key == "seed") in >> c.spec.seed;
            else throw std::runtime_error("spec.txt: unknown key " + key);
        }
    }
    for (int r = 0; r < c.spec.regions; ++r) c.regions.push_back("r" + std::to_string(r));
    {
        std::istringstream in(readFile(fs::path(dir) / "users.txt"));
        std::string u, r;
        while (in >> u >> r) {
            c.users.push_back(u);
            c.userRegion[u] = r;
        }
    }
    {
        std::istringstream in(readFile(fs::path(dir) / "docs.txt"));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string d, cls, owner;
            ls >> d >> cls >> owner;
            std::string text;
            std::getline(ls, text);
            if (!text.empty() && text.front() == ' ') text.erase(0, 1);
            c.docClass[d] = cls;
            if (owner != "-") c.docOwner[d] = owner;
            c.docText[d] = text;
            if (cls.rfind("cls_cens_", 0) == 0) c.censoredDocs.insert(d);
        }
    }
    c.metadata.policies = parsePolicyFile(readFile(fs::path(dir) / "policies.pol"));
    c.manifest = parseManifest(readFile(fs::path(dir) / "manifest.txt"));
    for (const auto& [id, decl] : c.manifest.classes)
        c.metadata.classPolicy[id] = decl.policyName;
    for (const auto& entry : fs::directory_iterator(fs::path(dir) / "lists")) {
        MetaList l;
        l.id = entry.path().stem().string();
        std::istringstream in(readFile(entry.path()));
        std::string e;
        while (in >> e) l.entries.insert(e);
        c.metadata.lists[l.id] = std::move(l);
    }
    c.metadata.clock = 1;
    return c;
}

// --- session scripts ----------------------------------------------------------

std::vector<SessionScript> makeScripts(const Corpus& c, int count, int length,
                                       double mispredictFraction, std::uint64_t seed) {
    if (mispredictFraction < 0 || mispredictFraction > 1)
        throw std::invalid_argument("mispredictFraction must be in [0,1]");
    std::mt19937_64 rng(seed);
    int mispredicted = int(std::lround(mispredictFraction * count));
    std::vector<SessionScript> out;
    for (int i = 0; i < count; ++i) {
        SessionScript s;
        s.user = c.users[rng() % c.users.size()];
        s.region = c.userRegion.at(s.user);
        if (i < mispredicted && c.regions.size() > 1) {
            auto it = std::find(c.regions.begin(), c.regions.end(), s.region);
            s.region = c.regions[(it - c.regions.begin() + 1) % c.regions.size()];
        }
        for (int q = 0; q < length; ++q)
            s.queries.push_back("w" + std::to_string(rng() % std::uint64_t(c.spec.vocabulary)));
        out.push_back(std::move(s));
    }
    return out;
}

std::string serializeScripts(const std::vector<SessionScript>& scripts) {
    std::ostringstream out;
    for (const auto& s : scripts) {
        out << "session " << s.user << " " << s.region << " ";
        for (std::size_t i = 0; i < s.queries.size(); ++i)
            out << (i ? ";" : "") << s.queries[i];
        out << "\n";
    }
    return out.str();
}

std::vector<SessionScript> parseScripts(const std::string& text) {
    std::vector<SessionScript> out;
    std::istringstream in(text);
    std::string line;
    int lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string kw;
        SessionScript s;
        ls >> kw >> s.user >> s.region;
        if (kw != "session" || s.user.empty() || s.region.empty())
            throw std::runtime_error("scripts line " + std::to_string(lineNo) + ": bad record");
        std::string qs;
        ls >> qs;
        std::string cur;
        for (char ch : qs) {
            if (ch == ';') {
                if (!cur.empty()) s.queries.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
        if (!cur.empty()) s.queries.push_back(cur);
        out.push_back(std::move(s));
    }
    return out;
}

// --- pipeline -----------------------------------------------------------------

Pipeline::Pipeline(const Corpus& corpus, Mode mode, const OAOutput* oa, TickCosts costs,
                   bool patchSlowpath)
    : corpus_(corpus), mode_(mode), costs_(costs), store_(corpus.metadata) {
    if (mode == Mode::Shai) {
        if (!oa) throw std::invalid_argument("shai mode needs an offline-analysis output");
        shai_ = std::make_unique<ShaiMonitor>(&sandbox_, &store_, &corpus.manifest, *oa, costs,
                                              patchSlowpath);
        sandbox_.setMonitor(shai_.get());
    } else if (mode == Mode::Dynamic) {
        dyn_ = std::make_unique<DynamicMonitor>(&sandbox_, &store_, &corpus.manifest, costs);
        sandbox_.setMonitor(dyn_.get());
    }

    for (const auto& [d, cls] : corpus.docClass) {
        Conduit& c = sandbox_.createConduit(d, cls, ConduitKind::Ingress);
        c.versions.push_back({corpus.docText.at(d), {d}});
    }
    for (const auto& u : corpus.users) {
        Conduit& c = sandbox_.createConduit("kv:profile:" + u, "cls_pf_" + u,
                                            ConduitKind::Ingress);
        c.versions.push_back({"prefs of " + u, {"kv:profile:" + u}});
    }
    sandbox_.createConduit("board", "cls_board", ConduitKind::Internal);

    registerServiceTask("svc", "engine", "svc.engine");
}

Pipeline::~Pipeline() = default;

void Pipeline::registerServiceTask(const std::string& session, const std::string& handle,
                                   const std::string& instanceId) {
    if (shai_)
        shai_->registerTask(session, handle, instanceId);
    else if (dyn_)
        dyn_->registerTask(session, handle, instanceId);
}

void Pipeline::record(const std::string& kind, const std::string& task,
                      const std::string& conduit, bool allow) {
    records_.push_back({kind, task, conduit, allow});
    if (!allow) ++denials_;
}

void Pipeline::taintTag(const std::string& handle, const std::string& ingressId) {
    tags_[handle].insert(ingressId);
}

void Pipeline::mergeTag(const std::string& handle, const std::set<std::string>& ids) {
    tags_[handle].insert(ids.begin(), ids.end());
}

void Pipeline::buildIndex(int shards) {
    registerServiceTask("svc", "indexer", "svc.indexer");
    std::vector<std::set<std::string>> shardProvenance(shards);
    std::map<std::string, std::set<std::string>> postings; // token -> docs

    for (const auto& [d, cls] : corpus_.docClass) {
        auto r = sandbox_.openConduit("indexer", d, AccessMode::Read);
        record("open-r", "svc.indexer", d, r.verdict.allow);
        if (!r.verdict.allow) continue;
        taintTag("indexer", d);
        std::istringstream words(corpus_.docText.at(d));
        std::string w;
        while (words >> w) {
            postings[w].insert(d);
            int shard = int(fnv1a(w) % std::uint64_t(shards));
            shardProvenance[shard].insert(d);
        }
    }
    for (auto& [token, docs] : postings) {
        index_[token].assign(docs.begin(), docs.end());
        tokenShard_[token] = "idx#" + std::to_string(fnv1a(token) % std::uint64_t(shards));
    }
    for (int i = 0; i < shards; ++i) {
        std::string id = "idx#" + std::to_string(i);
        sandbox_.createConduit(id, "cls_idx", ConduitKind::Internal);
        auto r = sandbox_.openConduit("indexer", id, AccessMode::Write);
        record("create", "svc.indexer", id, r.verdict.allow);
        if (r.verdict.allow) {
            shardDocs_[id] = shardProvenance[i];
            sandbox_.appendVersion(id, {"postings", shardProvenance[i]});
        }
    }
    indexBuilt_ = true;
}

bool Pipeline::readableBy(const std::string& docId, const std::string& user,
                          const std::string& region) const {
    const MetadataView& view = store_.view();
    const Policy* pol = view.policyOfClass(corpus_.docClass.at(docId));
    if (!pol) return false;
    return evalRule(effectiveReadRequirement(*pol, view), {user, region, view.clock}, view);
}

std::vector<std::string> Pipeline::search(const std::string& query, const std::string& user,
                                          const std::string& region, int k) const {
    std::vector<std::string> out;
    auto it = index_.find(query);
    if (it == index_.end()) return out;
    for (const auto& d : it->second) {
        if (!readableBy(d, user, region)) continue;
        out.push_back(d);
        if (int(out.size()) >= k) break;
    }
    return out;
}

Pipeline::SessionState Pipeline::beginSession(const std::string& user,
                                              const std::string& region) {
    SessionState s;
    s.id = "s" + std::to_string(sessionCounter_++);
    s.handle = "worker_" + user + "#" + s.id;
    s.user = user;
    s.region = region;
    s.qpipe = "qpipe#" + s.id;
    s.rpipe = "rpipe#" + s.id;
    s.egress = "egress#" + s.id;
    sandbox_.createConduit(s.qpipe, "cls_qp_" + user + "_" + region, ConduitKind::Internal);
    sandbox_.createConduit(s.rpipe, "cls_rp_" + user, ConduitKind::Internal, true);
    sandbox_.createConduit(s.egress, "cls_egr_" + user + "_" + region, ConduitKind::Egress);

    std::string instance = "worker_" + user;
    if (shai_) {
        shai_->registerTask(s.id, s.handle, instance);
        shai_->acceptConnection(s.id, s.handle);
        shai_->authenticateSession(s.id, s.handle, user, region, s.egress);
    } else if (dyn_) {
        dyn_->registerTask(s.id, s.handle, instance);
        dyn_->acceptConnection(s.id, s.handle);
        dyn_->authenticateSession(s.id, s.handle, user, region, s.egress);
    }
    s.live = true;
    return s;
}

void Pipeline::endSession(SessionState& s) {
    if (shai_)
        shai_->resetSession(s.id, s.handle);
    else if (dyn_)
        dyn_->resetSession(s.id, s.handle);
    else
        sandbox_.dropTaskState(s.handle);
    tags_.erase(s.handle);
    s.live = false;
}

void Pipeline::egressWrite(const SessionState& s, const std::string& content) {
    std::string instance = "worker_" + s.user;
    auto r = sandbox_.openConduit(s.handle, s.egress, AccessMode::Write);
    record("open-w", instance, s.egress, r.verdict.allow);
    if (!r.verdict.allow) return;
    const MetadataView& view = store_.view();
    SessionContext reader{s.user, s.region, view.clock};
    for (const auto& id : tags_[s.handle]) {
        const Conduit* c = sandbox_.conduit(id);
        const Policy* pol = c ? view.policyOfClass(c->classId) : nullptr;
        if (!pol || !evalRule(pol->read, reader, view)) ++leaks_;
    }
    sandbox_.appendVersion(s.egress, {content, tags_[s.handle]});
}

void Pipeline::runQuery(SessionState& s, const std::string& query) {
    ++queries_;
    std::string instance = "worker_" + s.user;
    const std::string& predRegion = corpus_.userRegion.at(s.user);

    // worker submits the query
    auto qw = sandbox_.openConduit(s.handle, s.qpipe, AccessMode::Write);
    record("open-w", instance, s.qpipe, qw.verdict.allow);
    if (qw.verdict.allow) sandbox_.appendVersion(s.qpipe, {query, tags_[s.handle]});

    // engine picks it up, consults the index, replies with descriptors
    auto qr = sandbox_.openConduit("engine", s.qpipe, AccessMode::Read);
    record("open-r", "svc.engine", s.qpipe, qr.verdict.allow);
    auto shard = tokenShard_.find(query);
    if (shard != tokenShard_.end()) {
        auto ir = sandbox_.openConduit("engine", shard->second, AccessMode::Read);
        record("open-r", "svc.engine", shard->second, ir.verdict.allow);
        if (ir.verdict.allow) mergeTag("engine", shardDocs_[shard->second]);
    }
    // the engine personalizes with the region it predicted for the user
    std::vector<std::string> results = search(query, s.user, predRegion);

    auto rw = sandbox_.openConduit("engine", s.rpipe, AccessMode::Write);
    record("open-w", "svc.engine", s.rpipe, rw.verdict.allow);
    std::vector<std::string> delivered;
    for (const auto& d : results) {
        auto t = sandbox_.transferDescriptor("engine", s.handle, d, s.rpipe);
        record("transfer", instance, d, t.verdict.allow);
        if (t.verdict.allow) delivered.push_back(d);
    }

    auto rr = sandbox_.openConduit(s.handle, s.rpipe, AccessMode::Read);
    record("open-r", instance, s.rpipe, rr.verdict.allow);
    std::string snippets;
    for (const auto& d : delivered) {
        record("fd-read", instance, d, true); // pre-authorized by the transfer
        taintTag(s.handle, d);
        snippets += d + ";";
    }

    auto kv = sandbox_.kvRequest(s.handle, "GET", "profile:" + s.user);
    record("kv", instance, "kv:profile:" + s.user, kv.allow);
    if (kv.allow) taintTag(s.handle, "kv:profile:" + s.user);

    egressWrite(s, snippets);
}

void Pipeline::runSession(const SessionScript& script) {
    if (!indexBuilt_) buildIndex();
    SessionState s = beginSession(script.user, script.region);
    for (const auto& q : script.queries) runQuery(s, q);
    endSession(s);
}

std::vector<InterceptionRow> Pipeline::interceptions() const {
    if (shai_) return shai_->log();
    if (dyn_) return dyn_->log();
    return {};
}

std::size_t Pipeline::sessionInterceptions(const std::string& sessionId) const {
    std::size_t n = 0;
    for (const auto& row : interceptions())
        if (row.session == sessionId) ++n;
    return n;
}

long Pipeline::rmTicks() const {
    if (shai_) return shai_->rmTicks();
    if (dyn_) return dyn_->rmTicks();
    return 0;
}

long Pipeline::resetTicks() const {
    if (shai_) return shai_->resetTicks();
    if (dyn_) return dyn_->resetTicks();
    return 0;
}

// --- fault injection ----------------------------------------------------------

namespace {

std::string denyDetail(const Verdict& v) {
    return v.allow ? std::string("allowed") : std::string("denied:") + denyReasonName(v.reason);
}

} // namespace

FaultResult Pipeline::injectFault(int scenario) {
    if (!indexBuilt_) buildIndex();
    const std::string& alice = corpus_.users[0];

    auto privateDocOf = [&](const std::string& owner) -> std::string {
        for (const auto& [d, cls] : corpus_.docClass)
            if (cls == "cls_priv_" + owner) return d;
        return "";
    };
    std::string bob;
    std::string bobDoc;
    for (const auto& u : corpus_.users) {
        if (u == alice) continue;
        std::string d = privateDocOf(u);
        if (!d.empty()) {
            bob = u;
            bobDoc = d;
            break;
        }
    }

    switch (scenario) {
    case 1: { // engine transfers another user's private descriptor
        SessionState s = beginSession(alice, corpus_.userRegion.at(alice));
        auto t = sandbox_.transferDescriptor("engine", s.handle, bobDoc, s.rpipe);
        record("transfer", "worker_" + alice, bobDoc, t.verdict.allow);
        if (t.verdict.allow) {
            taintTag(s.handle, bobDoc);
            egressWrite(s, "stolen");
        }
        endSession(s);
        return {"F1", !t.verdict.allow, denyDetail(t.verdict)};
    }
    case 2: { // engine writes data bytes on the fd-only pipe
        SessionState s = beginSession(alice, corpus_.userRegion.at(alice));
        Verdict v = sandbox_.pipeWriteData("engine", s.rpipe);
        if (v.allow) {
            mergeTag(s.handle, tags_["engine"]);
            egressWrite(s, "leaked-index");
        }
        endSession(s);
        return {"F2", !v.allow, denyDetail(v)};
    }
    case 3: { // worker opens another user's private doc directly
        SessionState s = beginSession(alice, corpus_.userRegion.at(alice));
        auto r = sandbox_.openConduit(s.handle, bobDoc, AccessMode::Read);
        record("open-r", "worker_" + alice, bobDoc, r.verdict.allow);
        bool blocked = !r.verdict.allow;
        std::string detail = denyDetail(r.verdict);
        if (r.verdict.allow) {
            // the read went through; the write must now be stopped
            taintTag(s.handle, bobDoc);
            std::size_t leaksBefore = leaks_;
            std::size_t denialsBefore = denials_;
            egressWrite(s, "private-derived");
            blocked = denials_ > denialsBefore && leaks_ == leaksBefore;
            detail = blocked ? "read logged, egress write denied" : "leaked at egress";
        }
        endSession(s);
        return {"F3", blocked, detail};
    }
    case 4: { // open public write handle survives a taint increase
        std::string handle = "poster#f4";
        if (shai_) {
            shai_->registerTask("f4", handle, "poster");
            auto w = sandbox_.openConduit(handle, "board", AccessMode::Write);
            record("open-w", "poster", "board", w.verdict.allow);
            Verdict v = shai_->reRegister("f4", handle, "worker_" + alice);
            shai_->resetSession("f4", handle);
            return {"F4", !v.allow, denyDetail(v)};
        }
        if (dyn_) {
            dyn_->registerTask("f4", handle, "poster");
            auto w1 = sandbox_.openConduit(handle, "board", AccessMode::Write);
            record("open-w", "poster", "board", w1.verdict.allow);
            std::string aliceDoc = privateDocOf(alice);
            auto r = sandbox_.openConduit(handle, aliceDoc, AccessMode::Read);
            record("open-r", "poster", aliceDoc, r.verdict.allow);
            auto w2 = sandbox_.openConduit(handle, "board", AccessMode::Write);
            record("open-w", "poster", "board", w2.verdict.allow);
            dyn_->resetSession("f4", handle);
            return {"F4", !w2.verdict.allow, denyDetail(w2.verdict)};
        }
        return {"F4", false, "no monitor"};
    }
    case 5: { // censored doc pushed to a session in its blocked region
        const MetadataView& view = store_.view();
        std::string doc, user;
        for (const auto& d : corpus_.censoredDocs) {
            std::string cls = "cls_cens_" + d;
            for (const auto& r : corpus_.regions) {
                const MetaList* bl = view.list("bl." + r);
                if (!bl || !bl->has(cls)) continue;
                for (const auto& u : corpus_.users) {
                    if (corpus_.userRegion.at(u) == r) {
                        doc = d;
                        user = u;
                        break;
                    }
                }
                if (!user.empty()) break;
            }
            if (!user.empty()) break;
        }
        if (user.empty()) return {"F5", false, "no censored doc/user pair"};
        SessionState s = beginSession(user, corpus_.userRegion.at(user));
        auto t = sandbox_.transferDescriptor("engine", s.handle, doc, s.rpipe);
        record("transfer", "worker_" + user, doc, t.verdict.allow);
        if (t.verdict.allow) {
            taintTag(s.handle, doc);
            egressWrite(s, "censored");
        }
        endSession(s);
        return {"F5", !t.verdict.allow, denyDetail(t.verdict)};
    }
    case 6: { // worker writes a private-derived snippet to a public board
        SessionState s = beginSession(alice, corpus_.userRegion.at(alice));
        std::string aliceDoc = privateDocOf(alice);
        auto t = sandbox_.transferDescriptor("engine", s.handle, aliceDoc, s.rpipe);
        record("transfer", "worker_" + alice, aliceDoc, t.verdict.allow);
        if (t.verdict.allow) taintTag(s.handle, aliceDoc);
        auto w = sandbox_.openConduit(s.handle, "board", AccessMode::Write);
        record("open-w", "worker_" + alice, "board", w.verdict.allow);
        if (w.verdict.allow) {
            const MetadataView& view = store_.view();
            for (const auto& id : tags_[s.handle]) {
                const Conduit* c = sandbox_.conduit(id);
                const Policy* pol = c ? view.policyOfClass(c->classId) : nullptr;
                // the board is world-readable: anything non-public leaks
                if (!pol || !pol->read.isTrue()) ++leaks_;
            }
            sandbox_.appendVersion("board", {"snippet", tags_[s.handle]});
        }
        endSession(s);
        return {"F6", !w.verdict.allow, denyDetail(w.verdict)};
    }
    default:
        throw std::invalid_argument("unknown fault scenario");
    }
}

std::vector<FaultResult> Pipeline::runFaultSuite() {
    std::vector<FaultResult> out;
    for (int f = 1; f <= 6; ++f) out.push_back(injectFault(f));
    return out;
}

} // namespace shai
