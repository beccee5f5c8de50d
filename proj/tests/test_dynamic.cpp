#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "shai/dynamic.hpp"
#include "shai/pipeline.hpp"

#include <algorithm>
#include <random>

using namespace shai;

namespace {

struct World {
    Corpus corpus;
    MetadataStore store;
    Sandbox sandbox;

    World() {
        CorpusSpec spec;
        spec.users = 4;
        spec.friendsPerUser = 1;
        spec.docCount = 30;
        spec.regions = 2;
        spec.censoredFraction = 0.1;
        spec.seed = 42;
        corpus = generateCorpus(spec);
        store = MetadataStore(corpus.metadata);
        for (const auto& [d, cls] : corpus.docClass)
            sandbox.createConduit(d, cls, ConduitKind::Ingress);
        sandbox.createConduit("board", "cls_board", ConduitKind::Internal);
    }

    std::string docOfClass(const std::string& cls) const {
        for (const auto& [d, c] : corpus.docClass)
            if (c == cls) return d;
        return "";
    }
};

} // namespace

TEST_CASE("session lifecycle is bookkeeping, only reset is an interception") {
    World w;
    TickCosts costs;
    DynamicMonitor mon(&w.sandbox, &w.store, &w.corpus.manifest, costs);
    w.sandbox.setMonitor(&mon);
    CHECK(mon.registerTask("s1", "h1", "worker_u000"));
    mon.acceptConnection("s1", "h1");
    CHECK(mon.authenticateSession("s1", "h1", "u000", "r1"));
    CHECK(mon.log().empty());
    mon.resetSession("s1", "h1");
    CHECK(mon.log().size() == 1);
    CHECK(mon.log()[0].kind == "reset");
    CHECK(mon.resetTicks() == costs.execReset);
    CHECK(mon.stateOf("h1") == nullptr);
}

TEST_CASE("authentication binds the actual region, no prediction involved") {
    World w;
    DynamicMonitor mon(&w.sandbox, &w.store, &w.corpus.manifest, {});
    mon.registerTask("s1", "h1", "worker_u000");
    std::string other = w.corpus.userRegion.at("u000") == "r0" ? "r1" : "r0";
    CHECK(mon.authenticateSession("s1", "h1", "u000", other));
    CHECK(mon.stateOf("h1")->region == other);
    CHECK_FALSE(mon.authenticateSession("s1", "h1", "u999", other));
}

TEST_CASE("reads are logged open-style and folded order-independently") {
    World w;
    std::vector<std::string> classes = {"cls_pub", "cls_priv_u000", "cls_frn_u000",
                                        "cls_rp_u000"};
    std::vector<std::string> taintA, taintB;
    for (int perm = 0; perm < 2; ++perm) {
        DynamicMonitor mon(&w.sandbox, &w.store, &w.corpus.manifest, {});
        w.sandbox.setMonitor(&mon);
        mon.registerTask("s1", "h1", "worker_u000");
        mon.authenticateSession("s1", "h1", "u000", "r0");
        auto order = classes;
        if (perm) std::reverse(order.begin(), order.end());
        for (const auto& cls : order) {
            std::string d = w.docOfClass(cls);
            if (d.empty()) {
                w.sandbox.createConduit("x:" + cls, cls, ConduitKind::Internal);
                d = "x:" + cls;
            }
            CHECK(mon.onOpenFault("h1", d, AccessMode::Read).allow);
        }
        // force the fold with any write check
        mon.onOpenFault("h1", "board", AccessMode::Write);
        std::vector<std::string>& out = perm ? taintB : taintA;
        for (const Policy& p : mon.stateOf("h1")->taint.components) out.push_back(p.classId);
    }
    CHECK(taintA == taintB);
    CHECK(taintA.size() == 4);
}

TEST_CASE("private reads poison public writes but not owner-scoped ones") {
    World w;
    DynamicMonitor mon(&w.sandbox, &w.store, &w.corpus.manifest, {});
    w.sandbox.setMonitor(&mon);
    mon.registerTask("s1", "h1", "worker_u000");
    mon.authenticateSession("s1", "h1", "u000", w.corpus.userRegion.at("u000"));

    // with nothing read, a board write is fine (top taint, update :- true)
    CHECK(mon.onOpenFault("h1", "board", AccessMode::Write).allow);

    std::string priv = w.docOfClass("cls_priv_u000");
    REQUIRE_FALSE(priv.empty());
    CHECK(mon.onOpenFault("h1", priv, AccessMode::Read).allow);
    Verdict v = mon.onOpenFault("h1", "board", AccessMode::Write);
    CHECK_FALSE(v.allow);
    CHECK(v.reason == DenyReason::DeclassFailed);

    // the user's own egress still accepts the same taint
    std::string region = w.corpus.userRegion.at("u000");
    w.sandbox.createConduit("eg1", "cls_egr_u000_" + region, ConduitKind::Egress);
    CHECK(mon.onOpenFault("h1", "eg1", AccessMode::Write).allow);
}

TEST_CASE("descriptor transfers adjudicate against the receiving session") {
    World w;
    DynamicMonitor mon(&w.sandbox, &w.store, &w.corpus.manifest, {});
    w.sandbox.setMonitor(&mon);
    mon.registerTask("s1", "h1", "worker_u000");
    mon.authenticateSession("s1", "h1", "u000", w.corpus.userRegion.at("u000"));

    std::string own = w.docOfClass("cls_priv_u000");
    std::string foreign = w.docOfClass("cls_priv_u001");
    REQUIRE_FALSE(own.empty());
    REQUIRE_FALSE(foreign.empty());
    CHECK(mon.onTransferFault("h1", own).allow);
    Verdict v = mon.onTransferFault("h1", foreign);
    CHECK_FALSE(v.allow);
    CHECK(v.reason == DenyReason::NoReceiverCapability);

    // receiving the descriptor counts as a read: the egress check sees it
    w.sandbox.createConduit("board2", "cls_board", ConduitKind::Internal);
    Verdict w2 = mon.onOpenFault("h1", "board2", AccessMode::Write);
    CHECK_FALSE(w2.allow); // own private doc now taints the task
}

TEST_CASE("kv requests log reads and check writes") {
    World w;
    DynamicMonitor mon(&w.sandbox, &w.store, &w.corpus.manifest, {});
    w.sandbox.setMonitor(&mon);
    w.sandbox.createConduit("kv:profile:u000", "cls_pf_u000", ConduitKind::Ingress);
    mon.registerTask("s1", "h1", "worker_u000");
    mon.authenticateSession("s1", "h1", "u000", w.corpus.userRegion.at("u000"));

    CHECK(mon.onKvFault("h1", "GET", "profile:u000").allow);
    CHECK(mon.onKvFault("h1", "PUT", "profile:u000").allow); // update :- key(u000)
    CHECK_FALSE(mon.onKvFault("h1", "GET", "profile:ghost").allow);
    // after the GET the profile policy is in the taint: board writes fail
    Verdict v = mon.onOpenFault("h1", "board", AccessMode::Write);
    CHECK_FALSE(v.allow);
}

TEST_CASE("fd-only targets let fdonly-escaped components through") {
    World w;
    DynamicMonitor mon(&w.sandbox, &w.store, &w.corpus.manifest, {});
    w.sandbox.setMonitor(&mon);
    mon.registerTask("svc", "eng", "svc.engine");
    mon.authenticateSession("svc", "eng", "svc.engine", "r0");
    // the engine reads a query pipe, then forwards over an fd-only reply pipe
    w.sandbox.createConduit("qp1", "cls_qp_u000_r0", ConduitKind::Internal);
    w.sandbox.createConduit("rp1", "cls_rp_u000", ConduitKind::Internal, true);
    CHECK(mon.onOpenFault("eng", "qp1", AccessMode::Read).allow);
    CHECK(mon.onOpenFault("eng", "rp1", AccessMode::Write).allow);
    // ... but the same taint cannot flow to a plain public conduit
    CHECK_FALSE(mon.onOpenFault("eng", "board", AccessMode::Write).allow);
}
