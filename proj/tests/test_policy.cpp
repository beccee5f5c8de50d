#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

#include "shai/metadata.hpp"

#include <set>

using namespace shai;
using testsupport::Gen;

TEST_CASE("serialize/parse round trip is a fixpoint over random policies") {
    Gen gen(101);
    for (int i = 0; i < 500; ++i) {
        Policy p = gen.policy("pol" + std::to_string(i));
        std::string text = serializePolicy(p);
        Policy q = parsePolicy(text);
        CAPTURE(text);
        CHECK(q.structurallyEqual(p));
        CHECK(q.classId == p.classId);
        CHECK(serializePolicy(q) == text);
    }
}

TEST_CASE("normalization is idempotent and drops degenerate conjuncts") {
    Gen gen(202);
    for (int i = 0; i < 300; ++i) {
        Rule r = gen.rule();
        CHECK(normalize(r) == r);
    }
    Rule falseRule = normalize(Rule{{{Atom::falsity()}}});
    CHECK(falseRule.isFalse());
    Rule withTrue = normalize(Rule{{{Atom::truth(), Atom::key("alice")}}});
    CHECK(withTrue == Rule{{{Atom::key("alice")}}});
    Rule collapsed = normalize(Rule{{{Atom::truth()}, {Atom::key("alice")}}});
    CHECK(collapsed.isTrue());
}

TEST_CASE("normalization preserves semantics on the small universe") {
    Gen gen(303);
    FiniteUniverse u = testsupport::smallUniverse();
    for (int i = 0; i < 60; ++i) {
        Rule raw;
        int n = 1 + gen.upto(3);
        for (int d = 0; d < n; ++d) {
            Conjunct c;
            int m = 1 + gen.upto(3);
            for (int a = 0; a < m; ++a) c.push_back(gen.groundAtom());
            raw.disjuncts.push_back(c); // deliberately un-normalized
        }
        Rule norm = normalize(raw);
        CHECK(semanticImplies(raw, norm, u));
        CHECK(semanticImplies(norm, raw, u));
    }
}

TEST_CASE("classId depends on the body, not the name") {
    Policy a = parsePolicy("policy a { read :- key(alice); update :- false; "
                           "declassify :- propagate; }");
    Policy b = parsePolicy("policy b { read :- key(alice); update :- false; "
                           "declassify :- propagate; }");
    Policy c = parsePolicy("policy c { read :- key(bob); update :- false; "
                           "declassify :- propagate; }");
    CHECK(a.classId == b.classId);
    CHECK(a.classId != c.classId);
    CHECK(a.classId == computeClassId(a));
}

TEST_CASE("classIds are injective over distinct random bodies") {
    Gen gen(404);
    std::set<std::string> texts, ids;
    for (int i = 0; i < 400; ++i) {
        Policy p = gen.policy("p");
        if (texts.insert(serializePolicy(p)).second) ids.insert(p.classId);
    }
    CHECK(texts.size() == ids.size());
}

TEST_CASE("policy grammar accepts the documented constructs") {
    Policy p = parsePolicy(
        "policy friends_alice {\n"
        "  read :- key(alice) | key(X) & in(friends.alice, X);\n"
        "  update :- key(alice) & region(eu) | after(100);\n"
        "  declassify :- propagate until fdonly => true until after(50) => key(X) &"
        " notin(banned, X);\n"
        "}");
    CHECK(p.name == "friends_alice");
    CHECK(p.read.disjuncts.size() == 2);
    CHECK(p.update.disjuncts.size() == 2);
    CHECK(p.declassify.escapes.size() == 2);
    bool hasFdonlyEscape = false;
    for (const Escape& e : p.declassify.escapes)
        if (e.trigger == Conjunct{Atom::fdonly()} && e.result.isTrue()) hasFdonlyEscape = true;
    CHECK(hasFdonlyEscape);

    MetadataView v;
    v.lists["friends.alice"].id = "friends.alice";
    v.lists["friends.alice"].entries = {"bob"};
    CHECK(evalRule(p.read, {"alice", "us", 0}, v));
    CHECK(evalRule(p.read, {"bob", "us", 0}, v));
    CHECK_FALSE(evalRule(p.read, {"carol", "us", 0}, v));
}

TEST_CASE("parse errors carry positions; duplicates rejected") {
    CHECK_THROWS_AS(parsePolicy("policy x { read :- ; }"), ParseError);
    CHECK_THROWS_AS(parsePolicy("policy x { read :- key(a) }"), ParseError);
    CHECK_THROWS_AS(parsePolicy("nonsense"), ParseError);
    CHECK_THROWS(parsePolicyFile("policy a { read :- true; update :- false; "
                                 "declassify :- propagate; }\n"
                                 "policy a { read :- true; update :- false; "
                                 "declassify :- propagate; }"));
}

TEST_CASE("taint components dedup by classId") {
    Policy a = parsePolicy("policy a { read :- key(alice); update :- false; "
                           "declassify :- propagate; }");
    Policy b = parsePolicy("policy b { read :- key(alice); update :- false; "
                           "declassify :- propagate; }"); // same body
    Policy c = parsePolicy("policy c { read :- key(bob); update :- false; "
                           "declassify :- propagate; }");
    Taint t;
    t.add(a);
    t.add(b);
    t.add(c);
    t.add(c);
    CHECK(t.components.size() == 2);
}

TEST_CASE("forbidsData marks fd-only update rules") {
    Policy p = parsePolicy("policy p { read :- true; update :- fdonly; "
                           "declassify :- propagate; }");
    CHECK(forbidsData(p.update));
    Policy q = parsePolicy("policy q { read :- true; update :- fdonly | key(a); "
                           "declassify :- propagate; }");
    CHECK_FALSE(forbidsData(q.update));
    CHECK(forbidsData(Rule::never()));
}
