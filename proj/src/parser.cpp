#include "shai/parser.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <sstream>

namespace shai {

std::string contentHash(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    static const char hex[] = "0123456789abcdef";
    std::string out;
    // 128 bits of the digest is plenty for class identity
    for (unsigned i = 0; i < 16 && i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string serializeAtom(const Atom& a) {
    switch (a.kind) {
    case AtomKind::True: return "true";
    case AtomKind::False: return "false";
    case AtomKind::KeyIs: return "key(" + a.arg + ")";
    case AtomKind::RegionIs: return "region(" + a.arg + ")";
    case AtomKind::ListHas: return "in(" + a.list + ", " + a.arg + ")";
    case AtomKind::ListLacks: return "notin(" + a.list + ", " + a.arg + ")";
    case AtomKind::TimeAfter: return "after(" + std::to_string(a.time) + ")";
    case AtomKind::FdOnly: return "fdonly";
    }
    return "?";
}

std::string serializeConjunct(const Conjunct& c) {
    std::string out;
    for (size_t i = 0; i < c.size(); ++i) {
        if (i) out += " & ";
        out += serializeAtom(c[i]);
    }
    return out;
}

std::string serializeRule(const Rule& r) {
    if (r.isFalse()) return "false";
    std::string out;
    for (size_t i = 0; i < r.disjuncts.size(); ++i) {
        if (i) out += " | ";
        out += serializeConjunct(r.disjuncts[i]);
    }
    return out;
}

static std::string serializeBody(const Policy& p) {
    std::string out;
    out += "  read :- " + serializeRule(p.read) + ";\n";
    out += "  update :- " + serializeRule(p.update) + ";\n";
    out += "  declassify :- propagate";
    for (const auto& e : p.declassify.escapes) {
        out += " until " + serializeConjunct(e.trigger) + " => " + serializeRule(e.result);
    }
    out += ";\n";
    return out;
}

std::string computeClassId(const Policy& p) {
    return contentHash(serializeBody(p));
}

std::string serializePolicy(const Policy& p) {
    return "policy " + p.name + " {\n" + serializeBody(p) + "}\n";
}

namespace {

enum class Tok { Ident, Number, Punct, End };

struct Token {
    Tok kind;
    std::string text;
    int line, col;
};

class Lexer {
public:
    explicit Lexer(const std::string& src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }

    Token next() {
        Token t = tok_;
        advance();
        return t;
    }

private:
    void advance() {
        skipWs();
        tok_ = {Tok::End, "", line_, col_};
        if (pos_ >= src_.size()) return;
        char c = src_[pos_];
        int ln = line_, cl = col_;
        if (std::isalpha((unsigned char)c) || c == '_') {
            std::string id;
            while (pos_ < src_.size()) {
                char d = src_[pos_];
                if (std::isalnum((unsigned char)d) || d == '_' || d == '.' || d == '-') {
                    id.push_back(d);
                    take();
                } else {
                    break;
                }
            }
            tok_ = {Tok::Ident, id, ln, cl};
            return;
        }
        if (std::isdigit((unsigned char)c) || (c == '-' && pos_ + 1 < src_.size() &&
                                               std::isdigit((unsigned char)src_[pos_ + 1]))) {
            std::string num;
            num.push_back(c);
            take();
            while (pos_ < src_.size() && std::isdigit((unsigned char)src_[pos_])) {
                num.push_back(src_[pos_]);
                take();
            }
            tok_ = {Tok::Number, num, ln, cl};
            return;
        }
        if (c == ':' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '-') {
            take();
            take();
            tok_ = {Tok::Punct, ":-", ln, cl};
            return;
        }
        if (c == '=' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '>') {
            take();
            take();
            tok_ = {Tok::Punct, "=>", ln, cl};
            return;
        }
        take();
        tok_ = {Tok::Punct, std::string(1, c), ln, cl};
    }

    void skipWs() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') take();
            } else if (std::isspace((unsigned char)c)) {
                take();
            } else {
                break;
            }
        }
    }

    void take() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    const std::string& src_;
    size_t pos_ = 0;
    int line_ = 1, col_ = 1;
    Token tok_;
};

bool isVariable(const std::string& id) {
    return id.size() == 1 && id[0] >= 'A' && id[0] <= 'Z';
}

class PolicyParser {
public:
    explicit PolicyParser(const std::string& src) : lex_(src) {}

    bool atEnd() { return lex_.peek().kind == Tok::End; }

    Policy parseBlock() {
        expectIdent("policy");
        Token name = lex_.next();
        if (name.kind != Tok::Ident) fail(name, "expected policy name");
        expectPunct("{");
        Policy p;
        p.name = name.text;
        expectIdent("read");
        expectPunct(":-");
        p.read = parseDnf();
        expectPunct(";");
        expectIdent("update");
        expectPunct(":-");
        p.update = parseDnf();
        expectPunct(";");
        expectIdent("declassify");
        expectPunct(":-");
        expectIdent("propagate");
        while (lex_.peek().kind == Tok::Ident && lex_.peek().text == "until") {
            lex_.next();
            Escape e;
            Token at = lex_.peek();
            e.trigger = parseConjunct();
            validateTrigger(e.trigger, at);
            expectPunct("=>");
            e.result = parseDnf();
            p.declassify.escapes.push_back(std::move(e));
        }
        expectPunct(";");
        expectPunct("}");
        p.read = normalize(std::move(p.read));
        p.update = normalize(std::move(p.update));
        p.declassify = normalizeDeclass(std::move(p.declassify));
        p.classId = computeClassId(p);
        return p;
    }

private:
    Rule parseDnf() {
        Rule r;
        r.disjuncts.push_back(parseConjunct());
        while (lex_.peek().kind == Tok::Punct && lex_.peek().text == "|") {
            lex_.next();
            r.disjuncts.push_back(parseConjunct());
        }
        return r;
    }

    Conjunct parseConjunct() {
        Conjunct c;
        Token at = lex_.peek();
        c.push_back(parseAtom());
        while (lex_.peek().kind == Tok::Punct && lex_.peek().text == "&") {
            lex_.next();
            c.push_back(parseAtom());
        }
        validateBindings(c, at);
        return c;
    }

    Atom parseAtom() {
        Token t = lex_.next();
        if (t.kind != Tok::Ident) fail(t, "expected predicate");
        const std::string& p = t.text;
        if (p == "true") return Atom::truth();
        if (p == "false") return Atom::falsity();
        if (p == "fdonly") return Atom::fdonly();
        if (p == "key") {
            expectPunct("(");
            Token id = lex_.next();
            if (id.kind != Tok::Ident) fail(id, "expected identifier in key()");
            expectPunct(")");
            return Atom::key(id.text, isVariable(id.text));
        }
        if (p == "region") {
            expectPunct("(");
            Token id = lex_.next();
            if (id.kind != Tok::Ident) fail(id, "expected identifier in region()");
            expectPunct(")");
            return Atom::region(id.text);
        }
        if (p == "in" || p == "notin") {
            expectPunct("(");
            Token list = lex_.next();
            if (list.kind != Tok::Ident) fail(list, "expected list name");
            expectPunct(",");
            Token term = lex_.next();
            if (term.kind != Tok::Ident) fail(term, "expected list entry");
            expectPunct(")");
            bool var = isVariable(term.text);
            return p == "in" ? Atom::in(list.text, term.text, var)
                             : Atom::notin(list.text, term.text, var);
        }
        if (p == "after") {
            expectPunct("(");
            Token num = lex_.next();
            if (num.kind != Tok::Number) fail(num, "expected timestamp in after()");
            expectPunct(")");
            return Atom::after(std::stoll(num.text));
        }
        fail(t, "unknown predicate '" + p + "'");
        return Atom::truth();
    }

    void validateBindings(const Conjunct& c, const Token& at) {
        std::string var;
        bool bound = false;
        for (const Atom& a : c) {
            if (!a.var) continue;
            if (var.empty()) var = a.arg;
            if (a.arg != var) fail(at, "more than one variable in a conjunct");
            if (a.kind == AtomKind::KeyIs) bound = true;
        }
        if (!var.empty() && !bound)
            fail(at, "unbound variable '" + var + "' (needs key(" + var + ") in the conjunct)");
    }

    void validateTrigger(const Conjunct& c, const Token& at) {
        for (const Atom& a : c) {
            if (a.kind == AtomKind::KeyIs || a.kind == AtomKind::RegionIs || a.var)
                fail(at, "declassification trigger must not depend on a session");
        }
    }

    void expectIdent(const std::string& kw) {
        Token t = lex_.next();
        if (t.kind != Tok::Ident || t.text != kw) fail(t, "expected '" + kw + "'");
    }

    void expectPunct(const std::string& pc) {
        Token t = lex_.next();
        if (t.kind != Tok::Punct || t.text != pc) fail(t, "expected '" + pc + "'");
    }

    [[noreturn]] void fail(const Token& t, const std::string& msg) {
        throw ParseError(t.line, t.col, msg);
    }

    Lexer lex_;
};

} // namespace

Policy parsePolicy(const std::string& text) {
    PolicyParser p(text);
    return p.parseBlock();
}

std::map<std::string, Policy> parsePolicyFile(const std::string& text) {
    PolicyParser p(text);
    std::map<std::string, Policy> out;
    while (!p.atEnd()) {
        Policy pol = p.parseBlock();
        if (!out.emplace(pol.name, pol).second)
            throw ParseError(0, 0, "duplicate policy '" + pol.name + "'");
    }
    return out;
}

} // namespace shai
