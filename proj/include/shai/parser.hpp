#pragma once

#include "shai/policy.hpp"

#include <map>
#include <stdexcept>
#include <string>

namespace shai {

struct ParseError : std::runtime_error {
    int line;
    int col;
    ParseError(int ln, int cl, const std::string& msg)
        : std::runtime_error("parse error at " + std::to_string(ln) + ":" + std::to_string(cl) +
                             ": " + msg),
          line(ln), col(cl) {}
};

// Parses a single `policy NAME { ... }` block. Normalizes and assigns classId.
Policy parsePolicy(const std::string& text);

// Parses every policy block in the input; keyed by name. Duplicate names are
// an error.
std::map<std::string, Policy> parsePolicyFile(const std::string& text);

// Canonical text. Disjuncts, atoms and escapes are emitted in a fixed total
// order so the classId hash is deterministic.
std::string serializePolicy(const Policy& p);
std::string serializeRule(const Rule& r);
std::string serializeConjunct(const Conjunct& c);
std::string serializeAtom(const Atom& a);

// Collision-resistant hash (hex) of arbitrary bytes; used for policy class
// ids and file checksums.
std::string contentHash(const std::string& bytes);

// Hash of the canonical policy body (rules only, not the name).
std::string computeClassId(const Policy& p);

} // namespace shai
