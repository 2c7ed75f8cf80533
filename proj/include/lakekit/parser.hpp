#pragma once

#include <string>
#include <string_view>

#include "lakekit/ast.hpp"

namespace lakekit::lang {

/// Parses one statement of the expression grammar (docs/grammar.ebnf).
/// Throws Error(SyntaxError) with "line:col: expected ..." in the message.
TransformPtr parse(std::string_view source);

/// Canonical concrete syntax; parse(print(t)) == t for every valid tree.
std::string print(const Transform& t);
std::string print(const Expr& e);

}  // namespace lakekit::lang
