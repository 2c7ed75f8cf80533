#pragma once

#include <map>
#include <string>

#include "lakekit/ast.hpp"
#include "lakekit/infer.hpp"
#include "lakekit/schema.hpp"

namespace lakekit::lang {

/// Executes a transform over materialized inputs. Deterministic: joins keep
/// left-input order, group-by output is sorted ascending by key. Throws
/// RuntimeCastNull / Overflow / TypeMismatch for runtime failures.
Table evaluate(const Transform& t, const std::map<std::string, Table>& inputs);

}  // namespace lakekit::lang
