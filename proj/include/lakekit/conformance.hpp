#pragma once

#include <set>
#include <string>
#include <vector>

#include "lakekit/schema.hpp"

namespace lakekit {

struct Violation {
  std::string code;    // "TypeMismatch", "UnexpectedNull", "MissingColumn", "ExtraColumn"
  std::string column;
  long row = -1;       // -1 when not row-specific
  std::string message;

  bool operator==(const Violation&) const = default;
};

struct ConformanceReport {
  std::vector<Violation> violations;
  bool conformant() const { return violations.empty(); }
  std::string summary() const;
};

/// Runtime data conformance: column set, per-value type tags, nulls in
/// non-nullable columns. Never throws; all findings land in the report.
/// Columns listed in skip_nonnull may skip their null scan (validation-skip
/// planning decides which are provably safe).
ConformanceReport validate_data(const Table& data, const SchemaContract& contract,
                                const std::set<std::string>& skip_nonnull = {});

}  // namespace lakekit
