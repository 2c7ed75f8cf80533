#pragma once

#include <stdexcept>
#include <string>

namespace lakekit {

enum class Errc {
  AlreadyInitialized,
  RepoLocked,
  CorruptObject,
  IoError,
  UnknownRef,
  BranchExists,
  CannotDeleteMain,
  TagExists,
  CasConflict,
  AbortedBranchImmutable,
  AbortedSourceForbidden,
  SchemaViolation,
  NoSuchTable,
  TableExists,
  MergeConflict,
  SyntaxError,
  UnknownColumn,
  TypeMismatch,
  IllegalNarrowing,
  RuntimeCastNull,
  InputContractViolation,
  Overflow,
  ManifestParseError,
  CycleDetected,
  UnknownSchema,
  UnknownRun,
  GuardrailDisabled,
  UpstreamManifestChanged,
  BoundsTooLarge,
  UnknownInvariant,
  Divergence,
  CsvParseError,
  NullInNonNullable,
};

const char* errc_name(Errc c);

/// Domain error carrying a stable code; the CLI maps codes to exit status
/// and stderr text.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code),
        message_(message) {}

  Errc code() const { return code_; }
  const std::string& message() const { return message_; }

 private:
  Errc code_;
  std::string message_;
};

}  // namespace lakekit
