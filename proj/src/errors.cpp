#include "lakekit/errors.hpp"

namespace lakekit {

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::AlreadyInitialized: return "AlreadyInitialized";
    case Errc::RepoLocked: return "RepoLocked";
    case Errc::CorruptObject: return "CorruptObject";
    case Errc::IoError: return "IoError";
    case Errc::UnknownRef: return "UnknownRef";
    case Errc::BranchExists: return "BranchExists";
    case Errc::CannotDeleteMain: return "CannotDeleteMain";
    case Errc::TagExists: return "TagExists";
    case Errc::CasConflict: return "CasConflict";
    case Errc::AbortedBranchImmutable: return "AbortedBranchImmutable";
    case Errc::AbortedSourceForbidden: return "AbortedSourceForbidden";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::NoSuchTable: return "NoSuchTable";
    case Errc::TableExists: return "TableExists";
    case Errc::MergeConflict: return "MergeConflict";
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::UnknownColumn: return "UnknownColumn";
    case Errc::TypeMismatch: return "TypeMismatch";
    case Errc::IllegalNarrowing: return "IllegalNarrowing";
    case Errc::RuntimeCastNull: return "RuntimeCastNull";
    case Errc::InputContractViolation: return "InputContractViolation";
    case Errc::Overflow: return "Overflow";
    case Errc::ManifestParseError: return "ManifestParseError";
    case Errc::CycleDetected: return "CycleDetected";
    case Errc::UnknownSchema: return "UnknownSchema";
    case Errc::UnknownRun: return "UnknownRun";
    case Errc::GuardrailDisabled: return "GuardrailDisabled";
    case Errc::UpstreamManifestChanged: return "UpstreamManifestChanged";
    case Errc::BoundsTooLarge: return "BoundsTooLarge";
    case Errc::UnknownInvariant: return "UnknownInvariant";
    case Errc::Divergence: return "Divergence";
    case Errc::CsvParseError: return "CsvParseError";
    case Errc::NullInNonNullable: return "NullInNonNullable";
  }
  return "Error";
}

}  // namespace lakekit
