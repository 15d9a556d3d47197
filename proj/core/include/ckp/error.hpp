#pragma once

#include <exception>
#include <string>
#include <string_view>

#include <json.hpp>

namespace ckp {

enum class ErrorCode {
    UsageError,
    NotFound,
    AliasConflict,
    InvalidKind,
    InvalidAlias,
    InvalidMeta,
    InvalidQuery,
    StoreIoError,
    StoreBusy,
    ImmutableRecord,
    InvalidRepoConfig,
    InvalidVersion,
    InvalidDescriptor,
    UnresolvedDependency,
    EnvConflict,
    InvalidRecipe,
    FetchError,
    ChecksumMismatch,
    UnpackError,
    InstallStepFailed,
    InvalidDefinition,
    CompileFailed,
    ArtifactMissing,
    RunFailed,
    MetricsParseError,
    NonDeterministicFunctionalOutput,
    InvalidSpace,
    IncomparablePoint,
    MissingComponent,
    IncomparableExperiments,
    InvalidManifest,
    InvalidColumn,
    InvalidAxis,
    InternalError,
};

std::string_view to_string(ErrorCode code);

/// The single error type thrown by every ckp operation. Carries a stable
/// code (surfaced verbatim by the CLI in JSON mode) plus an optional
/// structured detail payload for errors that need to report context, such
/// as the candidate list of a failed dependency resolution.
class Error : public std::exception {
  public:
    Error(ErrorCode code, std::string message, nlohmann::json detail = nullptr);

    ErrorCode code() const noexcept { return code_; }
    const std::string& message() const noexcept { return message_; }
    const nlohmann::json& detail() const noexcept { return detail_; }

    const char* what() const noexcept override { return what_.c_str(); }

  private:
    ErrorCode code_;
    std::string message_;
    nlohmann::json detail_;
    std::string what_;
};

[[noreturn]] void raise(ErrorCode code, std::string message, nlohmann::json detail = nullptr);

} // namespace ckp
