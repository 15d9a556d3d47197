#include "ckp/error.hpp"

namespace ckp {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::UsageError: return "UsageError";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::AliasConflict: return "AliasConflict";
    case ErrorCode::InvalidKind: return "InvalidKind";
    case ErrorCode::InvalidAlias: return "InvalidAlias";
    case ErrorCode::InvalidMeta: return "InvalidMeta";
    case ErrorCode::InvalidQuery: return "InvalidQuery";
    case ErrorCode::StoreIoError: return "StoreIoError";
    case ErrorCode::StoreBusy: return "StoreBusy";
    case ErrorCode::ImmutableRecord: return "ImmutableRecord";
    case ErrorCode::InvalidRepoConfig: return "InvalidRepoConfig";
    case ErrorCode::InvalidVersion: return "InvalidVersion";
    case ErrorCode::InvalidDescriptor: return "InvalidDescriptor";
    case ErrorCode::UnresolvedDependency: return "UnresolvedDependency";
    case ErrorCode::EnvConflict: return "EnvConflict";
    case ErrorCode::InvalidRecipe: return "InvalidRecipe";
    case ErrorCode::FetchError: return "FetchError";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::UnpackError: return "UnpackError";
    case ErrorCode::InstallStepFailed: return "InstallStepFailed";
    case ErrorCode::InvalidDefinition: return "InvalidDefinition";
    case ErrorCode::CompileFailed: return "CompileFailed";
    case ErrorCode::ArtifactMissing: return "ArtifactMissing";
    case ErrorCode::RunFailed: return "RunFailed";
    case ErrorCode::MetricsParseError: return "MetricsParseError";
    case ErrorCode::NonDeterministicFunctionalOutput: return "NonDeterministicFunctionalOutput";
    case ErrorCode::InvalidSpace: return "InvalidSpace";
    case ErrorCode::IncomparablePoint: return "IncomparablePoint";
    case ErrorCode::MissingComponent: return "MissingComponent";
    case ErrorCode::IncomparableExperiments: return "IncomparableExperiments";
    case ErrorCode::InvalidManifest: return "InvalidManifest";
    case ErrorCode::InvalidColumn: return "InvalidColumn";
    case ErrorCode::InvalidAxis: return "InvalidAxis";
    case ErrorCode::InternalError: return "InternalError";
    }
    return "InternalError";
}

Error::Error(ErrorCode code, std::string message, nlohmann::json detail)
    : code_(code), message_(std::move(message)), detail_(std::move(detail)) {
    what_ = std::string(to_string(code_)) + ": " + message_;
}

void raise(ErrorCode code, std::string message, nlohmann::json detail) {
    throw Error(code, std::move(message), std::move(detail));
}

} // namespace ckp
