#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ckp/json_util.hpp"
#include "ckp/platform.hpp"
#include "ckp/store.hpp"
#include "ckp/version.hpp"

namespace ckp {

/// Declarative probe spec: how to find one piece of software in the native
/// environment and how to extract its version.
struct SoftDescriptor {
    std::string soft_name;
    std::vector<std::string> candidate_filenames; // exact names or anchored * patterns
    std::vector<std::filesystem::path> extra_search_dirs;
    std::vector<std::string> version_args; // arguments passed to the candidate file
    std::string version_pattern;           // ECMAScript regex with exactly one capture group
    // env var templates rendered at detection time; ${INSTALL_PATH},
    // ${INSTALL_DIR} and ${VERSION} are substituted
    std::vector<std::pair<std::string, std::string>> env_template;

    void validate() const;
    Json to_meta() const;
    static SoftDescriptor from_meta(const Json& meta);
};

/// A concrete installation found on this host.
struct DetectedEnv {
    std::string soft_name;
    Version version;
    std::filesystem::path install_path;
    std::vector<std::pair<std::string, std::string>> env_settings;
    PlatformFingerprint platform;
    std::int64_t detected_at = 0;

    Json to_meta() const;
    static DetectedEnv from_meta(const Json& meta);
};

struct VersionConstraint {
    std::optional<Version> min; // inclusive
    std::optional<Version> max; // inclusive
    std::optional<Version> exact;

    void validate() const;
    bool satisfied_by(const Version& v) const;
    std::string str() const;
};

/// A named, version-constrained requirement on some soft.
struct DependencySpec {
    std::string soft_name;
    VersionConstraint constraint;
    std::string role; // key under which the resolved env is exposed
};

/// Collects skipped-probe diagnostics so a messy scan stays debuggable
/// without aborting.
struct DetectLog {
    std::vector<std::string> lines;
    void note(std::string line) { lines.push_back(std::move(line)); }
};

/// Probe timeout; a hung binary must not stall a scan.
inline constexpr double kProbeTimeoutS = 10.0;

/// Search roots are walked recursively; directories named in PATH and
/// CKP_SEARCH_DIRS are consulted as well (PATH non-recursively). Candidates
/// that fail to run or whose output does not match the pattern are skipped
/// and logged. Results sort by descending version, then install path.
std::vector<DetectedEnv> detect(const SoftDescriptor& soft,
                                const std::vector<std::filesystem::path>& search_roots,
                                DetectLog* log = nullptr);

/// Highest version satisfying the constraint; ties broken by
/// lexicographically smallest install path.
DetectedEnv resolve_dependency(const std::string& soft_name, const VersionConstraint& constraint,
                               const std::vector<DetectedEnv>& detected);

/// POSIX `export NAME="value"` lines, one header comment per env naming the
/// soft and version. Byte-deterministic for identical input.
std::string emit_env_script(const std::vector<DetectedEnv>& envs);

// --- store integration -----------------------------------------------------

/// Caches a detection as a soft-kind entry keyed by (soft_name,
/// install_path); re-detection refreshes the same entry.
ComponentEntry cache_detection(Store& store, const std::string& repo, const DetectedEnv& env);

std::vector<DetectedEnv> cached_detections(const Store& store, const std::string& soft_name);

/// Looks up a descriptor entry (soft-kind meta carrying "soft_descriptor")
/// by soft name or entry ref.
std::optional<SoftDescriptor> find_descriptor(const Store& store, const std::string& soft_name);

/// Resolution over the cache, running a detection first when the cache has
/// no envs for this soft.
DetectedEnv resolve_in_store(Store& store, const std::string& repo, const std::string& soft_name,
                             const VersionConstraint& constraint, DetectLog* log = nullptr);

} // namespace ckp
