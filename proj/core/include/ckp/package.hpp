#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ckp/env_detect.hpp"
#include "ckp/json_util.hpp"
#include "ckp/store.hpp"
#include "ckp/version.hpp"

namespace ckp {

struct PackageSource {
    std::string url;             // http(s):// or file:// source
    std::filesystem::path path;  // local source, relative paths resolve against base_dir
    std::string sha256;          // mandatory, 64 lowercase hex chars

    bool is_remote() const { return !url.empty() && url.rfind("file://", 0) != 0; }
};

/// Declarative install recipe: fetch-verify-unpack, run the build steps,
/// register the result as a DetectedEnv. Steps and env values may use
/// ${PREFIX}, ${UNPACK_DIR} and ${ARTIFACT}.
struct PackageRecipe {
    std::string soft_name;
    Version provided_version;
    PackageSource source;
    std::vector<DependencySpec> deps; // softs needed by the build steps
    std::vector<std::string> steps;   // empty for pure download/unpack packages
    std::vector<std::pair<std::string, std::string>> registration_env;

    void validate() const;
    Json to_meta() const;
    static PackageRecipe from_meta(const Json& meta);
};

/// Downloads (or copies) the source into dest_dir and verifies its digest.
/// Atomic: the artifact appears under its final name only after the digest
/// checks out. A pre-existing verified artifact is returned as-is.
std::filesystem::path fetch(const PackageRecipe& recipe, const std::filesystem::path& dest_dir,
                            const std::filesystem::path& base_dir = {});

struct InstallContext {
    Store* store = nullptr;  // registration target; may be null for dry installs
    std::string repo;
    std::vector<DetectedEnv> dep_envs; // env script of these is sourced before each step
    std::filesystem::path base_dir;    // resolves relative local sources
};

/// Runs the recipe inside `prefix`. Holds a lock file in the prefix for the
/// duration; a failed install leaves a `.failed` marker so the next attempt
/// starts from a clean prefix. Step output is captured to install.log.
DetectedEnv install(const PackageRecipe& recipe, const std::filesystem::path& prefix,
                    const InstallContext& ctx);

} // namespace ckp
