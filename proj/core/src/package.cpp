#include "ckp/package.hpp"

#include <cctype>
#include <ctime>
#include <fstream>
#include <random>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "ckp/error.hpp"
#include "ckp/hash.hpp"
#include "ckp/subprocess.hpp"

namespace fs = std::filesystem;

namespace ckp {

namespace {

constexpr std::string_view kRecipeKey = "package";
constexpr std::string_view kFailedMarker = ".failed";
constexpr std::string_view kInstalledMarker = ".installed";
constexpr std::string_view kInstallLog = "install.log";
constexpr std::string_view kLockFile = ".lock";

std::vector<std::pair<std::string, std::string>> env_pairs_from_json(const Json& doc) {
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& item : doc) {
        pairs.emplace_back(item.at(0).get<std::string>(), item.at(1).get<std::string>());
    }
    return pairs;
}

Json env_pairs_to_json(const std::vector<std::pair<std::string, std::string>>& pairs) {
    Json doc = Json::array();
    for (const auto& [name, value] : pairs) {
        doc.push_back(Json::array({name, value}));
    }
    return doc;
}

std::string substitute_all(std::string text, const std::string& needle, const std::string& value) {
    size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        text.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return text;
}

bool ends_with(const std::string& text, std::string_view suffix) {
    return text.size() >= suffix.size() &&
           text.compare(text.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string source_basename(const PackageRecipe& recipe) {
    if (!recipe.source.url.empty()) {
        std::string url = recipe.source.url;
        size_t query = url.find_first_of("?#");
        if (query != std::string::npos) {
            url.resize(query);
        }
        size_t slash = url.find_last_of('/');
        std::string name = slash == std::string::npos ? url : url.substr(slash + 1);
        return name.empty() ? "artifact" : name;
    }
    return recipe.source.path.filename().string();
}

void copy_verified(const fs::path& from, const fs::path& to, const std::string& want_sha) {
    static std::mt19937_64 rng{std::random_device{}()};
    fs::path tmp = to;
    tmp += ".part" + std::to_string(rng());

    std::error_code ec;
    fs::copy_file(from, tmp, fs::copy_options::overwrite_existing, ec);
    if (ec) {
        raise(ErrorCode::FetchError, "cannot copy " + from.string() + ": " + ec.message());
    }
    std::string got = sha256_file(tmp);
    if (got != want_sha) {
        fs::remove(tmp, ec);
        raise(ErrorCode::ChecksumMismatch,
              "digest mismatch for " + from.string() + ": expected " + want_sha + ", got " + got,
              Json{{"expected", want_sha}, {"actual", got}});
    }
    fs::rename(tmp, to, ec);
    if (ec) {
        fs::remove(tmp, ec);
        raise(ErrorCode::FetchError, "rename failed for " + to.string());
    }
}

void download_verified(const std::string& url, const fs::path& to, const std::string& want_sha) {
    static std::mt19937_64 rng{std::random_device{}()};
    fs::path tmp = to;
    tmp += ".part" + std::to_string(rng());

    // curl is ubiquitous on the Unix hosts this targets and handles
    // redirects and TLS; a bespoke HTTP client would not earn its keep.
    RunResult run = run_argv({"curl", "-fsSL", "-o", tmp.string(), url});
    if (!run.ok()) {
        std::error_code ec;
        fs::remove(tmp, ec);
        raise(ErrorCode::FetchError, "download failed for " + url + ": " + run.err);
    }
    std::string got = sha256_file(tmp);
    if (got != want_sha) {
        std::error_code ec;
        fs::remove(tmp, ec);
        raise(ErrorCode::ChecksumMismatch,
              "digest mismatch for " + url + ": expected " + want_sha + ", got " + got,
              Json{{"expected", want_sha}, {"actual", got}});
    }
    std::error_code ec;
    fs::rename(tmp, to, ec);
    if (ec) {
        fs::remove(tmp, ec);
        raise(ErrorCode::FetchError, "rename failed for " + to.string());
    }
}

void unpack_artifact(const fs::path& artifact, const fs::path& unpack_dir) {
    std::error_code ec;
    fs::create_directories(unpack_dir, ec);
    std::string name = artifact.filename().string();

    if (ends_with(name, ".tar.gz") || ends_with(name, ".tgz")) {
        RunResult run =
            run_argv({"tar", "-xzf", artifact.string(), "-C", unpack_dir.string()});
        if (!run.ok()) {
            raise(ErrorCode::UnpackError, "tar failed for " + name + ": " + run.err);
        }
        return;
    }
    if (ends_with(name, ".zip")) {
        // unzip is not guaranteed on minimal hosts; python3's zipfile is the fallback.
        RunResult run = run_argv({"unzip", "-q", "-o", artifact.string(), "-d", unpack_dir.string()});
        if (run.exit_code == 127) {
            run = run_argv({"python3", "-m", "zipfile", "-e", artifact.string(),
                            unpack_dir.string() + "/"});
        }
        if (!run.ok()) {
            raise(ErrorCode::UnpackError, "unzip failed for " + name + ": " + run.err);
        }
        return;
    }
    // opaque single file: expose a copy in the unpack dir
    fs::copy_file(artifact, unpack_dir / name, fs::copy_options::overwrite_existing, ec);
    if (ec) {
        raise(ErrorCode::UnpackError, "cannot stage " + name + ": " + ec.message());
    }
}

class PrefixLock {
  public:
    explicit PrefixLock(const fs::path& prefix) {
        fs::path lock_path = prefix / kLockFile;
        fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
        if (fd_ < 0) {
            raise(ErrorCode::StoreIoError, "cannot open " + lock_path.string());
        }
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            fd_ = -1;
            raise(ErrorCode::StoreBusy, "another install is running in " + prefix.string());
        }
    }
    ~PrefixLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    PrefixLock(const PrefixLock&) = delete;
    PrefixLock& operator=(const PrefixLock&) = delete;

  private:
    int fd_ = -1;
};

void wipe_prefix(const fs::path& prefix) {
    for (const auto& item : fs::directory_iterator(prefix)) {
        if (item.path().filename() == kLockFile) {
            continue;
        }
        std::error_code ec;
        fs::remove_all(item.path(), ec);
    }
}

std::string recipe_fingerprint(const PackageRecipe& recipe) {
    return sha256_hex(canonical_dump(recipe.to_meta()));
}

} // namespace

void PackageRecipe::validate() const {
    if (soft_name.empty()) {
        raise(ErrorCode::InvalidRecipe, "recipe must name the soft it provides");
    }
    if (provided_version.empty()) {
        raise(ErrorCode::InvalidRecipe, "recipe must declare a provided version");
    }
    if (source.url.empty() && source.path.empty()) {
        raise(ErrorCode::InvalidRecipe, "recipe needs a url or a local path source");
    }
    if (!is_sha256_hex(source.sha256)) {
        raise(ErrorCode::InvalidRecipe,
              "sha256 must be 64 lowercase hex characters, got '" + source.sha256 + "'");
    }
}

Json PackageRecipe::to_meta() const {
    Json source_doc;
    if (!source.url.empty()) {
        source_doc["url"] = source.url;
    }
    if (!source.path.empty()) {
        source_doc["path"] = source.path.string();
    }
    source_doc["sha256"] = source.sha256;

    Json doc;
    doc["soft_name"] = soft_name;
    doc["version"] = provided_version.str();
    doc["source"] = source_doc;
    if (!deps.empty()) {
        Json deps_doc = Json::array();
        for (const auto& dep : deps) {
            Json d;
            d["soft"] = dep.soft_name;
            d["role"] = dep.role;
            if (dep.constraint.min) {
                d["min"] = dep.constraint.min->str();
            }
            if (dep.constraint.max) {
                d["max"] = dep.constraint.max->str();
            }
            if (dep.constraint.exact) {
                d["exact"] = dep.constraint.exact->str();
            }
            deps_doc.push_back(d);
        }
        doc["deps"] = deps_doc;
    }
    doc["steps"] = steps;
    doc["env"] = env_pairs_to_json(registration_env);
    return Json{{std::string(kRecipeKey), doc}};
}

PackageRecipe PackageRecipe::from_meta(const Json& meta) {
    if (!meta.contains(std::string(kRecipeKey))) {
        raise(ErrorCode::InvalidRecipe, "meta carries no package recipe");
    }
    const Json& doc = meta.at(std::string(kRecipeKey));
    PackageRecipe recipe;
    recipe.soft_name = doc.value("soft_name", "");
    recipe.provided_version = Version::parse(doc.value("version", ""));
    if (doc.contains("source")) {
        recipe.source.url = doc["source"].value("url", "");
        recipe.source.path = fs::path(doc["source"].value("path", ""));
        recipe.source.sha256 = doc["source"].value("sha256", "");
    }
    for (const auto& d : doc.value("deps", Json::array())) {
        DependencySpec dep;
        dep.soft_name = d.value("soft", "");
        dep.role = d.value("role", dep.soft_name);
        if (d.contains("min")) {
            dep.constraint.min = Version::parse(d["min"].get<std::string>());
        }
        if (d.contains("max")) {
            dep.constraint.max = Version::parse(d["max"].get<std::string>());
        }
        if (d.contains("exact")) {
            dep.constraint.exact = Version::parse(d["exact"].get<std::string>());
        }
        recipe.deps.push_back(std::move(dep));
    }
    for (const auto& step : doc.value("steps", Json::array())) {
        recipe.steps.push_back(step.get<std::string>());
    }
    if (doc.contains("env")) {
        recipe.registration_env = env_pairs_from_json(doc.at("env"));
    }
    recipe.validate();
    return recipe;
}

fs::path fetch(const PackageRecipe& recipe, const fs::path& dest_dir, const fs::path& base_dir) {
    recipe.validate();
    std::error_code ec;
    fs::create_directories(dest_dir, ec);
    if (ec) {
        raise(ErrorCode::FetchError, "cannot create " + dest_dir.string());
    }

    fs::path target = dest_dir / source_basename(recipe);
    if (fs::is_regular_file(target) && sha256_file(target) == recipe.source.sha256) {
        return target; // already fetched and verified
    }

    if (recipe.source.is_remote()) {
        download_verified(recipe.source.url, target, recipe.source.sha256);
        return target;
    }

    fs::path from;
    if (!recipe.source.url.empty()) {
        from = fs::path(recipe.source.url.substr(7)); // strip file://
    } else {
        from = recipe.source.path;
        if (from.is_relative() && !base_dir.empty()) {
            from = base_dir / from;
        }
    }
    if (!fs::is_regular_file(from)) {
        raise(ErrorCode::FetchError, "source file not found: " + from.string());
    }
    copy_verified(from, target, recipe.source.sha256);
    return target;
}

DetectedEnv install(const PackageRecipe& recipe, const fs::path& prefix, const InstallContext& ctx) {
    recipe.validate();
    std::error_code ec;
    fs::create_directories(prefix, ec);
    if (ec) {
        raise(ErrorCode::StoreIoError, "cannot create prefix " + prefix.string());
    }

    PrefixLock lock(prefix);

    const std::string fingerprint = recipe_fingerprint(recipe);
    const fs::path installed_marker = prefix / kInstalledMarker;
    const fs::path failed_marker = prefix / kFailedMarker;

    auto render = [&](const std::string& tmpl, const fs::path& unpack_dir,
                      const fs::path& artifact) {
        std::string out = substitute_all(tmpl, "${PREFIX}", prefix.string());
        out = substitute_all(out, "${UNPACK_DIR}", unpack_dir.string());
        out = substitute_all(out, "${ARTIFACT}", artifact.string());
        return out;
    };

    auto register_env = [&](const fs::path& unpack_dir, const fs::path& artifact) {
        DetectedEnv env;
        env.soft_name = recipe.soft_name;
        env.version = recipe.provided_version;
        env.install_path = prefix;
        env.platform = PlatformFingerprint::current();
        env.detected_at = static_cast<std::int64_t>(::time(nullptr));
        for (const auto& [name, tmpl] : recipe.registration_env) {
            std::string value = render(tmpl, unpack_dir, artifact);
            if (value.find("${") != std::string::npos) {
                raise(ErrorCode::InvalidRecipe, "unresolved placeholder in env value for " + name);
            }
            env.env_settings.emplace_back(name, value);
        }
        if (ctx.store) {
            cache_detection(*ctx.store, ctx.repo.empty() ? ctx.store->primary_repo().name : ctx.repo,
                            env);
        }
        return env;
    };

    // a previous run of the same recipe in this prefix is reused as-is
    if (fs::exists(installed_marker)) {
        std::ifstream marker(installed_marker);
        std::string stored;
        std::getline(marker, stored);
        if (stored == fingerprint) {
            return register_env(prefix / "unpack", prefix / "dl" / source_basename(recipe));
        }
        wipe_prefix(prefix);
    } else if (fs::exists(failed_marker)) {
        wipe_prefix(prefix);
    }

    fs::path artifact = fetch(recipe, prefix / "dl", ctx.base_dir);
    fs::path unpack_dir = prefix / "unpack";
    unpack_artifact(artifact, unpack_dir);

    // steps see the env of already-resolved dependencies, so a recipe can
    // rely on a detected compiler
    std::vector<DetectedEnv> dep_envs = ctx.dep_envs;
    if (dep_envs.empty() && ctx.store) {
        for (const auto& dep : recipe.deps) {
            dep_envs.push_back(resolve_in_store(
                *ctx.store, ctx.repo.empty() ? ctx.store->primary_repo().name : ctx.repo,
                dep.soft_name, dep.constraint));
        }
    }

    std::ofstream log(prefix / kInstallLog, std::ios::trunc);
    std::string env_script = emit_env_script(dep_envs);

    for (size_t i = 0; i < recipe.steps.size(); ++i) {
        std::string command = render(recipe.steps[i], unpack_dir, artifact);
        if (command.find("${") != std::string::npos) {
            write_file_atomic(failed_marker, fingerprint);
            raise(ErrorCode::InvalidRecipe,
                  "unresolved placeholder in step " + std::to_string(i + 1) + ": " + command);
        }

        RunOptions opts;
        opts.cwd = unpack_dir;
        RunResult run = run_shell(env_script + command, opts);

        log << "### step " << (i + 1) << "/" << recipe.steps.size() << ": " << command << "\n"
            << run.out << run.err << "### exit " << run.exit_code << "\n";
        log.flush();

        if (!run.ok()) {
            write_file_atomic(failed_marker, fingerprint);
            raise(ErrorCode::InstallStepFailed,
                  "step " + std::to_string(i + 1) + " of " + std::to_string(recipe.steps.size()) +
                      " failed with exit " + std::to_string(run.exit_code),
                  Json{{"step", i + 1},
                       {"command", command},
                       {"exit_code", run.exit_code},
                       {"output", run.out + run.err}});
        }
    }

    write_file_atomic(installed_marker, fingerprint);
    return register_env(unpack_dir, artifact);
}

} // namespace ckp
