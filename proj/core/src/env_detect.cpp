#include "ckp/env_detect.hpp"

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <map>
#include <regex>
#include <set>

#include <unistd.h>

#include "ckp/error.hpp"
#include "ckp/hash.hpp"
#include "ckp/subprocess.hpp"

namespace fs = std::filesystem;

namespace ckp {

namespace {

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

std::vector<fs::path> split_path_list(const char* value) {
    std::vector<fs::path> dirs;
    if (!value || !*value) {
        return dirs;
    }
    std::string text(value);
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t sep = text.find(':', pos);
        std::string part =
            text.substr(pos, sep == std::string::npos ? std::string::npos : sep - pos);
        if (!part.empty()) {
            dirs.emplace_back(part);
        }
        if (sep == std::string::npos) {
            break;
        }
        pos = sep + 1;
    }
    return dirs;
}

bool is_executable_file(const fs::path& path) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
        return false;
    }
    return ::access(path.c_str(), X_OK) == 0;
}

bool name_matches(const std::vector<std::string>& candidates, const std::string& filename) {
    for (const auto& candidate : candidates) {
        if (candidate.find('*') != std::string::npos) {
            if (wildcard_match(candidate, filename)) {
                return true;
            }
        } else if (candidate == filename) {
            return true;
        }
    }
    return false;
}

std::optional<DetectedEnv> probe_candidate(const SoftDescriptor& soft, const fs::path& file,
                                           const std::regex& pattern, DetectLog* log) {
    std::vector<std::string> argv;
    argv.push_back(file.string());
    argv.insert(argv.end(), soft.version_args.begin(), soft.version_args.end());

    RunOptions opts;
    opts.timeout_s = kProbeTimeoutS;
    RunResult run = run_argv(argv, opts);
    if (!run.ok()) {
        if (log) {
            log->note("skip " + file.string() + ": probe exited " +
                      std::to_string(run.exit_code) + (run.timed_out ? " (timeout)" : ""));
        }
        return std::nullopt;
    }

    // Version output lands on stdout for most tools, stderr for a few.
    std::smatch match;
    std::string raw;
    if (std::regex_search(run.out, match, pattern)) {
        raw = match[1].str();
    } else if (std::regex_search(run.err, match, pattern)) {
        raw = match[1].str();
    } else {
        if (log) {
            log->note("skip " + file.string() + ": output did not match version pattern");
        }
        return std::nullopt;
    }

    DetectedEnv env;
    env.soft_name = soft.soft_name;
    env.version = Version::parse(raw);
    env.install_path = file;
    env.platform = PlatformFingerprint::current();
    env.detected_at = static_cast<std::int64_t>(::time(nullptr));

    std::string install_dir = file.parent_path().string();
    for (const auto& [name, tmpl] : soft.env_template) {
        std::string value = substitute_all(tmpl, "${INSTALL_PATH}", file.string());
        value = substitute_all(value, "${INSTALL_DIR}", install_dir);
        value = substitute_all(value, "${VERSION}", env.version.str());
        if (value.find("${") != std::string::npos) {
            raise(ErrorCode::InvalidDescriptor,
                  "unresolved placeholder in env template for " + name);
        }
        env.env_settings.emplace_back(name, value);
    }
    return env;
}

std::string shell_quote(const std::string& value) {
    std::string out = "\"";
    for (char c : value) {
        if (c == '"' || c == '\\' || c == '$' || c == '`') {
            out.push_back('\\');
        }
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

constexpr std::string_view kDetectedKey = "detected_env";
constexpr std::string_view kDescriptorKey = "soft_descriptor";

std::string sanitize_slug(const std::string& text) {
    std::string out;
    for (char c : text) {
        char lower = (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
        if ((lower >= 'a' && lower <= 'z') || (lower >= '0' && lower <= '9') || lower == '.' ||
            lower == '_' || lower == '-') {
            out.push_back(lower);
        } else {
            out.push_back('-');
        }
    }
    return out;
}

} // namespace

void SoftDescriptor::validate() const {
    if (soft_name.empty()) {
        raise(ErrorCode::InvalidDescriptor, "soft_name must not be empty");
    }
    if (candidate_filenames.empty()) {
        raise(ErrorCode::InvalidDescriptor,
              "descriptor for " + soft_name + " lists no candidate filenames");
    }
    std::regex pattern;
    try {
        pattern = std::regex(version_pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
        raise(ErrorCode::InvalidDescriptor,
              "invalid version pattern for " + soft_name + ": " + e.what());
    }
    if (pattern.mark_count() != 1) {
        raise(ErrorCode::InvalidDescriptor,
              "version pattern for " + soft_name + " must have exactly one capture group, has " +
                  std::to_string(pattern.mark_count()));
    }
}

Json SoftDescriptor::to_meta() const {
    Json doc;
    doc["soft_name"] = soft_name;
    doc["candidates"] = candidate_filenames;
    Json dirs = Json::array();
    for (const auto& dir : extra_search_dirs) {
        dirs.push_back(dir.string());
    }
    doc["extra_search_dirs"] = dirs;
    doc["version_args"] = version_args;
    doc["version_pattern"] = version_pattern;
    doc["env"] = env_pairs_to_json(env_template);
    return Json{{std::string(kDescriptorKey), doc}};
}

SoftDescriptor SoftDescriptor::from_meta(const Json& meta) {
    if (!meta.contains(std::string(kDescriptorKey))) {
        raise(ErrorCode::InvalidDescriptor, "meta carries no soft_descriptor");
    }
    const Json& doc = meta.at(std::string(kDescriptorKey));
    SoftDescriptor soft;
    soft.soft_name = doc.value("soft_name", "");
    for (const auto& c : doc.value("candidates", Json::array())) {
        soft.candidate_filenames.push_back(c.get<std::string>());
    }
    for (const auto& d : doc.value("extra_search_dirs", Json::array())) {
        soft.extra_search_dirs.emplace_back(d.get<std::string>());
    }
    for (const auto& a : doc.value("version_args", Json::array())) {
        soft.version_args.push_back(a.get<std::string>());
    }
    soft.version_pattern = doc.value("version_pattern", "");
    if (doc.contains("env")) {
        soft.env_template = env_pairs_from_json(doc.at("env"));
    }
    soft.validate();
    return soft;
}

Json DetectedEnv::to_meta() const {
    Json doc;
    doc["soft_name"] = soft_name;
    doc["version"] = version.str();
    doc["install_path"] = install_path.string();
    doc["env"] = env_pairs_to_json(env_settings);
    doc["platform"] = platform.to_json();
    doc["detected_at"] = detected_at;
    return Json{{std::string(kDetectedKey), doc}};
}

DetectedEnv DetectedEnv::from_meta(const Json& meta) {
    if (!meta.contains(std::string(kDetectedKey))) {
        raise(ErrorCode::InvalidDescriptor, "meta carries no detected_env");
    }
    const Json& doc = meta.at(std::string(kDetectedKey));
    DetectedEnv env;
    env.soft_name = doc.value("soft_name", "");
    env.version = Version::parse(doc.value("version", ""));
    env.install_path = fs::path(doc.value("install_path", ""));
    if (doc.contains("env")) {
        env.env_settings = env_pairs_from_json(doc.at("env"));
    }
    if (doc.contains("platform")) {
        env.platform = PlatformFingerprint::from_json(doc.at("platform"));
    }
    env.detected_at = doc.value("detected_at", std::int64_t{0});
    return env;
}

void VersionConstraint::validate() const {
    if (exact && (min || max)) {
        raise(ErrorCode::InvalidQuery, "exact is mutually exclusive with min/max");
    }
    if (min && max && *min > *max) {
        raise(ErrorCode::InvalidQuery,
              "constraint min " + min->str() + " exceeds max " + max->str());
    }
}

bool VersionConstraint::satisfied_by(const Version& v) const {
    if (exact) {
        return v == *exact;
    }
    if (min && v < *min) {
        return false;
    }
    if (max && v > *max) {
        return false;
    }
    return true;
}

std::string VersionConstraint::str() const {
    if (exact) {
        return "exact " + exact->str();
    }
    std::string out;
    if (min) {
        out += "min " + min->str();
    }
    if (max) {
        out += (out.empty() ? "" : ", ") + std::string("max ") + max->str();
    }
    return out.empty() ? "any" : out;
}

std::vector<DetectedEnv> detect(const SoftDescriptor& soft, const std::vector<fs::path>& search_roots,
                                DetectLog* log) {
    soft.validate();
    std::regex pattern(soft.version_pattern, std::regex::ECMAScript);

    // CKP_SEARCH_DIRS prepends extra roots; PATH is scanned non-recursively.
    std::vector<fs::path> recursive_roots = split_path_list(std::getenv("CKP_SEARCH_DIRS"));
    recursive_roots.insert(recursive_roots.end(), search_roots.begin(), search_roots.end());
    recursive_roots.insert(recursive_roots.end(), soft.extra_search_dirs.begin(),
                           soft.extra_search_dirs.end());

    std::set<std::string> seen;
    std::vector<fs::path> found;
    auto consider = [&](const fs::path& file) {
        if (!name_matches(soft.candidate_filenames, file.filename().string())) {
            return;
        }
        if (!is_executable_file(file)) {
            if (log && fs::exists(file)) {
                log->note("skip " + file.string() + ": not an executable regular file");
            }
            return;
        }
        std::error_code ec;
        fs::path canonical = fs::weakly_canonical(file, ec);
        std::string key = ec ? file.string() : canonical.string();
        if (seen.insert(key).second) {
            found.push_back(file);
        }
    };

    for (const auto& root : recursive_roots) {
        std::error_code ec;
        if (!fs::is_directory(root, ec)) {
            continue;
        }
        fs::recursive_directory_iterator it(
            root, fs::directory_options::skip_permission_denied, ec);
        if (ec) {
            continue;
        }
        for (const auto& item : it) {
            if (item.is_regular_file(ec)) {
                consider(item.path());
            }
        }
    }
    for (const auto& dir : split_path_list(std::getenv("PATH"))) {
        std::error_code ec;
        if (!fs::is_directory(dir, ec)) {
            continue;
        }
        for (const auto& item : fs::directory_iterator(dir, ec)) {
            if (!ec && item.is_regular_file(ec)) {
                consider(item.path());
            }
        }
    }

    std::vector<DetectedEnv> envs;
    for (const auto& file : found) {
        if (auto env = probe_candidate(soft, file, pattern, log)) {
            envs.push_back(std::move(*env));
        }
    }

    std::sort(envs.begin(), envs.end(), [](const DetectedEnv& a, const DetectedEnv& b) {
        int c = Version::compare(a.version, b.version);
        if (c != 0) {
            return c > 0; // descending version
        }
        return a.install_path.string() < b.install_path.string();
    });
    return envs;
}

DetectedEnv resolve_dependency(const std::string& soft_name, const VersionConstraint& constraint,
                               const std::vector<DetectedEnv>& detected) {
    constraint.validate();

    const DetectedEnv* best = nullptr;
    for (const auto& env : detected) {
        if (env.soft_name != soft_name || !constraint.satisfied_by(env.version)) {
            continue;
        }
        if (!best) {
            best = &env;
            continue;
        }
        int c = Version::compare(env.version, best->version);
        if (c > 0 || (c == 0 && env.install_path.string() < best->install_path.string())) {
            best = &env;
        }
    }
    if (!best) {
        Json candidates = Json::array();
        for (const auto& env : detected) {
            candidates.push_back({{"soft_name", env.soft_name},
                                  {"version", env.version.str()},
                                  {"install_path", env.install_path.string()}});
        }
        raise(ErrorCode::UnresolvedDependency,
              "no detected " + soft_name + " satisfies constraint (" + constraint.str() + ")",
              Json{{"soft_name", soft_name},
                   {"constraint", constraint.str()},
                   {"candidates", candidates}});
    }
    return *best;
}

std::string emit_env_script(const std::vector<DetectedEnv>& envs) {
    // pre: no two envs set the same variable to conflicting values
    std::map<std::string, std::pair<std::string, std::string>> assigned; // var -> (value, soft)
    for (const auto& env : envs) {
        for (const auto& [name, value] : env.env_settings) {
            auto it = assigned.find(name);
            if (it != assigned.end() && it->second.first != value) {
                raise(ErrorCode::EnvConflict,
                      "variable " + name + " set by " + it->second.second + " and " +
                          env.soft_name + " with different values",
                      Json{{"variable", name},
                           {"softs", Json::array({it->second.second, env.soft_name})}});
            }
            assigned.emplace(name, std::make_pair(value, env.soft_name));
        }
    }

    std::string script;
    for (const auto& env : envs) {
        script += "# " + env.soft_name + " " + env.version.str() + "\n";
        for (const auto& [name, value] : env.env_settings) {
            script += "export " + name + "=" + shell_quote(value) + "\n";
        }
    }
    return script;
}

ComponentEntry cache_detection(Store& store, const std::string& repo, const DetectedEnv& env) {
    std::string alias = "env-" + sanitize_slug(env.soft_name) + "-" +
                        sha256_hex(env.install_path.string()).substr(0, 12);
    Json meta = env.to_meta();
    if (auto existing = store.try_get_entry(ModuleKind::Soft, alias)) {
        return store.update_meta(*existing, meta);
    }
    return store.add_entry(repo, ModuleKind::Soft, alias, {"detected"}, meta);
}

std::vector<DetectedEnv> cached_detections(const Store& store, const std::string& soft_name) {
    Query query;
    query.kind = ModuleKind::Soft;
    query.tags = {"detected"};
    std::vector<DetectedEnv> envs;
    for (const auto& entry : store.find_entries(query)) {
        if (!entry.meta.contains("detected_env")) {
            continue;
        }
        DetectedEnv env = DetectedEnv::from_meta(entry.meta);
        if (env.soft_name == soft_name) {
            envs.push_back(std::move(env));
        }
    }
    return envs;
}

std::optional<SoftDescriptor> find_descriptor(const Store& store, const std::string& soft_name) {
    if (auto entry = store.try_get_entry(ModuleKind::Soft, sanitize_slug(soft_name))) {
        if (entry->meta.contains("soft_descriptor")) {
            return SoftDescriptor::from_meta(entry->meta);
        }
    }
    Query query;
    query.kind = ModuleKind::Soft;
    for (const auto& entry : store.find_entries(query)) {
        if (!entry.meta.contains("soft_descriptor")) {
            continue;
        }
        SoftDescriptor soft = SoftDescriptor::from_meta(entry.meta);
        if (soft.soft_name == soft_name) {
            return soft;
        }
    }
    return std::nullopt;
}

DetectedEnv resolve_in_store(Store& store, const std::string& repo, const std::string& soft_name,
                             const VersionConstraint& constraint, DetectLog* log) {
    auto cached = cached_detections(store, soft_name);
    if (cached.empty()) {
        if (auto soft = find_descriptor(store, soft_name)) {
            for (const auto& env : detect(*soft, {}, log)) {
                cache_detection(store, repo, env);
            }
            cached = cached_detections(store, soft_name);
        }
    }
    return resolve_dependency(soft_name, constraint, cached);
}

} // namespace ckp
