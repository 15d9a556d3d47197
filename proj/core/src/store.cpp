#include "ckp/store.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <random>
#include <thread>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include "ckp/error.hpp"

namespace fs = std::filesystem;

namespace ckp {

namespace {

constexpr std::string_view kMetaFile = "meta.json";
constexpr std::string_view kEntryFile = "entry.json";
constexpr std::string_view kAliasIndex = "alias-index";
constexpr std::string_view kLockFile = ".lock";

// Advisory per-repository writer lock. flock-based, so it excludes both
// other processes and other threads of this process.
class RepoLock {
  public:
    RepoLock(const fs::path& root, std::chrono::milliseconds timeout) {
        fs::path lock_path = root / kLockFile;
        fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
        if (fd_ < 0) {
            raise(ErrorCode::StoreIoError, "cannot open lock file " + lock_path.string());
        }
        auto deadline = std::chrono::steady_clock::now() + timeout;
        while (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            if (std::chrono::steady_clock::now() >= deadline) {
                ::close(fd_);
                fd_ = -1;
                raise(ErrorCode::StoreBusy,
                      "another writer holds the lock on " + root.string());
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
    }

    ~RepoLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }

    RepoLock(const RepoLock&) = delete;
    RepoLock& operator=(const RepoLock&) = delete;

  private:
    int fd_ = -1;
};

std::string random_uid() {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    static const char* hex = "0123456789abcdef";
    std::uint64_t raw = rng();
    std::string uid(16, '0');
    for (int i = 0; i < 16; ++i) {
        uid[static_cast<size_t>(i)] = hex[(raw >> (i * 4)) & 0xf];
    }
    return uid;
}

std::string lowercase(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool is_slug_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '.' || c == '_';
}

// alias-index: one "alias uid" pair per line, sorted by alias.
std::map<std::string, std::string> read_alias_index(const fs::path& kind_dir) {
    std::map<std::string, std::string> index;
    fs::path path = kind_dir / kAliasIndex;
    std::ifstream in(path);
    if (!in) {
        return index;
    }
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        size_t sep = line.find(' ');
        if (sep == std::string::npos) {
            continue;
        }
        index.emplace(line.substr(0, sep), line.substr(sep + 1));
    }
    return index;
}

void write_alias_index(const fs::path& kind_dir, const std::map<std::string, std::string>& index) {
    std::string content;
    for (const auto& [alias, uid] : index) {
        content += alias;
        content += ' ';
        content += uid;
        content += '\n';
    }
    write_file_atomic(kind_dir / kAliasIndex, content);
}

} // namespace

std::string_view to_string(ModuleKind kind) {
    switch (kind) {
    case ModuleKind::Program: return "program";
    case ModuleKind::Dataset: return "dataset";
    case ModuleKind::Soft: return "soft";
    case ModuleKind::Package: return "package";
    case ModuleKind::Pipeline: return "pipeline";
    case ModuleKind::Experiment: return "experiment";
    }
    return "program";
}

std::optional<ModuleKind> parse_kind(std::string_view text) {
    for (ModuleKind kind : all_kinds()) {
        if (text == to_string(kind)) {
            return kind;
        }
    }
    return std::nullopt;
}

const std::vector<ModuleKind>& all_kinds() {
    static const std::vector<ModuleKind> kinds = {
        ModuleKind::Program, ModuleKind::Dataset,  ModuleKind::Soft,
        ModuleKind::Package, ModuleKind::Pipeline, ModuleKind::Experiment,
    };
    return kinds;
}

bool is_valid_uid(std::string_view uid) {
    if (uid.size() != 16) {
        return false;
    }
    return std::all_of(uid.begin(), uid.end(), [](char c) {
        return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
    });
}

bool is_valid_alias(std::string_view alias) {
    if (alias.empty() || is_valid_uid(alias)) {
        return false;
    }
    return std::all_of(alias.begin(), alias.end(), is_slug_char);
}

bool is_valid_tag(std::string_view tag) {
    if (tag.empty()) {
        return false;
    }
    return std::all_of(tag.begin(), tag.end(), is_slug_char);
}

bool wildcard_match(std::string_view pattern, std::string_view text) {
    // Iterative glob over '*' only; anchored at both ends.
    size_t p = 0;
    size_t t = 0;
    size_t star = std::string_view::npos;
    size_t backtrack = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == text[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            backtrack = t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++backtrack;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') {
        ++p;
    }
    return p == pattern.size();
}

StoreConfig Store::default_config() {
    StoreConfig config;
    if (const char* env = std::getenv("CKP_REPOS"); env && *env) {
        config.repos_file = env;
    } else if (const char* home = std::getenv("HOME"); home && *home) {
        config.repos_file = fs::path(home) / ".ckp" / "repos.json";
    } else {
        config.repos_file = fs::path(".ckp") / "repos.json";
    }
    return config;
}

Store::Store(StoreConfig config) : config_(std::move(config)) {
    if (!fs::exists(config_.repos_file)) {
        raise(ErrorCode::InvalidRepoConfig,
              "repository registration file not found: " + config_.repos_file.string() +
                  " (set CKP_REPOS or create it)");
    }
    Json doc = parse_json(read_file(config_.repos_file), config_.repos_file.string());
    if (!doc.is_object() || !doc.contains("repos") || !doc["repos"].is_array()) {
        raise(ErrorCode::InvalidRepoConfig,
              "expected {\"repos\":[{\"name\",\"root\"},...]} in " + config_.repos_file.string());
    }
    for (const auto& item : doc["repos"]) {
        Repository repo;
        repo.name = item.value("name", "");
        repo.root = fs::path(item.value("root", ""));
        if (repo.name.empty() || repo.root.empty()) {
            raise(ErrorCode::InvalidRepoConfig,
                  "repository entries need non-empty name and root");
        }
        if (repo.root.is_relative()) {
            repo.root = fs::absolute(config_.repos_file.parent_path() / repo.root);
        }
        repo.root = repo.root.lexically_normal();
        for (const auto& existing : repos_) {
            if (existing.name == repo.name) {
                raise(ErrorCode::InvalidRepoConfig, "duplicate repository name " + repo.name);
            }
            if (existing.root == repo.root) {
                raise(ErrorCode::InvalidRepoConfig,
                      "repositories " + existing.name + " and " + repo.name +
                          " share root " + repo.root.string());
            }
        }
        repos_.push_back(std::move(repo));
    }
    if (repos_.empty()) {
        raise(ErrorCode::InvalidRepoConfig, "no repositories registered");
    }
}

const Repository& Store::primary_repo() const {
    return repos_.front();
}

const Repository& Store::repo_by_name(const std::string& name) const {
    for (const auto& repo : repos_) {
        if (repo.name == name) {
            return repo;
        }
    }
    raise(ErrorCode::NotFound, "unknown repository " + name);
}

fs::path Store::kind_dir(const Repository& repo, ModuleKind kind) const {
    return repo.root / std::string(to_string(kind));
}

ComponentEntry Store::add_entry(const std::string& repo_name, ModuleKind kind,
                                const std::string& alias, const std::set<std::string>& tags,
                                const Json& meta) {
    const Repository& repo = repo_by_name(repo_name);
    if (!meta.is_object()) {
        raise(ErrorCode::InvalidMeta, "meta must be a JSON object");
    }
    if (!alias.empty() && !is_valid_alias(alias)) {
        raise(ErrorCode::InvalidAlias,
              "alias '" + alias + "' must be a lowercase slug and must not look like a uid");
    }

    std::set<std::string> stored_tags;
    for (const auto& tag : tags) {
        std::string lowered = lowercase(tag);
        if (!is_valid_tag(lowered)) {
            raise(ErrorCode::InvalidQuery, "invalid tag '" + tag + "'");
        }
        stored_tags.insert(std::move(lowered));
    }

    std::error_code ec;
    fs::create_directories(repo.root, ec);
    if (ec) {
        raise(ErrorCode::StoreIoError, "cannot create " + repo.root.string());
    }

    RepoLock lock(repo.root, config_.lock_timeout);

    fs::path dir = kind_dir(repo, kind);
    fs::create_directories(dir, ec);
    if (ec) {
        raise(ErrorCode::StoreIoError, "cannot create " + dir.string());
    }

    auto index = read_alias_index(dir);
    if (!alias.empty() && index.contains(alias)) {
        raise(ErrorCode::AliasConflict,
              "alias '" + alias + "' already used for kind " + std::string(to_string(kind)) +
                  " in repository " + repo.name);
    }

    std::string uid = random_uid();
    while (fs::exists(dir / uid)) {
        uid = random_uid();
    }

    fs::path entry_dir = dir / uid;
    fs::create_directories(entry_dir, ec);
    if (ec) {
        raise(ErrorCode::StoreIoError, "cannot create " + entry_dir.string());
    }

    ComponentEntry entry;
    entry.repo = repo.name;
    entry.kind = kind;
    entry.id = {uid, alias};
    entry.tags = std::move(stored_tags);
    entry.meta = meta;
    entry.data_path = entry_dir;

    Json info;
    info["uid"] = uid;
    info["alias"] = alias;
    info["tags"] = entry.tags;
    info["created_at"] = static_cast<std::int64_t>(::time(nullptr));

    write_file_atomic(entry_dir / kMetaFile, canonical_dump(meta));
    write_file_atomic(entry_dir / kEntryFile, canonical_dump(info));

    if (!alias.empty()) {
        index[alias] = uid;
        write_alias_index(dir, index);
    }
    return entry;
}

ComponentEntry Store::load_entry(const std::string& repo_name, ModuleKind kind,
                                 const std::string& uid) const {
    const Repository& repo = repo_by_name(repo_name);
    fs::path entry_dir = kind_dir(repo, kind) / uid;
    if (!fs::is_directory(entry_dir)) {
        raise(ErrorCode::NotFound,
              std::string(to_string(kind)) + ":" + uid + " not found in repository " + repo.name);
    }

    ComponentEntry entry;
    entry.repo = repo.name;
    entry.kind = kind;
    entry.data_path = entry_dir;
    entry.meta = parse_json(read_file(entry_dir / kMetaFile), (entry_dir / kMetaFile).string());

    Json info = parse_json(read_file(entry_dir / kEntryFile), (entry_dir / kEntryFile).string());
    entry.id.uid = info.value("uid", uid);
    entry.id.alias = info.value("alias", "");
    if (info.contains("tags")) {
        for (const auto& tag : info["tags"]) {
            entry.tags.insert(tag.get<std::string>());
        }
    }
    return entry;
}

std::vector<ComponentEntry> Store::find_entries(const Query& query) const {
    if (query.pattern.empty()) {
        raise(ErrorCode::InvalidQuery, "empty pattern");
    }
    for (char c : query.pattern) {
        if (c != '*' && !is_slug_char(c)) {
            raise(ErrorCode::InvalidQuery,
                  "pattern contains character '" + std::string(1, c) +
                      "' that can never match an alias or uid");
        }
    }

    std::vector<ModuleKind> kinds;
    if (query.kind) {
        kinds.push_back(*query.kind);
    } else {
        kinds = all_kinds();
    }

    std::vector<ComponentEntry> matches;
    for (const auto& repo : repos_) {
        for (ModuleKind kind : kinds) {
            fs::path dir = kind_dir(repo, kind);
            if (!fs::is_directory(dir)) {
                continue;
            }
            std::vector<std::string> uids;
            for (const auto& item : fs::directory_iterator(dir)) {
                if (item.is_directory() && is_valid_uid(item.path().filename().string())) {
                    uids.push_back(item.path().filename().string());
                }
            }
            std::sort(uids.begin(), uids.end());
            for (const auto& uid : uids) {
                ComponentEntry entry = load_entry(repo.name, kind, uid);
                bool name_ok = wildcard_match(query.pattern, entry.id.uid) ||
                               (!entry.id.alias.empty() &&
                                wildcard_match(query.pattern, entry.id.alias));
                if (!name_ok) {
                    continue;
                }
                bool tags_ok = std::includes(entry.tags.begin(), entry.tags.end(),
                                             query.tags.begin(), query.tags.end());
                if (!tags_ok) {
                    continue;
                }
                matches.push_back(std::move(entry));
            }
        }
    }
    return matches;
}

std::optional<ComponentEntry> Store::try_get_entry(ModuleKind kind, const std::string& ref) const {
    for (const auto& repo : repos_) {
        fs::path dir = kind_dir(repo, kind);
        if (!fs::is_directory(dir)) {
            continue;
        }
        if (is_valid_uid(ref)) {
            if (fs::is_directory(dir / ref)) {
                return load_entry(repo.name, kind, ref);
            }
            continue;
        }
        auto index = read_alias_index(dir);
        if (auto it = index.find(ref); it != index.end() && fs::is_directory(dir / it->second)) {
            return load_entry(repo.name, kind, it->second);
        }
    }
    return std::nullopt;
}

ComponentEntry Store::get_entry(ModuleKind kind, const std::string& ref) const {
    auto entry = try_get_entry(kind, ref);
    if (!entry) {
        raise(ErrorCode::NotFound, std::string(to_string(kind)) + ":" + ref + " not found");
    }
    return *entry;
}

ComponentEntry Store::update_meta(const ComponentEntry& entry, const Json& new_meta) {
    if (entry.kind == ModuleKind::Experiment) {
        raise(ErrorCode::ImmutableRecord,
              "experiment records are immutable; record a new experiment instead");
    }
    if (!new_meta.is_object()) {
        raise(ErrorCode::InvalidMeta, "meta must be a JSON object");
    }
    const Repository& repo = repo_by_name(entry.repo);
    RepoLock lock(repo.root, config_.lock_timeout);

    fs::path entry_dir = kind_dir(repo, entry.kind) / entry.id.uid;
    if (!fs::is_directory(entry_dir)) {
        raise(ErrorCode::NotFound,
              std::string(to_string(entry.kind)) + ":" + entry.id.uid + " no longer exists");
    }
    write_file_atomic(entry_dir / kMetaFile, canonical_dump(new_meta));

    ComponentEntry updated = entry;
    updated.meta = new_meta;
    return updated;
}

void Store::remove_entry(const ComponentEntry& entry) {
    const Repository& repo = repo_by_name(entry.repo);
    RepoLock lock(repo.root, config_.lock_timeout);

    fs::path dir = kind_dir(repo, entry.kind);
    fs::path entry_dir = dir / entry.id.uid;
    if (!fs::is_directory(entry_dir)) {
        raise(ErrorCode::NotFound,
              std::string(to_string(entry.kind)) + ":" + entry.id.uid + " not found");
    }

    std::error_code ec;
    fs::remove_all(entry_dir, ec);
    if (ec) {
        raise(ErrorCode::StoreIoError, "cannot remove " + entry_dir.string());
    }

    if (!entry.id.alias.empty()) {
        auto index = read_alias_index(dir);
        index.erase(entry.id.alias);
        write_alias_index(dir, index);
    }
}

void write_repos_config(const fs::path& path, const std::vector<Repository>& repos) {
    Json doc;
    doc["repos"] = Json::array();
    for (const auto& repo : repos) {
        doc["repos"].push_back({{"name", repo.name}, {"root", repo.root.string()}});
    }
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    write_file_atomic(path, canonical_dump(doc));
}

} // namespace ckp
