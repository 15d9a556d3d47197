#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ckp/json_util.hpp"

namespace ckp {

enum class ModuleKind { Program, Dataset, Soft, Package, Pipeline, Experiment };

std::string_view to_string(ModuleKind kind);
std::optional<ModuleKind> parse_kind(std::string_view text);
const std::vector<ModuleKind>& all_kinds();

bool is_valid_uid(std::string_view uid);     // exactly 16 lowercase hex chars
bool is_valid_alias(std::string_view alias); // slug chars, not parseable as a uid
bool is_valid_tag(std::string_view tag);

/// Anchored wildcard match: `*` matches any run of characters, everything
/// else is literal, and the pattern must cover the whole text.
bool wildcard_match(std::string_view pattern, std::string_view text);

struct EntryId {
    std::string uid;
    std::string alias; // empty when the entry has no alias
};

struct ComponentEntry {
    std::string repo;
    ModuleKind kind = ModuleKind::Program;
    EntryId id;
    std::set<std::string> tags;
    Json meta;
    std::filesystem::path data_path;

    std::string ref() const { return id.alias.empty() ? id.uid : id.alias; }
};

struct Repository {
    std::string name;
    std::filesystem::path root;
};

struct Query {
    std::optional<ModuleKind> kind;
    std::string pattern = "*"; // matched against alias and uid
    std::set<std::string> tags;
};

struct StoreConfig {
    std::filesystem::path repos_file;
    std::chrono::milliseconds lock_timeout{5000};
};

/// Filesystem-backed repository of typed entries.
///
/// Layout per repository root:
///   <root>/<kind>/<uid>/meta.json    canonical meta document
///   <root>/<kind>/<uid>/entry.json   uid, alias, tags, creation time
///   <root>/<kind>/<uid>/...          payload files
///   <root>/<kind>/alias-index        "alias uid" per line, sorted by alias
///
/// Readers run lock-free; every mutation takes a per-repository advisory
/// lock (<root>/.lock) and fails with StoreBusy after the configured
/// timeout instead of blocking forever.
class Store {
  public:
    /// Honours CKP_REPOS, falling back to ~/.ckp/repos.json.
    static StoreConfig default_config();

    explicit Store(StoreConfig config);

    const std::vector<Repository>& repositories() const { return repos_; }
    const StoreConfig& config() const { return config_; }

    /// First repository in search precedence; the default write target.
    const Repository& primary_repo() const;

    ComponentEntry add_entry(const std::string& repo, ModuleKind kind, const std::string& alias,
                             const std::set<std::string>& tags, const Json& meta);

    std::vector<ComponentEntry> find_entries(const Query& query) const;

    /// Exact lookup by alias or uid across repositories in precedence order.
    ComponentEntry get_entry(ModuleKind kind, const std::string& ref) const;
    std::optional<ComponentEntry> try_get_entry(ModuleKind kind, const std::string& ref) const;

    /// Atomic write-temp-then-rename. Experiment-kind entries are
    /// immutable and rejected with ImmutableRecord.
    ComponentEntry update_meta(const ComponentEntry& entry, const Json& new_meta);

    void remove_entry(const ComponentEntry& entry);

    /// Re-reads an entry from disk.
    ComponentEntry load_entry(const std::string& repo, ModuleKind kind,
                              const std::string& uid) const;

  private:
    const Repository& repo_by_name(const std::string& name) const;
    std::filesystem::path kind_dir(const Repository& repo, ModuleKind kind) const;

    StoreConfig config_;
    std::vector<Repository> repos_;
};

/// Writes a repository registration file ({"repos":[{"name","root"},...]}).
void write_repos_config(const std::filesystem::path& path, const std::vector<Repository>& repos);

} // namespace ckp
