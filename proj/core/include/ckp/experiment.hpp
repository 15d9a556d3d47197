#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ckp/json_util.hpp"
#include "ckp/pipeline.hpp"
#include "ckp/platform.hpp"
#include "ckp/store.hpp"

namespace ckp {

struct DepRecord {
    std::string soft_name;
    std::string version;
    std::string install_path;

    bool operator==(const DepRecord&) const = default;
};

/// Full provenance of one experiment. Immutable once persisted; the
/// canonical bytes (minus the hash field itself) are covered by
/// content_hash so tampering is detectable.
struct ExperimentRecord {
    std::string uid; // store uid once persisted
    std::string pipeline_uid;
    std::string pipeline_ref;
    std::map<std::string, DepRecord> resolved_deps; // by role
    std::map<std::string, std::string> effective_choices;
    PlatformFingerprint platform;
    std::vector<MetricMap> per_repetition;
    std::map<std::string, AggregateStats> aggregated;
    MetricMap functional;
    std::string status; // "success" | "failed"
    Json error;         // {code,message} for failed records
    std::int64_t started_at = 0;
    std::int64_t finished_at = 0;
    std::string exploration_id; // empty unless part of an exploration
    std::optional<std::int64_t> seed;
    std::string replay_of; // empty unless this record is a replay

    Json to_meta() const; // {"record": {...}, "content_hash": "..."}
    static ExperimentRecord from_entry(const ComponentEntry& entry);
};

struct RecordContext {
    std::string exploration_id;
    std::optional<std::int64_t> seed;
    std::string replay_of;
    std::set<std::string> extra_tags;
    std::int64_t started_at = 0;
    std::int64_t finished_at = 0;
};

/// Persists an execution outcome (success or failure) as an
/// experiment-kind entry in the pipeline entry's repository.
ComponentEntry record(Store& store, const ComponentEntry& pipeline_entry,
                      const PipelineDefinition& def, const ExecutionOutcome& outcome,
                      const RecordContext& ctx = {});

/// Recomputes the content hash of a persisted record against its stored
/// value. Returns {expected, actual}; they differ iff the bytes were
/// tampered with.
std::pair<std::string, std::string> integrity_check(const ComponentEntry& entry);

struct ReplayResult {
    ComponentEntry entry;          // the newly persisted replay record
    ExperimentRecord record;
    Json diff;                     // dependency/platform changes vs the reference
};

/// Re-executes a recorded experiment from its stored provenance. Detection
/// caches for the involved softs are refreshed first, so the diff reflects
/// the environment as it is now.
ReplayResult replay(Store& store, const std::string& experiment_ref,
                    const std::filesystem::path& scratch_root = {});

enum class ToleranceKind { Relative, Absolute, Exact };

struct ToleranceRule {
    ToleranceKind kind = ToleranceKind::Relative;
    double value = 0.10;
    Statistic stat = Statistic::Mean;

    std::string str() const;
    static ToleranceRule parse(const std::string& text); // "rel:0.05[:min]" | "abs:2" | "exact"
};

struct ToleranceSpec {
    std::map<std::string, ToleranceRule> per_metric;
    // unlisted performance metrics: relative 0.10 on mean
    ToleranceRule default_rule{ToleranceKind::Relative, 0.10, Statistic::Mean};

    const ToleranceRule& rule_for(const std::string& metric) const;
};

inline constexpr std::string_view kBadgeReplicated = "results-replicated";
inline constexpr std::string_view kBadgeFunctional = "artifacts-functional";
inline constexpr std::string_view kBadgeDivergent = "results-divergent";

struct MetricRow {
    std::string metric;
    Json reference;   // value compared (stat for performance, raw for functional)
    Json replay;
    std::string rule; // human-readable rule applied
    bool pass = false;
    Json rel_diff;    // signed (replay-ref)/|ref|; null when undefined
};

struct ValidationReport {
    std::string reference_uid;
    std::string replay_uid;
    std::vector<MetricRow> rows;
    Json env_diff;
    std::string badge;

    Json to_json() const;
    static ValidationReport from_json(const Json& doc);
};

/// Metric-by-metric comparison of a replay against its reference.
/// Functional keys compare bit-exact; performance keys compare on the
/// statistic named by the applicable tolerance rule. The report is
/// persisted as an experiment-kind entry tagged `validation`.
struct CompareResult {
    ComponentEntry entry;
    ValidationReport report;
};
CompareResult compare(Store& store, const std::string& reference_ref,
                      const std::string& replay_ref, const ToleranceSpec& tolerances = {});

/// Offline archival checks for an artifact manifest: every referenced
/// component exists, the manifest's content hash matches, and the archive
/// identifier is present and syntactically valid (DOI-like or URL).
Json check_archival(const Store& store, const Json& manifest);

/// Computes the env/platform diff between two records (shared by replay
/// and compare).
Json diff_records(const ExperimentRecord& reference, const ExperimentRecord& replay_rec);

} // namespace ckp
