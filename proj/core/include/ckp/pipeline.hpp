#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ckp/env_detect.hpp"
#include "ckp/error.hpp"
#include "ckp/json_util.hpp"
#include "ckp/store.hpp"

namespace ckp {

/// Flat metric value: JSON numbers become doubles, strings stay strings.
using MetricValue = std::variant<double, std::string>;
using MetricMap = std::map<std::string, MetricValue>;

Json metric_value_to_json(const MetricValue& value);
Json metric_map_to_json(const MetricMap& metrics);
MetricMap metric_map_from_json(const Json& doc);

struct CompileSpec {
    std::string command;       // template, runs in the execution scratch dir
    std::string artifact_name; // expected under the scratch dir afterwards
};

enum class MetricsSource { StdoutLastLine, MetricsFile };

struct RunSpec {
    std::string command;
    int repetitions = 3;
    MetricsSource source = MetricsSource::StdoutLastLine;
    std::string metrics_file; // meaningful when source == MetricsFile
    std::vector<std::string> functional_keys;  // bit-equal across repetitions
    std::vector<std::string> performance_keys; // aggregated statistically
};

/// Declarative compile-run-measure pipeline.
///
/// Command templates may reference:
///   ${dep:<role>}      install path of the resolved dependency
///   ${choice:<key>}    effective choice value
///   ${scratch}         per-execution scratch directory
///   ${data}            the program entry's data directory (read-only input)
///   ${artifact:<name>} path of a compiled artifact (run stage only)
struct PipelineDefinition {
    std::string program_ref;
    std::vector<DependencySpec> dependencies;
    std::optional<CompileSpec> compile_spec;
    RunSpec run_spec;
    std::map<std::string, std::string> choices; // defaults, overridable per execution

    void validate() const;
    Json to_meta() const; // nests under "pipeline"
    static PipelineDefinition from_meta(const Json& meta);

    /// Declared performance keys plus the automatic wall_time_s metric.
    std::vector<std::string> effective_performance_keys() const;
};

struct AggregateStats {
    double min = 0;
    double max = 0;
    double mean = 0;
    double median = 0; // lower-middle element for even counts
    double std = 0;    // population standard deviation
    int count = 0;

    Json to_json() const;
    static AggregateStats from_json(const Json& doc);
};

enum class Statistic { Min, Max, Mean, Median, Std, Count };

std::optional<Statistic> parse_statistic(std::string_view text);
std::string_view to_string(Statistic stat);
double stat_of(const AggregateStats& stats, Statistic stat);

/// Reference aggregation used by run results: min/max/mean/median/std/count
/// with the conventions documented on AggregateStats.
AggregateStats aggregate_values(std::vector<double> values);

struct PipelineState {
    std::map<std::string, DetectedEnv> resolved_deps; // role -> env
    std::map<std::string, std::string> effective_choices;
    std::map<std::string, std::filesystem::path> artifacts;
    std::vector<MetricMap> per_repetition;
    std::map<std::string, AggregateStats> aggregated;
    MetricMap functional; // constant-by-contract values, one per functional key
    std::string compile_command; // provenance
    std::filesystem::path scratch_dir;
    std::filesystem::path program_data_dir;
};

struct ExecuteContext {
    Store* store = nullptr;
    std::string repo;
    std::filesystem::path scratch_root; // empty -> honour CKP_SCRATCH / tmp
    DetectLog* log = nullptr;
};

struct ExecutionOutcome {
    PipelineState state;
    std::optional<Error> error;

    bool ok() const { return !error.has_value(); }
};

std::filesystem::path default_scratch_root();

// Individual stages; execute() chains them.
PipelineState resolve(const PipelineDefinition& def, const ExecuteContext& ctx);
void compile(PipelineState& state, const PipelineDefinition& def);
void run(PipelineState& state, const PipelineDefinition& def);
void aggregate(PipelineState& state, const PipelineDefinition& def);

/// resolve -> compile -> run -> aggregate with choice overrides merged over
/// the definition's defaults. On failure the outcome carries the error and
/// the state reached so far.
ExecutionOutcome execute(const PipelineDefinition& def,
                         const std::map<std::string, std::string>& choice_overrides,
                         const ExecuteContext& ctx);

/// Loads a pipeline definition from a pipeline-kind entry.
PipelineDefinition load_pipeline(const ComponentEntry& entry);

} // namespace ckp
