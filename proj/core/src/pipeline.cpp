#include "ckp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <set>

#include "ckp/subprocess.hpp"

namespace fs = std::filesystem;

namespace ckp {

namespace {

std::string random_suffix() {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    static const char* hex = "0123456789abcdef";
    std::uint64_t raw = rng();
    std::string out(12, '0');
    for (int i = 0; i < 12; ++i) {
        out[static_cast<size_t>(i)] = hex[(raw >> (i * 4)) & 0xf];
    }
    return out;
}

// Extracts every ${...} token from a template.
std::vector<std::string> placeholders(const std::string& text) {
    std::vector<std::string> tokens;
    size_t pos = 0;
    while ((pos = text.find("${", pos)) != std::string::npos) {
        size_t end = text.find('}', pos + 2);
        if (end == std::string::npos) {
            break;
        }
        tokens.push_back(text.substr(pos + 2, end - pos - 2));
        pos = end + 1;
    }
    return tokens;
}

std::string last_nonempty_line(const std::string& text) {
    size_t end = text.size();
    while (end > 0) {
        size_t start = text.find_last_of('\n', end - 1);
        size_t line_begin = (start == std::string::npos) ? 0 : start + 1;
        std::string line = text.substr(line_begin, end - line_begin);
        if (line.find_first_not_of(" \t\r") != std::string::npos) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
                line.pop_back();
            }
            return line;
        }
        if (start == std::string::npos) {
            break;
        }
        end = start;
    }
    return "";
}

MetricMap parse_metrics_document(const std::string& text, int repetition) {
    Json doc = Json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        raise(ErrorCode::MetricsParseError,
              "repetition " + std::to_string(repetition) +
                  ": metrics are not a JSON object: " + text,
              Json{{"repetition", repetition}});
    }
    MetricMap metrics;
    for (const auto& [key, value] : doc.items()) {
        if (value.is_number()) {
            metrics.emplace(key, value.get<double>());
        } else if (value.is_string()) {
            metrics.emplace(key, value.get<std::string>());
        } else {
            raise(ErrorCode::MetricsParseError,
                  "repetition " + std::to_string(repetition) + ": metric '" + key +
                      "' must be a number or string (flat object contract)",
                  Json{{"repetition", repetition}, {"metric", key}});
        }
    }
    return metrics;
}

struct TemplateScope {
    const PipelineState* state = nullptr;
    bool allow_artifacts = false;
};

std::string render_template(const std::string& tmpl, const TemplateScope& scope) {
    std::string out;
    out.reserve(tmpl.size());
    size_t pos = 0;
    while (pos < tmpl.size()) {
        size_t open = tmpl.find("${", pos);
        if (open == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        out.append(tmpl, pos, open - pos);
        size_t close = tmpl.find('}', open + 2);
        if (close == std::string::npos) {
            raise(ErrorCode::InvalidDefinition, "unterminated placeholder in: " + tmpl);
        }
        std::string token = tmpl.substr(open + 2, close - open - 2);
        std::string value;
        if (token.rfind("choice:", 0) == 0) {
            auto it = scope.state->effective_choices.find(token.substr(7));
            if (it == scope.state->effective_choices.end()) {
                raise(ErrorCode::InvalidDefinition, "undeclared choice '" + token.substr(7) + "'");
            }
            value = it->second;
        } else if (token.rfind("dep:", 0) == 0) {
            auto it = scope.state->resolved_deps.find(token.substr(4));
            if (it == scope.state->resolved_deps.end()) {
                raise(ErrorCode::InvalidDefinition, "undeclared dependency role '" +
                                                        token.substr(4) + "'");
            }
            value = it->second.install_path.string();
        } else if (token == "scratch") {
            value = scope.state->scratch_dir.string();
        } else if (token == "data") {
            value = scope.state->program_data_dir.string();
        } else if (token.rfind("artifact:", 0) == 0 && scope.allow_artifacts) {
            auto it = scope.state->artifacts.find(token.substr(9));
            if (it == scope.state->artifacts.end()) {
                raise(ErrorCode::InvalidDefinition,
                      "unknown artifact '" + token.substr(9) + "'");
            }
            value = it->second.string();
        } else {
            raise(ErrorCode::InvalidDefinition, "unresolved placeholder ${" + token + "}");
        }
        out += value;
        pos = close + 1;
    }
    // template totality: nothing unresolved may survive into an executed command
    if (out.find("${") != std::string::npos) {
        raise(ErrorCode::InvalidDefinition, "unresolved placeholder survives in: " + out);
    }
    return out;
}

// Env script of the resolved dependencies, in declaration order. Sourced
// ahead of every compile and run command.
std::string dep_env_script(const PipelineState& state, const PipelineDefinition& def) {
    std::vector<DetectedEnv> envs;
    for (const auto& dep : def.dependencies) {
        auto it = state.resolved_deps.find(dep.role);
        if (it != state.resolved_deps.end()) {
            envs.push_back(it->second);
        }
    }
    return emit_env_script(envs);
}

} // namespace

Json metric_value_to_json(const MetricValue& value) {
    if (std::holds_alternative<double>(value)) {
        double d = std::get<double>(value);
        if (d == std::floor(d) && std::abs(d) < 1e15) {
            return Json(static_cast<std::int64_t>(d));
        }
        return Json(d);
    }
    return Json(std::get<std::string>(value));
}

Json metric_map_to_json(const MetricMap& metrics) {
    Json doc = Json::object();
    for (const auto& [key, value] : metrics) {
        doc[key] = metric_value_to_json(value);
    }
    return doc;
}

MetricMap metric_map_from_json(const Json& doc) {
    MetricMap metrics;
    for (const auto& [key, value] : doc.items()) {
        if (value.is_number()) {
            metrics.emplace(key, value.get<double>());
        } else {
            metrics.emplace(key, value.get<std::string>());
        }
    }
    return metrics;
}

void PipelineDefinition::validate() const {
    if (run_spec.command.empty()) {
        raise(ErrorCode::InvalidDefinition, "run command must not be empty");
    }
    if (run_spec.repetitions < 1) {
        raise(ErrorCode::InvalidDefinition, "repetitions must be >= 1");
    }
    if (run_spec.source == MetricsSource::MetricsFile && run_spec.metrics_file.empty()) {
        raise(ErrorCode::InvalidDefinition, "metrics file source needs a file name");
    }

    std::set<std::string> functional(run_spec.functional_keys.begin(),
                                     run_spec.functional_keys.end());
    for (const auto& key : run_spec.performance_keys) {
        if (functional.contains(key)) {
            raise(ErrorCode::InvalidDefinition,
                  "metric '" + key + "' cannot be both functional and performance");
        }
    }
    if (functional.contains("wall_time_s")) {
        raise(ErrorCode::InvalidDefinition,
              "wall_time_s is measured by the engine and cannot be a functional key");
    }

    std::set<std::string> roles;
    for (const auto& dep : dependencies) {
        dep.constraint.validate();
        if (dep.role.empty() || dep.soft_name.empty()) {
            raise(ErrorCode::InvalidDefinition, "dependency needs a soft name and a role");
        }
        if (!roles.insert(dep.role).second) {
            raise(ErrorCode::InvalidDefinition, "duplicate dependency role '" + dep.role + "'");
        }
    }

    // every ${dep:...}/${choice:...} placeholder must be declared
    std::vector<std::string> templates;
    if (compile_spec) {
        templates.push_back(compile_spec->command);
    }
    templates.push_back(run_spec.command);
    for (const auto& tmpl : templates) {
        for (const auto& token : placeholders(tmpl)) {
            if (token.rfind("choice:", 0) == 0) {
                if (!choices.contains(token.substr(7))) {
                    raise(ErrorCode::InvalidDefinition,
                          "template references undeclared choice '" + token.substr(7) + "'");
                }
            } else if (token.rfind("dep:", 0) == 0) {
                if (!roles.contains(token.substr(4))) {
                    raise(ErrorCode::InvalidDefinition,
                          "template references undeclared dependency role '" + token.substr(4) +
                              "'");
                }
            } else if (token.rfind("artifact:", 0) == 0) {
                if (!compile_spec || compile_spec->artifact_name != token.substr(9)) {
                    raise(ErrorCode::InvalidDefinition,
                          "template references unknown artifact '" + token.substr(9) + "'");
                }
            } else if (token != "scratch" && token != "data") {
                raise(ErrorCode::InvalidDefinition, "unknown placeholder ${" + token + "}");
            }
        }
    }
}

std::vector<std::string> PipelineDefinition::effective_performance_keys() const {
    std::vector<std::string> keys = run_spec.performance_keys;
    if (std::find(keys.begin(), keys.end(), "wall_time_s") == keys.end()) {
        keys.push_back("wall_time_s");
    }
    return keys;
}

Json PipelineDefinition::to_meta() const {
    Json deps = Json::array();
    for (const auto& dep : dependencies) {
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
        deps.push_back(d);
    }

    Json run_doc;
    run_doc["command"] = run_spec.command;
    run_doc["repetitions"] = run_spec.repetitions;
    if (run_spec.source == MetricsSource::StdoutLastLine) {
        run_doc["metrics"] = "stdout";
    } else {
        run_doc["metrics"] = Json{{"file", run_spec.metrics_file}};
    }
    run_doc["functional_keys"] = run_spec.functional_keys;
    run_doc["performance_keys"] = run_spec.performance_keys;

    Json doc;
    doc["program"] = program_ref;
    doc["dependencies"] = deps;
    if (compile_spec) {
        doc["compile"] = Json{{"command", compile_spec->command},
                              {"artifact", compile_spec->artifact_name}};
    }
    doc["run"] = run_doc;
    doc["choices"] = choices;
    return Json{{"pipeline", doc}};
}

PipelineDefinition PipelineDefinition::from_meta(const Json& meta) {
    if (!meta.contains("pipeline")) {
        raise(ErrorCode::InvalidDefinition, "meta carries no pipeline definition");
    }
    const Json& doc = meta.at("pipeline");

    PipelineDefinition def;
    def.program_ref = doc.value("program", "");
    for (const auto& d : doc.value("dependencies", Json::array())) {
        DependencySpec dep;
        dep.soft_name = d.value("soft", "");
        dep.role = d.value("role", "");
        if (d.contains("min")) {
            dep.constraint.min = Version::parse(d["min"].get<std::string>());
        }
        if (d.contains("max")) {
            dep.constraint.max = Version::parse(d["max"].get<std::string>());
        }
        if (d.contains("exact")) {
            dep.constraint.exact = Version::parse(d["exact"].get<std::string>());
        }
        def.dependencies.push_back(std::move(dep));
    }
    if (doc.contains("compile")) {
        CompileSpec spec;
        spec.command = doc["compile"].value("command", "");
        spec.artifact_name = doc["compile"].value("artifact", "");
        def.compile_spec = std::move(spec);
    }
    if (doc.contains("run")) {
        const Json& run_doc = doc["run"];
        def.run_spec.command = run_doc.value("command", "");
        def.run_spec.repetitions = run_doc.value("repetitions", 3);
        if (run_doc.contains("metrics")) {
            if (run_doc["metrics"].is_string()) {
                if (run_doc["metrics"].get<std::string>() != "stdout") {
                    raise(ErrorCode::InvalidDefinition,
                          "metrics must be \"stdout\" or {\"file\": name}");
                }
                def.run_spec.source = MetricsSource::StdoutLastLine;
            } else {
                def.run_spec.source = MetricsSource::MetricsFile;
                def.run_spec.metrics_file = run_doc["metrics"].value("file", "");
            }
        }
        for (const auto& k : run_doc.value("functional_keys", Json::array())) {
            def.run_spec.functional_keys.push_back(k.get<std::string>());
        }
        for (const auto& k : run_doc.value("performance_keys", Json::array())) {
            def.run_spec.performance_keys.push_back(k.get<std::string>());
        }
    }
    if (doc.contains("choices")) {
        for (const auto& [key, value] : doc["choices"].items()) {
            def.choices[key] = value.is_string() ? value.get<std::string>() : value.dump();
        }
    }
    def.validate();
    return def;
}

Json AggregateStats::to_json() const {
    return Json{{"min", min},       {"max", max}, {"mean", mean},
                {"median", median}, {"std", std}, {"count", count}};
}

AggregateStats AggregateStats::from_json(const Json& doc) {
    AggregateStats stats;
    stats.min = doc.value("min", 0.0);
    stats.max = doc.value("max", 0.0);
    stats.mean = doc.value("mean", 0.0);
    stats.median = doc.value("median", 0.0);
    stats.std = doc.value("std", 0.0);
    stats.count = doc.value("count", 0);
    return stats;
}

std::optional<Statistic> parse_statistic(std::string_view text) {
    if (text == "min") return Statistic::Min;
    if (text == "max") return Statistic::Max;
    if (text == "mean") return Statistic::Mean;
    if (text == "median") return Statistic::Median;
    if (text == "std") return Statistic::Std;
    if (text == "count") return Statistic::Count;
    return std::nullopt;
}

std::string_view to_string(Statistic stat) {
    switch (stat) {
    case Statistic::Min: return "min";
    case Statistic::Max: return "max";
    case Statistic::Mean: return "mean";
    case Statistic::Median: return "median";
    case Statistic::Std: return "std";
    case Statistic::Count: return "count";
    }
    return "mean";
}

double stat_of(const AggregateStats& stats, Statistic stat) {
    switch (stat) {
    case Statistic::Min: return stats.min;
    case Statistic::Max: return stats.max;
    case Statistic::Mean: return stats.mean;
    case Statistic::Median: return stats.median;
    case Statistic::Std: return stats.std;
    case Statistic::Count: return static_cast<double>(stats.count);
    }
    return stats.mean;
}

AggregateStats aggregate_values(std::vector<double> values) {
    if (values.empty()) {
        raise(ErrorCode::InternalError, "aggregate over empty value list");
    }
    AggregateStats stats;
    stats.count = static_cast<int>(values.size());

    std::sort(values.begin(), values.end());
    stats.min = values.front();
    stats.max = values.back();
    stats.median = values[(values.size() - 1) / 2];

    double sum = 0;
    for (double v : values) {
        sum += v;
    }
    stats.mean = sum / static_cast<double>(values.size());

    double sq = 0;
    for (double v : values) {
        sq += (v - stats.mean) * (v - stats.mean);
    }
    stats.std = std::sqrt(sq / static_cast<double>(values.size()));
    return stats;
}

std::filesystem::path default_scratch_root() {
    if (const char* env = std::getenv("CKP_SCRATCH"); env && *env) {
        return fs::path(env);
    }
    return fs::temp_directory_path() / "ckp-scratch";
}

PipelineState resolve(const PipelineDefinition& def, const ExecuteContext& ctx) {
    def.validate();
    PipelineState state;
    for (const auto& dep : def.dependencies) {
        try {
            state.resolved_deps[dep.role] = resolve_in_store(
                *ctx.store, ctx.repo.empty() ? ctx.store->primary_repo().name : ctx.repo,
                dep.soft_name, dep.constraint, ctx.log);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::UnresolvedDependency) {
                Json detail = e.detail();
                detail["role"] = dep.role;
                raise(ErrorCode::UnresolvedDependency,
                      "dependency '" + dep.role + "': " + e.message(), detail);
            }
            throw;
        }
    }
    return state;
}

void compile(PipelineState& state, const PipelineDefinition& def) {
    if (!def.compile_spec) {
        return; // nothing to compile; pass-through
    }
    TemplateScope scope{&state, false};
    std::string command = render_template(def.compile_spec->command, scope);

    RunOptions opts;
    opts.cwd = state.scratch_dir;
    RunResult run = run_shell(dep_env_script(state, def) + command, opts);
    state.compile_command = command;
    if (!run.ok()) {
        raise(ErrorCode::CompileFailed,
              "compile command failed with exit " + std::to_string(run.exit_code),
              Json{{"command", command}, {"exit_code", run.exit_code},
                   {"output", run.out + run.err}});
    }

    fs::path artifact = state.scratch_dir / def.compile_spec->artifact_name;
    if (!fs::exists(artifact)) {
        raise(ErrorCode::ArtifactMissing,
              "compile succeeded but artifact '" + def.compile_spec->artifact_name +
                  "' is missing under " + state.scratch_dir.string(),
              Json{{"artifact", def.compile_spec->artifact_name}});
    }
    state.artifacts[def.compile_spec->artifact_name] = artifact;
}

void run(PipelineState& state, const PipelineDefinition& def) {
    TemplateScope scope{&state, true};
    std::string command = render_template(def.run_spec.command, scope);
    std::string env_script = dep_env_script(state, def);

    RunOptions opts;
    opts.cwd = state.scratch_dir;

    state.per_repetition.clear();
    for (int rep = 0; rep < def.run_spec.repetitions; ++rep) {
        RunResult result = run_shell(env_script + command, opts);
        if (!result.ok()) {
            raise(ErrorCode::RunFailed,
                  "repetition " + std::to_string(rep) + " exited " +
                      std::to_string(result.exit_code),
                  Json{{"repetition", rep}, {"exit_code", result.exit_code},
                       {"output", result.out + result.err}});
        }

        MetricMap metrics;
        if (def.run_spec.source == MetricsSource::StdoutLastLine) {
            metrics = parse_metrics_document(last_nonempty_line(result.out), rep);
        } else {
            fs::path file = state.scratch_dir / def.run_spec.metrics_file;
            if (!fs::is_regular_file(file)) {
                raise(ErrorCode::MetricsParseError,
                      "repetition " + std::to_string(rep) + ": metrics file " +
                          def.run_spec.metrics_file + " was not produced",
                      Json{{"repetition", rep}});
            }
            metrics = parse_metrics_document(read_file(file), rep);
        }
        metrics["wall_time_s"] = result.wall_time_s; // engine-measured, monotonic clock
        state.per_repetition.push_back(std::move(metrics));
    }
}

void aggregate(PipelineState& state, const PipelineDefinition& def) {
    // functional keys: bit-equal across repetitions
    for (const auto& key : def.run_spec.functional_keys) {
        std::vector<MetricValue> distinct;
        for (size_t rep = 0; rep < state.per_repetition.size(); ++rep) {
            auto it = state.per_repetition[rep].find(key);
            if (it == state.per_repetition[rep].end()) {
                raise(ErrorCode::MetricsParseError,
                      "functional key '" + key + "' missing in repetition " + std::to_string(rep));
            }
            if (std::find(distinct.begin(), distinct.end(), it->second) == distinct.end()) {
                distinct.push_back(it->second);
            }
        }
        if (distinct.size() > 1) {
            Json values = Json::array();
            for (const auto& v : distinct) {
                values.push_back(metric_value_to_json(v));
            }
            raise(ErrorCode::NonDeterministicFunctionalOutput,
                  "functional key '" + key + "' varies across repetitions",
                  Json{{"key", key}, {"values", values}});
        }
        state.functional[key] = distinct.front();
    }

    for (const auto& key : def.effective_performance_keys()) {
        std::vector<double> values;
        for (size_t rep = 0; rep < state.per_repetition.size(); ++rep) {
            auto it = state.per_repetition[rep].find(key);
            if (it == state.per_repetition[rep].end()) {
                raise(ErrorCode::MetricsParseError,
                      "performance key '" + key + "' missing in repetition " +
                          std::to_string(rep));
            }
            if (!std::holds_alternative<double>(it->second)) {
                raise(ErrorCode::MetricsParseError,
                      "performance key '" + key + "' is not numeric in repetition " +
                          std::to_string(rep));
            }
            values.push_back(std::get<double>(it->second));
        }
        state.aggregated[key] = aggregate_values(std::move(values));
    }
}

ExecutionOutcome execute(const PipelineDefinition& def,
                         const std::map<std::string, std::string>& choice_overrides,
                         const ExecuteContext& ctx) {
    ExecutionOutcome outcome;
    PipelineState& state = outcome.state;

    try {
        def.validate();
        state.effective_choices = def.choices;
        for (const auto& [key, value] : choice_overrides) {
            if (!def.choices.contains(key)) {
                raise(ErrorCode::InvalidDefinition,
                      "override for undeclared choice '" + key + "'");
            }
            state.effective_choices[key] = value;
        }

        // program payload is read-only input; all writes land in scratch
        ComponentEntry program =
            ctx.store->get_entry(ModuleKind::Program, def.program_ref);
        state.program_data_dir = program.data_path;

        fs::path root = ctx.scratch_root.empty() ? default_scratch_root() : ctx.scratch_root;
        state.scratch_dir = root / ("exec-" + random_suffix());
        std::error_code ec;
        fs::create_directories(state.scratch_dir, ec);
        if (ec) {
            raise(ErrorCode::StoreIoError, "cannot create scratch " + state.scratch_dir.string());
        }

        PipelineState resolved = resolve(def, ctx);
        state.resolved_deps = std::move(resolved.resolved_deps);

        compile(state, def);
        run(state, def);
        aggregate(state, def);
    } catch (const Error& e) {
        outcome.error = e;
    }
    return outcome;
}

PipelineDefinition load_pipeline(const ComponentEntry& entry) {
    return PipelineDefinition::from_meta(entry.meta);
}

} // namespace ckp
