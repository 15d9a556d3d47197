#include "ckp/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <regex>
#include <set>

#include "ckp/env_detect.hpp"
#include "ckp/error.hpp"
#include "ckp/hash.hpp"

namespace ckp {

namespace {

constexpr std::string_view kRecordKey = "record";
constexpr std::string_view kHashKey = "content_hash";
constexpr std::string_view kReportKey = "validation_report";

Json dep_record_to_json(const DepRecord& dep) {
    return Json{{"soft_name", dep.soft_name},
                {"version", dep.version},
                {"install_path", dep.install_path}};
}

DepRecord dep_record_from_json(const Json& doc) {
    DepRecord dep;
    dep.soft_name = doc.value("soft_name", "");
    dep.version = doc.value("version", "");
    dep.install_path = doc.value("install_path", "");
    return dep;
}

bool metric_values_equal(const MetricValue& a, const MetricValue& b) {
    return a == b; // exact variant equality: bit-equal doubles, identical strings
}

} // namespace

Json ExperimentRecord::to_meta() const {
    Json rec;
    rec["pipeline_uid"] = pipeline_uid;
    rec["pipeline_ref"] = pipeline_ref;

    Json deps = Json::object();
    for (const auto& [role, dep] : resolved_deps) {
        deps[role] = dep_record_to_json(dep);
    }
    rec["resolved_deps"] = deps;
    rec["effective_choices"] = effective_choices;
    rec["platform"] = platform.to_json();

    Json reps = Json::array();
    for (const auto& metrics : per_repetition) {
        reps.push_back(metric_map_to_json(metrics));
    }
    rec["per_repetition"] = reps;

    Json agg = Json::object();
    for (const auto& [key, stats] : aggregated) {
        agg[key] = stats.to_json();
    }
    rec["aggregated"] = agg;
    rec["functional"] = metric_map_to_json(functional);

    rec["status"] = status;
    if (!error.is_null()) {
        rec["error"] = error;
    }
    rec["started_at"] = started_at;
    rec["finished_at"] = finished_at;
    if (!exploration_id.empty()) {
        rec["exploration_id"] = exploration_id;
    }
    if (seed) {
        rec["seed"] = *seed;
    }
    if (!replay_of.empty()) {
        rec["replay_of"] = replay_of;
    }

    Json meta = Json{{std::string(kRecordKey), rec}};
    meta[std::string(kHashKey)] = sha256_hex(canonical_dump(meta));
    return meta;
}

ExperimentRecord ExperimentRecord::from_entry(const ComponentEntry& entry) {
    if (!entry.meta.contains(std::string(kRecordKey))) {
        raise(ErrorCode::NotFound,
              "experiment:" + entry.id.uid + " carries no record (is it a report?)");
    }
    const Json& rec = entry.meta.at(std::string(kRecordKey));

    ExperimentRecord record;
    record.uid = entry.id.uid;
    record.pipeline_uid = rec.value("pipeline_uid", "");
    record.pipeline_ref = rec.value("pipeline_ref", "");
    for (const auto& [role, dep] : rec.value("resolved_deps", Json::object()).items()) {
        record.resolved_deps[role] = dep_record_from_json(dep);
    }
    for (const auto& [key, value] : rec.value("effective_choices", Json::object()).items()) {
        record.effective_choices[key] = value.get<std::string>();
    }
    if (rec.contains("platform")) {
        record.platform = PlatformFingerprint::from_json(rec["platform"]);
    }
    for (const auto& metrics : rec.value("per_repetition", Json::array())) {
        record.per_repetition.push_back(metric_map_from_json(metrics));
    }
    for (const auto& [key, stats] : rec.value("aggregated", Json::object()).items()) {
        record.aggregated[key] = AggregateStats::from_json(stats);
    }
    if (rec.contains("functional")) {
        record.functional = metric_map_from_json(rec["functional"]);
    }
    record.status = rec.value("status", "failed");
    if (rec.contains("error")) {
        record.error = rec["error"];
    }
    record.started_at = rec.value("started_at", std::int64_t{0});
    record.finished_at = rec.value("finished_at", std::int64_t{0});
    record.exploration_id = rec.value("exploration_id", "");
    if (rec.contains("seed")) {
        record.seed = rec["seed"].get<std::int64_t>();
    }
    record.replay_of = rec.value("replay_of", "");
    return record;
}

ComponentEntry record(Store& store, const ComponentEntry& pipeline_entry,
                      const PipelineDefinition& def, const ExecutionOutcome& outcome,
                      const RecordContext& ctx) {
    ExperimentRecord rec;
    rec.pipeline_uid = pipeline_entry.id.uid;
    rec.pipeline_ref = pipeline_entry.ref();
    for (const auto& [role, env] : outcome.state.resolved_deps) {
        rec.resolved_deps[role] =
            DepRecord{env.soft_name, env.version.str(), env.install_path.string()};
    }
    rec.effective_choices = outcome.state.effective_choices;
    rec.platform = PlatformFingerprint::current();
    rec.per_repetition = outcome.state.per_repetition;
    rec.aggregated = outcome.state.aggregated;
    rec.functional = outcome.state.functional;
    rec.status = outcome.ok() ? "success" : "failed";
    if (outcome.error) {
        rec.error = Json{{"code", std::string(to_string(outcome.error->code()))},
                         {"message", outcome.error->message()}};
    }
    rec.started_at = ctx.started_at ? ctx.started_at : static_cast<std::int64_t>(::time(nullptr));
    rec.finished_at = ctx.finished_at ? ctx.finished_at : static_cast<std::int64_t>(::time(nullptr));
    rec.exploration_id = ctx.exploration_id;
    rec.seed = ctx.seed;
    rec.replay_of = ctx.replay_of;
    (void)def;

    std::set<std::string> tags = ctx.extra_tags;
    if (!ctx.exploration_id.empty()) {
        tags.insert(ctx.exploration_id);
    }
    if (!ctx.replay_of.empty()) {
        tags.insert("replay");
    }
    return store.add_entry(pipeline_entry.repo, ModuleKind::Experiment, "", tags, rec.to_meta());
}

std::pair<std::string, std::string> integrity_check(const ComponentEntry& entry) {
    if (!entry.meta.contains(std::string(kHashKey))) {
        raise(ErrorCode::InvalidMeta, "entry has no content hash");
    }
    std::string expected = entry.meta.at(std::string(kHashKey)).get<std::string>();
    Json without = entry.meta;
    without.erase(std::string(kHashKey));
    return {expected, sha256_hex(canonical_dump(without))};
}

Json diff_records(const ExperimentRecord& reference, const ExperimentRecord& replay_rec) {
    Json dep_changes = Json::array();
    std::set<std::string> roles;
    for (const auto& [role, dep] : reference.resolved_deps) {
        roles.insert(role);
        (void)dep;
    }
    for (const auto& [role, dep] : replay_rec.resolved_deps) {
        roles.insert(role);
        (void)dep;
    }
    for (const auto& role : roles) {
        auto ref_it = reference.resolved_deps.find(role);
        auto new_it = replay_rec.resolved_deps.find(role);
        Json ref_doc = ref_it == reference.resolved_deps.end()
                           ? Json(nullptr)
                           : dep_record_to_json(ref_it->second);
        Json new_doc = new_it == replay_rec.resolved_deps.end()
                           ? Json(nullptr)
                           : dep_record_to_json(new_it->second);
        if (ref_doc != new_doc) {
            dep_changes.push_back(Json{{"role", role}, {"reference", ref_doc}, {"replay", new_doc}});
        }
    }

    Json platform_changes = Json::array();
    auto push_platform = [&](const char* field, const std::string& a, const std::string& b) {
        if (a != b) {
            platform_changes.push_back(Json{{"field", field}, {"reference", a}, {"replay", b}});
        }
    };
    push_platform("os", reference.platform.os, replay_rec.platform.os);
    push_platform("arch", reference.platform.arch, replay_rec.platform.arch);
    push_platform("hostname_hash", reference.platform.hostname_hash,
                  replay_rec.platform.hostname_hash);

    return Json{{"dependencies", dep_changes}, {"platform", platform_changes}};
}

ReplayResult replay(Store& store, const std::string& experiment_ref,
                    const std::filesystem::path& scratch_root) {
    ComponentEntry ref_entry = store.get_entry(ModuleKind::Experiment, experiment_ref);
    ExperimentRecord reference = ExperimentRecord::from_entry(ref_entry);

    auto pipeline_entry = store.try_get_entry(ModuleKind::Pipeline, reference.pipeline_uid);
    if (!pipeline_entry) {
        raise(ErrorCode::MissingComponent,
              "pipeline " + reference.pipeline_ref + " (" + reference.pipeline_uid +
                  ") referenced by experiment:" + reference.uid + " no longer exists");
    }
    PipelineDefinition def = load_pipeline(*pipeline_entry);
    if (!store.try_get_entry(ModuleKind::Program, def.program_ref)) {
        raise(ErrorCode::MissingComponent,
              "program " + def.program_ref + " referenced by pipeline " + reference.pipeline_ref +
                  " no longer exists");
    }

    // re-detect the involved softs so resolution reflects today's host
    for (const auto& dep : def.dependencies) {
        if (auto soft = find_descriptor(store, dep.soft_name)) {
            Query cached;
            cached.kind = ModuleKind::Soft;
            cached.tags = {"detected"};
            for (const auto& entry : store.find_entries(cached)) {
                if (entry.meta.contains("detected_env") &&
                    DetectedEnv::from_meta(entry.meta).soft_name == dep.soft_name) {
                    store.remove_entry(entry);
                }
            }
            for (const auto& env : detect(*soft, {})) {
                cache_detection(store, ref_entry.repo, env);
            }
        }
    }

    ExecuteContext ctx;
    ctx.store = &store;
    ctx.repo = ref_entry.repo;
    ctx.scratch_root = scratch_root;

    RecordContext rctx;
    rctx.replay_of = reference.uid;
    rctx.seed = reference.seed;
    rctx.started_at = static_cast<std::int64_t>(::time(nullptr));

    ExecutionOutcome outcome = execute(def, reference.effective_choices, ctx);
    rctx.finished_at = static_cast<std::int64_t>(::time(nullptr));

    ReplayResult result;
    result.entry = record(store, *pipeline_entry, def, outcome, rctx);
    result.record = ExperimentRecord::from_entry(result.entry);
    result.diff = diff_records(reference, result.record);
    return result;
}

std::string ToleranceRule::str() const {
    switch (kind) {
    case ToleranceKind::Relative: {
        Json v = value;
        return "rel<=" + v.dump() + " on " + std::string(to_string(stat));
    }
    case ToleranceKind::Absolute: {
        Json v = value;
        return "abs<=" + v.dump() + " on " + std::string(to_string(stat));
    }
    case ToleranceKind::Exact:
        return "exact";
    }
    return "exact";
}

ToleranceRule ToleranceRule::parse(const std::string& text) {
    ToleranceRule rule;
    if (text == "exact") {
        rule.kind = ToleranceKind::Exact;
        rule.value = 0;
        return rule;
    }
    std::smatch match;
    static const std::regex pattern(R"(^(rel|abs):([0-9.eE+-]+)(?::([a-z]+))?$)");
    if (!std::regex_match(text, match, pattern)) {
        raise(ErrorCode::InvalidQuery,
              "tolerance must be rel:<frac>[:<stat>], abs:<value>[:<stat>] or exact, got '" +
                  text + "'");
    }
    rule.kind = match[1].str() == "rel" ? ToleranceKind::Relative : ToleranceKind::Absolute;
    try {
        rule.value = std::stod(match[2].str());
    } catch (...) {
        raise(ErrorCode::InvalidQuery, "bad tolerance value in '" + text + "'");
    }
    if (rule.value < 0) {
        raise(ErrorCode::InvalidQuery, "tolerance must be >= 0");
    }
    if (match[3].matched) {
        auto stat = parse_statistic(match[3].str());
        if (!stat) {
            raise(ErrorCode::InvalidQuery, "unknown statistic '" + match[3].str() + "'");
        }
        rule.stat = *stat;
    }
    return rule;
}

const ToleranceRule& ToleranceSpec::rule_for(const std::string& metric) const {
    auto it = per_metric.find(metric);
    return it == per_metric.end() ? default_rule : it->second;
}

Json ValidationReport::to_json() const {
    Json rows_doc = Json::array();
    for (const auto& row : rows) {
        rows_doc.push_back(Json{{"metric", row.metric},
                                {"reference", row.reference},
                                {"replay", row.replay},
                                {"rule", row.rule},
                                {"pass", row.pass},
                                {"rel_diff", row.rel_diff}});
    }
    return Json{{"reference", reference_uid},
                {"replay", replay_uid},
                {"rows", rows_doc},
                {"env_diff", env_diff},
                {"badge", badge}};
}

ValidationReport ValidationReport::from_json(const Json& doc) {
    ValidationReport report;
    report.reference_uid = doc.value("reference", "");
    report.replay_uid = doc.value("replay", "");
    for (const auto& row_doc : doc.value("rows", Json::array())) {
        MetricRow row;
        row.metric = row_doc.value("metric", "");
        row.reference = row_doc.value("reference", Json(nullptr));
        row.replay = row_doc.value("replay", Json(nullptr));
        row.rule = row_doc.value("rule", "");
        row.pass = row_doc.value("pass", false);
        row.rel_diff = row_doc.value("rel_diff", Json(nullptr));
        report.rows.push_back(std::move(row));
    }
    report.env_diff = doc.value("env_diff", Json(nullptr));
    report.badge = doc.value("badge", "");
    return report;
}

CompareResult compare(Store& store, const std::string& reference_ref,
                      const std::string& replay_ref, const ToleranceSpec& tolerances) {
    ComponentEntry ref_entry = store.get_entry(ModuleKind::Experiment, reference_ref);
    ComponentEntry rep_entry = store.get_entry(ModuleKind::Experiment, replay_ref);
    ExperimentRecord reference = ExperimentRecord::from_entry(ref_entry);
    ExperimentRecord replay_rec = ExperimentRecord::from_entry(rep_entry);

    ValidationReport report;
    report.reference_uid = reference.uid;
    report.replay_uid = replay_rec.uid;
    report.env_diff = diff_records(reference, replay_rec);

    bool replay_failed = replay_rec.status != "success";
    bool functional_mismatch = false;

    if (!replay_failed) {
        // metric key sets must overlap at all for a comparison to mean anything
        std::set<std::string> ref_keys;
        std::set<std::string> rep_keys;
        for (const auto& [k, v] : reference.functional) {
            ref_keys.insert(k);
            (void)v;
        }
        for (const auto& [k, v] : reference.aggregated) {
            ref_keys.insert(k);
            (void)v;
        }
        for (const auto& [k, v] : replay_rec.functional) {
            rep_keys.insert(k);
            (void)v;
        }
        for (const auto& [k, v] : replay_rec.aggregated) {
            rep_keys.insert(k);
            (void)v;
        }
        bool overlap = std::any_of(ref_keys.begin(), ref_keys.end(),
                                   [&](const std::string& k) { return rep_keys.contains(k); });
        if (!overlap) {
            raise(ErrorCode::IncomparableExperiments,
                  "experiments " + reference.uid + " and " + replay_rec.uid +
                      " share no metric keys");
        }

        // functional keys: bit-exact, missing on either side is a mismatch
        std::set<std::string> functional_keys;
        for (const auto& [k, v] : reference.functional) {
            functional_keys.insert(k);
            (void)v;
        }
        for (const auto& [k, v] : replay_rec.functional) {
            functional_keys.insert(k);
            (void)v;
        }
        for (const auto& key : functional_keys) {
            MetricRow row;
            row.metric = key;
            row.rule = "exact";
            auto ref_it = reference.functional.find(key);
            auto rep_it = replay_rec.functional.find(key);
            row.reference = ref_it == reference.functional.end()
                                ? Json(nullptr)
                                : metric_value_to_json(ref_it->second);
            row.replay = rep_it == replay_rec.functional.end()
                             ? Json(nullptr)
                             : metric_value_to_json(rep_it->second);
            row.pass = ref_it != reference.functional.end() &&
                       rep_it != replay_rec.functional.end() &&
                       metric_values_equal(ref_it->second, rep_it->second);
            row.rel_diff = Json(nullptr);
            if (!row.pass) {
                functional_mismatch = true;
            }
            report.rows.push_back(std::move(row));
        }

        // performance keys present in both records
        for (const auto& [key, ref_stats] : reference.aggregated) {
            auto rep_it = replay_rec.aggregated.find(key);
            if (rep_it == replay_rec.aggregated.end()) {
                continue;
            }
            const ToleranceRule& rule = tolerances.rule_for(key);
            double ref_value = stat_of(ref_stats, rule.stat);
            double rep_value = stat_of(rep_it->second, rule.stat);

            MetricRow row;
            row.metric = key;
            row.rule = rule.str();
            row.reference = ref_value;
            row.replay = rep_value;

            if (ref_value != 0.0) {
                row.rel_diff = (rep_value - ref_value) / std::abs(ref_value);
            } else {
                row.rel_diff = Json(nullptr);
            }

            switch (rule.kind) {
            case ToleranceKind::Relative:
                if (ref_value == 0.0) {
                    row.pass = rep_value == 0.0;
                } else {
                    row.pass = std::abs(rep_value - ref_value) / std::abs(ref_value) <= rule.value;
                }
                break;
            case ToleranceKind::Absolute:
                row.pass = std::abs(rep_value - ref_value) <= rule.value;
                break;
            case ToleranceKind::Exact:
                row.pass = ref_value == rep_value;
                break;
            }
            report.rows.push_back(std::move(row));
        }
    }

    if (replay_failed || functional_mismatch) {
        report.badge = std::string(kBadgeDivergent);
    } else {
        bool all_pass = std::all_of(report.rows.begin(), report.rows.end(),
                                    [](const MetricRow& row) { return row.pass; });
        report.badge = all_pass ? std::string(kBadgeReplicated) : std::string(kBadgeFunctional);
    }

    Json meta = Json{{std::string(kReportKey), report.to_json()}};
    meta[std::string(kHashKey)] = sha256_hex(canonical_dump(meta));

    CompareResult result;
    result.entry =
        store.add_entry(ref_entry.repo, ModuleKind::Experiment, "", {"validation"}, meta);
    result.report = std::move(report);
    return result;
}

Json check_archival(const Store& store, const Json& manifest) {
    if (!manifest.is_object()) {
        raise(ErrorCode::InvalidManifest, "manifest must be a JSON object");
    }

    Json checks = Json::array();

    // 1. every referenced component exists
    {
        bool pass = true;
        std::string detail;
        if (!manifest.contains("components") || !manifest["components"].is_array()) {
            pass = false;
            detail = "manifest lists no components";
        } else {
            for (const auto& item : manifest["components"]) {
                std::string ref = item.get<std::string>();
                size_t colon = ref.find(':');
                auto kind = colon == std::string::npos
                                ? std::nullopt
                                : parse_kind(ref.substr(0, colon));
                if (!kind) {
                    pass = false;
                    detail += (detail.empty() ? "" : "; ") + ref + ": bad reference";
                    continue;
                }
                if (!store.try_get_entry(*kind, ref.substr(colon + 1))) {
                    pass = false;
                    detail += (detail.empty() ? "" : "; ") + ref + ": not found";
                }
            }
        }
        checks.push_back(Json{{"name", "components_exist"},
                              {"pass", pass},
                              {"detail", pass ? "all referenced components found" : detail}});
    }

    // 2. manifest content hash
    {
        bool pass = false;
        std::string detail;
        if (!manifest.contains(std::string(kHashKey))) {
            detail = "manifest has no content_hash";
        } else {
            Json without = manifest;
            without.erase(std::string(kHashKey));
            std::string actual = sha256_hex(canonical_dump(without));
            std::string expected = manifest[std::string(kHashKey)].get<std::string>();
            pass = actual == expected;
            detail = pass ? "content hash verified"
                          : "expected " + expected + ", computed " + actual;
        }
        checks.push_back(
            Json{{"name", "content_hash_matches"}, {"pass", pass}, {"detail", detail}});
    }

    // 3. archive identifier present and syntactically valid
    {
        bool pass = false;
        std::string detail;
        std::string id = manifest.value("archive_id", "");
        if (id.empty()) {
            detail = "manifest has no archive_id";
        } else {
            static const std::regex doi(R"(^10\.\d{4,9}/\S+$)");
            static const std::regex url(R"(^https?://\S+$)");
            pass = std::regex_match(id, doi) || std::regex_match(id, url);
            detail = pass ? "archive identifier looks valid"
                          : "'" + id + "' is neither a DOI nor a URL";
        }
        checks.push_back(Json{{"name", "archive_id_valid"}, {"pass", pass}, {"detail", detail}});
    }

    bool all = std::all_of(checks.begin(), checks.end(),
                           [](const Json& c) { return c["pass"].get<bool>(); });
    return Json{{"checks", checks}, {"all_passed", all}};
}

} // namespace ckp
