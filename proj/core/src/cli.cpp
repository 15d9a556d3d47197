#include "ckp/cli.hpp"

#include <algorithm>
#include <ctime>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "ckp/autotune.hpp"
#include "ckp/env_detect.hpp"
#include "ckp/error.hpp"
#include "ckp/experiment.hpp"
#include "ckp/hash.hpp"
#include "ckp/json_util.hpp"
#include "ckp/package.hpp"
#include "ckp/pipeline.hpp"
#include "ckp/report.hpp"
#include "ckp/store.hpp"

#ifndef CKP_VERSION_STRING
#define CKP_VERSION_STRING "0.0.0"
#endif

namespace fs = std::filesystem;

namespace ckp::cli {

namespace {

const std::set<std::string> kVerbs = {
    "add",     "find",    "rm",      "show",    "detect", "resolve",
    "envscript", "install", "run",   "explore", "replay", "compare",
    "check-archival", "table", "plot-data", "report",
};

struct Command {
    std::string action;
    std::string target;                            // raw target token
    std::string target_kind;                       // before ':'
    std::string target_ref;                        // after ':'
    std::vector<std::pair<std::string, std::string>> kv_args;
    std::map<std::string, std::string> flags;      // --name[=value], value "" if bare
    bool json = false;
};

Command parse_command(const std::vector<std::string>& args) {
    Command cmd;
    cmd.action = args.front();
    bool target_seen = false;
    for (size_t i = 1; i < args.size(); ++i) {
        const std::string& arg = args[i];
        if (arg.rfind("--", 0) == 0) {
            size_t eq = arg.find('=');
            std::string name = eq == std::string::npos ? arg.substr(2) : arg.substr(2, eq - 2);
            std::string value = eq == std::string::npos ? "" : arg.substr(eq + 1);
            cmd.flags[name] = value;
        } else if (!target_seen && (arg.find('=') == std::string::npos ||
                                    cmd.action == "check-archival")) {
            cmd.target = arg;
            target_seen = true;
        } else {
            size_t eq = arg.find('=');
            if (eq == std::string::npos || eq == 0) {
                raise(ErrorCode::UsageError, "expected key=value, got '" + arg + "'");
            }
            cmd.kv_args.emplace_back(arg.substr(0, eq), arg.substr(eq + 1));
        }
    }
    cmd.json = cmd.flags.contains("json");
    size_t colon = cmd.target.find(':');
    if (colon == std::string::npos) {
        cmd.target_kind = cmd.target;
    } else {
        cmd.target_kind = cmd.target.substr(0, colon);
        cmd.target_ref = cmd.target.substr(colon + 1);
    }
    return cmd;
}

ModuleKind require_kind(const Command& cmd) {
    auto kind = parse_kind(cmd.target_kind);
    if (!kind) {
        raise(ErrorCode::InvalidKind, "unknown module kind '" + cmd.target_kind + "'");
    }
    return *kind;
}

std::string require_ref(const Command& cmd) {
    if (cmd.target_ref.empty()) {
        raise(ErrorCode::UsageError,
              "this action needs a target of the form <module_kind>:<entry>");
    }
    return cmd.target_ref;
}

std::set<std::string> parse_tags_flag(const Command& cmd) {
    std::set<std::string> tags;
    auto it = cmd.flags.find("tags");
    if (it == cmd.flags.end()) {
        return tags;
    }
    std::stringstream stream(it->second);
    std::string tag;
    while (std::getline(stream, tag, ',')) {
        if (!tag.empty()) {
            tags.insert(tag);
        }
    }
    return tags;
}

Store open_store() {
    return Store(Store::default_config());
}

std::string flag_or(const Command& cmd, const std::string& name, const std::string& fallback) {
    auto it = cmd.flags.find(name);
    return it == cmd.flags.end() ? fallback : it->second;
}

VersionConstraint constraint_from_kv(const Command& cmd) {
    VersionConstraint constraint;
    for (const auto& [key, value] : cmd.kv_args) {
        if (key == "min") {
            constraint.min = Version::parse(value);
        } else if (key == "max") {
            constraint.max = Version::parse(value);
        } else if (key == "exact") {
            constraint.exact = Version::parse(value);
        }
    }
    constraint.validate();
    return constraint;
}

Json entry_summary(const ComponentEntry& entry) {
    return Json{{"repo", entry.repo},
                {"kind", std::string(to_string(entry.kind))},
                {"uid", entry.id.uid},
                {"alias", entry.id.alias},
                {"tags", entry.tags}};
}

Json env_summary(const DetectedEnv& env) {
    Json env_doc = Json::array();
    for (const auto& [name, value] : env.env_settings) {
        env_doc.push_back(Json::array({name, value}));
    }
    return Json{{"soft_name", env.soft_name},
                {"version", env.version.str()},
                {"install_path", env.install_path.string()},
                {"env", env_doc}};
}

// --- per-verb handlers; each returns the JSON result object -----------------

Json do_add(const Command& cmd) {
    Store store = open_store();
    ModuleKind kind = require_kind(cmd);

    Json meta = Json::object();
    std::string meta_flag = flag_or(cmd, "meta", "");
    if (!meta_flag.empty()) {
        std::string text = meta_flag;
        if (meta_flag.front() == '@') {
            text = read_file(fs::path(meta_flag.substr(1)));
        }
        meta = Json::parse(text, nullptr, false);
        if (meta.is_discarded()) {
            raise(ErrorCode::InvalidMeta, "--meta is not valid JSON");
        }
    }
    for (const auto& [key, value] : cmd.kv_args) {
        meta[key] = value;
    }

    std::string repo = flag_or(cmd, "repo", store.primary_repo().name);
    ComponentEntry entry = store.add_entry(repo, kind, cmd.target_ref, parse_tags_flag(cmd), meta);
    return entry_summary(entry);
}

Json do_find(const Command& cmd) {
    Store store = open_store();
    Query query;
    if (!cmd.target_kind.empty()) {
        query.kind = require_kind(cmd);
    }
    if (!cmd.target_ref.empty()) {
        query.pattern = cmd.target_ref;
    }
    query.tags = parse_tags_flag(cmd);

    Json matches = Json::array();
    for (const auto& entry : store.find_entries(query)) {
        matches.push_back(entry_summary(entry));
    }
    return Json{{"matches", matches}};
}

Json do_show(const Command& cmd) {
    Store store = open_store();
    ComponentEntry entry = store.get_entry(require_kind(cmd), require_ref(cmd));
    Json doc = entry_summary(entry);
    doc["meta"] = entry.meta;
    doc["data_path"] = entry.data_path.string();
    return Json{{"entry", doc}};
}

Json do_rm(const Command& cmd) {
    Store store = open_store();
    ComponentEntry entry = store.get_entry(require_kind(cmd), require_ref(cmd));
    store.remove_entry(entry);
    return Json{{"removed", entry.id.uid}};
}

SoftDescriptor descriptor_for(const Store& store, const std::string& ref) {
    // accept either a soft entry ref or a bare soft name
    if (auto entry = store.try_get_entry(ModuleKind::Soft, ref)) {
        if (entry->meta.contains("soft_descriptor")) {
            return SoftDescriptor::from_meta(entry->meta);
        }
    }
    if (auto soft = find_descriptor(store, ref)) {
        return *soft;
    }
    raise(ErrorCode::NotFound, "no soft descriptor for '" + ref + "'");
}

Json do_detect(const Command& cmd, std::ostream& err) {
    Store store = open_store();
    if (require_kind(cmd) != ModuleKind::Soft) {
        raise(ErrorCode::UsageError, "detect expects a soft:<descriptor> target");
    }
    SoftDescriptor soft = descriptor_for(store, require_ref(cmd));

    std::vector<fs::path> roots;
    std::string dirs = flag_or(cmd, "dirs", "");
    std::stringstream stream(dirs);
    std::string dir;
    while (std::getline(stream, dir, ',')) {
        if (!dir.empty()) {
            roots.emplace_back(dir);
        }
    }

    DetectLog log;
    std::vector<DetectedEnv> envs = detect(soft, roots, &log);
    for (const auto& line : log.lines) {
        err << "detect: " << line << "\n";
    }

    std::string repo = flag_or(cmd, "repo", store.primary_repo().name);
    Json detected = Json::array();
    for (const auto& env : envs) {
        cache_detection(store, repo, env);
        detected.push_back(env_summary(env));
    }
    return Json{{"detected", detected}};
}

Json do_resolve(const Command& cmd) {
    Store store = open_store();
    if (require_kind(cmd) != ModuleKind::Soft) {
        raise(ErrorCode::UsageError, "resolve expects a soft:<name> target");
    }
    std::string soft_name = require_ref(cmd);
    if (auto entry = store.try_get_entry(ModuleKind::Soft, soft_name)) {
        if (entry->meta.contains("soft_descriptor")) {
            soft_name = SoftDescriptor::from_meta(entry->meta).soft_name;
        }
    }
    DetectedEnv env = resolve_in_store(store, store.primary_repo().name, soft_name,
                                       constraint_from_kv(cmd));
    return Json{{"resolved", env_summary(env)}};
}

Json do_envscript(const Command& cmd) {
    Store store = open_store();
    ModuleKind kind = require_kind(cmd);
    std::vector<DetectedEnv> envs;
    if (kind == ModuleKind::Soft) {
        std::string soft_name = require_ref(cmd);
        if (auto entry = store.try_get_entry(ModuleKind::Soft, soft_name)) {
            if (entry->meta.contains("soft_descriptor")) {
                soft_name = SoftDescriptor::from_meta(entry->meta).soft_name;
            }
        }
        envs.push_back(resolve_in_store(store, store.primary_repo().name, soft_name,
                                        constraint_from_kv(cmd)));
    } else if (kind == ModuleKind::Pipeline) {
        ComponentEntry entry = store.get_entry(ModuleKind::Pipeline, require_ref(cmd));
        PipelineDefinition def = load_pipeline(entry);
        for (const auto& dep : def.dependencies) {
            envs.push_back(resolve_in_store(store, store.primary_repo().name, dep.soft_name,
                                            dep.constraint));
        }
    } else {
        raise(ErrorCode::UsageError, "envscript expects soft:<name> or pipeline:<ref>");
    }
    return Json{{"script", emit_env_script(envs)}};
}

Json do_install(const Command& cmd) {
    Store store = open_store();
    if (require_kind(cmd) != ModuleKind::Package) {
        raise(ErrorCode::UsageError, "install expects a package:<ref> target");
    }
    ComponentEntry entry = store.get_entry(ModuleKind::Package, require_ref(cmd));
    PackageRecipe recipe = PackageRecipe::from_meta(entry.meta);

    fs::path prefix;
    std::string prefix_flag = flag_or(cmd, "prefix", "");
    if (!prefix_flag.empty()) {
        prefix = fs::path(prefix_flag);
    } else {
        prefix = store.primary_repo().root / ".installs" / entry.ref();
    }

    InstallContext ctx;
    ctx.store = &store;
    ctx.repo = flag_or(cmd, "repo", store.primary_repo().name);
    ctx.base_dir = entry.data_path; // relative sources ship as entry payload

    DetectedEnv env = install(recipe, prefix, ctx);
    return Json{{"installed", env_summary(env)}};
}

Json do_run(const Command& cmd, std::ostream& err) {
    Store store = open_store();
    if (require_kind(cmd) != ModuleKind::Pipeline) {
        raise(ErrorCode::UsageError, "run expects a pipeline:<ref> target");
    }
    ComponentEntry entry = store.get_entry(ModuleKind::Pipeline, require_ref(cmd));
    PipelineDefinition def = load_pipeline(entry);

    std::string reps = flag_or(cmd, "repetitions", "");
    if (!reps.empty()) {
        try {
            def.run_spec.repetitions = std::stoi(reps);
        } catch (...) {
            raise(ErrorCode::UsageError, "--repetitions needs an integer");
        }
    }

    std::map<std::string, std::string> overrides(cmd.kv_args.begin(), cmd.kv_args.end());

    DetectLog log;
    ExecuteContext ctx;
    ctx.store = &store;
    ctx.repo = entry.repo;
    ctx.log = &log;

    RecordContext rctx;
    rctx.started_at = static_cast<std::int64_t>(::time(nullptr));
    ExecutionOutcome outcome = execute(def, overrides, ctx);
    rctx.finished_at = static_cast<std::int64_t>(::time(nullptr));
    for (const auto& line : log.lines) {
        err << "detect: " << line << "\n";
    }

    Json result;
    if (!cmd.flags.contains("no-record")) {
        ComponentEntry rec_entry = record(store, entry, def, outcome, rctx);
        result["experiment"] = rec_entry.id.uid;
    }
    result["status"] = outcome.ok() ? "success" : "failed";
    Json agg = Json::object();
    for (const auto& [key, stats] : outcome.state.aggregated) {
        agg[key] = stats.to_json();
    }
    result["aggregated"] = agg;
    result["functional"] = metric_map_to_json(outcome.state.functional);
    if (outcome.error) {
        throw Error(outcome.error->code(),
                    outcome.error->message() + " (partial state recorded)",
                    Json{{"partial", result}});
    }
    return result;
}

Json do_explore(const Command& cmd, std::ostream& err) {
    Store store = open_store();
    if (require_kind(cmd) != ModuleKind::Pipeline) {
        raise(ErrorCode::UsageError, "explore expects a pipeline:<ref> target");
    }
    ComponentEntry entry = store.get_entry(ModuleKind::Pipeline, require_ref(cmd));
    auto [space, objectives] = load_tuning(entry);

    // flags override the strategy recorded in the tuning meta
    std::string strategy = flag_or(cmd, "strategy", "");
    if (strategy == "random") {
        RandomStrategy random;
        if (const auto* existing = std::get_if<RandomStrategy>(&space.strategy)) {
            random = *existing;
        }
        space.strategy = random;
    } else if (strategy == "exhaustive") {
        space.strategy = ExhaustiveStrategy{};
    } else if (!strategy.empty()) {
        raise(ErrorCode::UsageError, "--strategy must be exhaustive or random");
    }
    std::string seed = flag_or(cmd, "seed", "");
    std::string sample_count = flag_or(cmd, "sample-count", "");
    if (!seed.empty() || !sample_count.empty()) {
        RandomStrategy random;
        if (const auto* existing = std::get_if<RandomStrategy>(&space.strategy)) {
            random = *existing;
        }
        try {
            if (!seed.empty()) {
                random.seed = std::stoull(seed);
            }
            if (!sample_count.empty()) {
                random.sample_count = std::stoll(sample_count);
            }
        } catch (...) {
            raise(ErrorCode::UsageError, "--seed and --sample-count need integers");
        }
        space.strategy = random;
    }

    ExecuteContext ctx;
    ctx.store = &store;
    ctx.repo = entry.repo;

    err << "explore: " << enumerate_points(space).size() << " points\n";
    ExploreResult result = explore(store, entry, space, objectives, ctx);

    Json points = Json::array();
    for (const auto& point : result.points) {
        Json choices = Json::object();
        for (const auto& [key, value] : point.choices) {
            choices[key] = value;
        }
        points.push_back(Json{{"experiment", point.experiment_uid},
                              {"status", point.status},
                              {"choices", choices}});
    }
    return Json{{"exploration", result.exploration_uid},
                {"points", points},
                {"frontier", result.frontier_uids}};
}

Json do_replay(const Command& cmd) {
    Store store = open_store();
    if (require_kind(cmd) != ModuleKind::Experiment) {
        raise(ErrorCode::UsageError, "replay expects an experiment:<uid> target");
    }
    ReplayResult result = replay(store, require_ref(cmd));
    return Json{{"experiment", result.entry.id.uid},
                {"reference", result.record.replay_of},
                {"status", result.record.status},
                {"diff", result.diff}};
}

Json do_compare(const Command& cmd) {
    Store store = open_store();
    if (require_kind(cmd) != ModuleKind::Experiment) {
        raise(ErrorCode::UsageError, "compare expects an experiment:<reference> target");
    }

    std::string replay_ref;
    ToleranceSpec tolerances;
    for (const auto& [key, value] : cmd.kv_args) {
        if (key == "replay") {
            replay_ref = value;
        } else {
            tolerances.per_metric[key] = ToleranceRule::parse(value);
        }
    }
    if (replay_ref.empty()) {
        raise(ErrorCode::UsageError, "compare needs replay=<experiment uid>");
    }

    CompareResult result = compare(store, require_ref(cmd), replay_ref, tolerances);
    Json doc = result.report.to_json();
    doc["report"] = result.entry.id.uid;
    return doc;
}

Json do_check_archival(const Command& cmd) {
    Store store = open_store();
    if (cmd.target.empty()) {
        raise(ErrorCode::UsageError, "check-archival expects a manifest file path");
    }
    fs::path path(cmd.target);
    if (!fs::is_regular_file(path)) {
        raise(ErrorCode::InvalidManifest, "manifest not found: " + path.string());
    }
    Json manifest = Json::parse(read_file(path), nullptr, false);
    if (manifest.is_discarded()) {
        raise(ErrorCode::InvalidManifest, "manifest is not valid JSON");
    }
    return check_archival(store, manifest);
}

Json do_table(const Command& cmd) {
    Store store = open_store();
    Query query;
    if (!cmd.target_kind.empty() && cmd.target_kind != "experiment") {
        raise(ErrorCode::UsageError, "table works on experiment records");
    }
    if (!cmd.target_ref.empty()) {
        query.pattern = cmd.target_ref;
    }
    query.tags = parse_tags_flag(cmd);

    std::vector<std::string> columns;
    std::stringstream stream(flag_or(cmd, "columns", "uid,status,mean:wall_time_s"));
    std::string column;
    while (std::getline(stream, column, ',')) {
        if (!column.empty()) {
            columns.push_back(column);
        }
    }

    std::string csv = export_table(store, query, columns);
    std::string out_path = flag_or(cmd, "out", "");
    if (!out_path.empty()) {
        write_file_atomic(fs::path(out_path), csv);
    }
    return Json{{"csv", csv}};
}

Json do_plot_data(const Command& cmd) {
    Store store = open_store();
    if (require_kind(cmd) != ModuleKind::Experiment) {
        raise(ErrorCode::UsageError, "plot-data expects an experiment:<exploration uid> target");
    }
    std::string x = flag_or(cmd, "x", "");
    if (x.empty()) {
        raise(ErrorCode::UsageError, "plot-data needs --x=<choice key>");
    }
    std::string y = flag_or(cmd, "y", "mean:wall_time_s");
    size_t colon = y.find(':');
    std::string stat = colon == std::string::npos ? "mean" : y.substr(0, colon);
    std::string metric = colon == std::string::npos ? y : y.substr(colon + 1);

    Json doc = export_plot_series(store, require_ref(cmd), x, metric, stat);
    std::string out_path = flag_or(cmd, "out", "");
    if (!out_path.empty()) {
        write_file_atomic(fs::path(out_path), canonical_dump(doc));
    }
    return doc;
}

Json do_report(const Command& cmd) {
    Store store = open_store();
    if (require_kind(cmd) != ModuleKind::Experiment) {
        raise(ErrorCode::UsageError, "report expects an experiment:<report uid> target");
    }
    std::string text = render_validation_report(store, require_ref(cmd));
    std::string out_path = flag_or(cmd, "out", "");
    if (!out_path.empty()) {
        write_file_atomic(fs::path(out_path), text);
    }
    return Json{{"text", text}};
}

// Human-readable rendering of the per-verb JSON results.
void print_text(const std::string& action, const Json& result, std::ostream& out) {
    if (action == "find") {
        for (const auto& match : result["matches"]) {
            out << match["kind"].get<std::string>() << ":"
                << (match["alias"].get<std::string>().empty()
                        ? match["uid"].get<std::string>()
                        : match["alias"].get<std::string>())
                << "  uid=" << match["uid"].get<std::string>() << "  repo="
                << match["repo"].get<std::string>() << "\n";
        }
        out << result["matches"].size() << " match(es)\n";
        return;
    }
    if (action == "envscript") {
        out << result["script"].get<std::string>();
        return;
    }
    if (action == "table") {
        out << result["csv"].get<std::string>();
        return;
    }
    if (action == "report") {
        out << result["text"].get<std::string>();
        return;
    }
    out << result.dump(2) << "\n";
}

} // namespace

std::string usage_text() {
    return
        "usage: ckp <action> <module_kind>[:<entry>] [key=value]... [--flag[=value]]...\n"
        "\n"
        "actions:\n"
        "  add <kind>:<alias>          create an entry (--tags=a,b --meta=JSON|@file,\n"
        "                              extra key=value pairs merge into meta)\n"
        "  find <kind>[:<pattern>]     list entries (* wildcards, --tags filter)\n"
        "  show <kind>:<entry>         print one entry with its meta\n"
        "  rm <kind>:<entry>           remove an entry\n"
        "  detect soft:<descriptor>    probe the host for a soft (--dirs=a,b extra roots)\n"
        "  resolve soft:<name>         pick the best detected env (min=/max=/exact=)\n"
        "  envscript soft:<name>|pipeline:<ref>   emit POSIX export lines\n"
        "  install package:<ref>       fetch, verify, build, register (--prefix=dir)\n"
        "  run pipeline:<ref>          execute, record an experiment (choice overrides\n"
        "                              as key=value, --repetitions=N, --no-record)\n"
        "  explore pipeline:<ref>      run the tuning space (--strategy=, --seed=,\n"
        "                              --sample-count=)\n"
        "  replay experiment:<uid>     re-execute a recorded experiment\n"
        "  compare experiment:<ref> replay=<uid>  validate a replay (per-metric rules\n"
        "                              as <metric>=rel:0.05|abs:2|exact)\n"
        "  check-archival <manifest.json>         offline archival checks\n"
        "  table [experiment[:<pattern>]]         CSV export (--columns=..., --tags=...)\n"
        "  plot-data experiment:<exploration>     plot series (--x=<choice>, --y=stat:metric)\n"
        "  report experiment:<report uid>         render a validation report\n"
        "\n"
        "global flags: --json (machine-readable output), --repo=<name>, --out=<path>\n"
        "environment:  CKP_REPOS, CKP_SCRATCH, CKP_SEARCH_DIRS\n"
        "exit codes:   0 success, 1 operation error, 2 usage error\n";
}

std::string verb_usage_text(const std::string& verb) {
    if (verb == "run") {
        return "usage: ckp run pipeline:<ref> [key=value]... [--repetitions=N] [--no-record]\n"
               "       [--json]\n"
               "key=value pairs override the pipeline's declared choices.\n";
    }
    if (verb == "explore") {
        return "usage: ckp explore pipeline:<ref> [--strategy=exhaustive|random]\n"
               "       [--seed=N] [--sample-count=N] [--json]\n";
    }
    if (verb == "compare") {
        return "usage: ckp compare experiment:<reference> replay=<uid>\n"
               "       [<metric>=rel:<frac>[:<stat>]|abs:<value>[:<stat>]|exact]... [--json]\n";
    }
    return usage_text();
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    if (args.empty()) {
        err << usage_text();
        return kExitUsage;
    }
    if (args[0] == "--version") {
        out << "ckp " << CKP_VERSION_STRING << "\n";
        return kExitOk;
    }
    if (args[0] == "--help" || args[0] == "help") {
        out << usage_text();
        return kExitOk;
    }

    bool json = std::find(args.begin(), args.end(), "--json") != args.end();

    if (!kVerbs.contains(args[0])) {
        if (json) {
            Json error = Json{{"error", Json{{"code", "UsageError"},
                                             {"message", "unknown action '" + args[0] + "'"}}}};
            out << error.dump() << "\n";
        }
        err << "error: unknown action '" << args[0] << "'\n" << usage_text();
        return kExitUsage;
    }
    if (std::find(args.begin() + 1, args.end(), "--help") != args.end()) {
        out << verb_usage_text(args[0]);
        return kExitOk;
    }

    try {
        Command cmd = parse_command(args);
        Json result;
        if (cmd.action == "add") {
            result = do_add(cmd);
        } else if (cmd.action == "find") {
            result = do_find(cmd);
        } else if (cmd.action == "show") {
            result = do_show(cmd);
        } else if (cmd.action == "rm") {
            result = do_rm(cmd);
        } else if (cmd.action == "detect") {
            result = do_detect(cmd, err);
        } else if (cmd.action == "resolve") {
            result = do_resolve(cmd);
        } else if (cmd.action == "envscript") {
            result = do_envscript(cmd);
        } else if (cmd.action == "install") {
            result = do_install(cmd);
        } else if (cmd.action == "run") {
            result = do_run(cmd, err);
        } else if (cmd.action == "explore") {
            result = do_explore(cmd, err);
        } else if (cmd.action == "replay") {
            result = do_replay(cmd);
        } else if (cmd.action == "compare") {
            result = do_compare(cmd);
        } else if (cmd.action == "check-archival") {
            result = do_check_archival(cmd);
        } else if (cmd.action == "table") {
            result = do_table(cmd);
        } else if (cmd.action == "plot-data") {
            result = do_plot_data(cmd);
        } else if (cmd.action == "report") {
            result = do_report(cmd);
        } else {
            raise(ErrorCode::UsageError, "unknown action '" + cmd.action + "'");
        }

        if (json) {
            out << result.dump() << "\n";
        } else {
            print_text(cmd.action, result, out);
        }
        return kExitOk;
    } catch (const Error& e) {
        Json error = Json{{"code", std::string(to_string(e.code()))}, {"message", e.message()}};
        if (!e.detail().is_null()) {
            error["detail"] = e.detail();
        }
        if (json) {
            out << Json{{"error", error}}.dump() << "\n";
        }
        err << "error: " << to_string(e.code()) << ": " << e.message() << "\n";
        return e.code() == ErrorCode::UsageError ? kExitUsage : kExitOperationError;
    } catch (const std::exception& e) {
        if (json) {
            out << Json{{"error", Json{{"code", "InternalError"}, {"message", e.what()}}}}.dump()
                << "\n";
        }
        err << "error: InternalError: " << e.what() << "\n";
        return kExitOperationError;
    }
}

} // namespace ckp::cli
