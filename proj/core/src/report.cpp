#include "ckp/report.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "ckp/autotune.hpp"
#include "ckp/error.hpp"
#include "ckp/experiment.hpp"
#include "ckp/pipeline.hpp"

namespace ckp {

namespace {

std::string csv_quote(const std::string& field) {
    bool needs_quotes = field.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs_quotes) {
        return field;
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

std::string number_str(double value) {
    return Json(value).dump(); // shortest round-trip representation
}

std::string metric_cell(const MetricValue& value) {
    if (std::holds_alternative<double>(value)) {
        return metric_value_to_json(value).dump();
    }
    return std::get<std::string>(value);
}

struct ColumnSelector {
    enum class Kind { Uid, Alias, Status, Choice, Functional, Stat } kind;
    std::string key;       // choice key / metric name
    Statistic stat = Statistic::Mean;
};

ColumnSelector parse_column(const std::string& selector) {
    ColumnSelector col{ColumnSelector::Kind::Uid, "", Statistic::Mean};
    if (selector == "uid") {
        col.kind = ColumnSelector::Kind::Uid;
        return col;
    }
    if (selector == "alias") {
        col.kind = ColumnSelector::Kind::Alias;
        return col;
    }
    if (selector == "status") {
        col.kind = ColumnSelector::Kind::Status;
        return col;
    }
    size_t colon = selector.find(':');
    if (colon != std::string::npos) {
        std::string head = selector.substr(0, colon);
        std::string tail = selector.substr(colon + 1);
        if (!tail.empty()) {
            if (head == "choice") {
                col.kind = ColumnSelector::Kind::Choice;
                col.key = tail;
                return col;
            }
            if (head == "functional") {
                col.kind = ColumnSelector::Kind::Functional;
                col.key = tail;
                return col;
            }
            if (auto stat = parse_statistic(head)) {
                col.kind = ColumnSelector::Kind::Stat;
                col.key = tail;
                col.stat = *stat;
                return col;
            }
        }
    }
    raise(ErrorCode::InvalidColumn, "unknown column selector '" + selector + "'");
}

std::string pad(const std::string& text, size_t width) {
    if (text.size() >= width) {
        return text + " ";
    }
    return text + std::string(width - text.size(), ' ');
}

std::string json_cell(const Json& value) {
    if (value.is_null()) {
        return "-";
    }
    if (value.is_string()) {
        return value.get<std::string>();
    }
    return value.dump();
}

} // namespace

std::string export_table(const Store& store, const Query& query,
                         const std::vector<std::string>& columns) {
    std::vector<ColumnSelector> selectors;
    selectors.reserve(columns.size());
    for (const auto& column : columns) {
        selectors.push_back(parse_column(column));
    }

    Query q = query;
    q.kind = ModuleKind::Experiment;
    std::vector<ComponentEntry> entries = store.find_entries(q);
    entries.erase(std::remove_if(entries.begin(), entries.end(),
                                 [](const ComponentEntry& e) {
                                     return !e.meta.contains("record");
                                 }),
                  entries.end());
    std::sort(entries.begin(), entries.end(),
              [](const ComponentEntry& a, const ComponentEntry& b) {
                  return a.id.uid < b.id.uid;
              });

    std::string csv;
    for (size_t i = 0; i < columns.size(); ++i) {
        if (i > 0) {
            csv += ',';
        }
        csv += csv_quote(columns[i]);
    }
    csv += '\n';

    for (const auto& entry : entries) {
        ExperimentRecord record = ExperimentRecord::from_entry(entry);
        for (size_t i = 0; i < selectors.size(); ++i) {
            if (i > 0) {
                csv += ',';
            }
            const auto& col = selectors[i];
            std::string cell;
            switch (col.kind) {
            case ColumnSelector::Kind::Uid:
                cell = entry.id.uid;
                break;
            case ColumnSelector::Kind::Alias:
                cell = entry.id.alias;
                break;
            case ColumnSelector::Kind::Status:
                cell = record.status;
                break;
            case ColumnSelector::Kind::Choice: {
                auto it = record.effective_choices.find(col.key);
                cell = it == record.effective_choices.end() ? "" : it->second;
                break;
            }
            case ColumnSelector::Kind::Functional: {
                auto it = record.functional.find(col.key);
                cell = it == record.functional.end() ? "" : metric_cell(it->second);
                break;
            }
            case ColumnSelector::Kind::Stat: {
                auto it = record.aggregated.find(col.key);
                cell = it == record.aggregated.end() ? ""
                                                     : number_str(stat_of(it->second, col.stat));
                break;
            }
            }
            csv += csv_quote(cell);
        }
        csv += '\n';
    }
    return csv;
}

Json export_plot_series(const Store& store, const std::string& exploration_ref,
                        const std::string& x_key, const std::string& metric,
                        const std::string& statistic) {
    ComponentEntry parent = store.get_entry(ModuleKind::Experiment, exploration_ref);
    if (!parent.meta.contains("exploration")) {
        raise(ErrorCode::NotFound,
              "experiment:" + exploration_ref + " is not an exploration parent");
    }
    auto stat = parse_statistic(statistic);
    if (!stat) {
        raise(ErrorCode::InvalidColumn, "unknown statistic '" + statistic + "'");
    }

    TuningSpace space = TuningSpace::from_json(parent.meta["exploration"]["space"]);
    const TuningDimension* x_dim = nullptr;
    for (const auto& dim : space.dimensions) {
        if (dim.choice_key == x_key) {
            x_dim = &dim;
        }
    }
    if (!x_dim) {
        raise(ErrorCode::InvalidAxis, "'" + x_key + "' is not a tuning dimension");
    }

    // point records are tagged with the exploration uid
    Query query;
    query.kind = ModuleKind::Experiment;
    query.tags = {parent.id.uid};
    std::vector<ComponentEntry> entries = store.find_entries(query);

    struct Point {
        std::string x;
        double y;
        double y_err;
    };
    std::map<std::string, std::vector<Point>> groups; // label -> points

    for (const auto& entry : entries) {
        if (!entry.meta.contains("record")) {
            continue;
        }
        ExperimentRecord record = ExperimentRecord::from_entry(entry);
        if (record.status != "success") {
            continue; // failed points are omitted
        }
        auto agg = record.aggregated.find(metric);
        if (agg == record.aggregated.end()) {
            raise(ErrorCode::InvalidColumn,
                  "metric '" + metric + "' is not aggregated in experiment:" + record.uid);
        }
        auto x_it = record.effective_choices.find(x_key);
        if (x_it == record.effective_choices.end()) {
            continue;
        }

        std::string label;
        for (const auto& dim : space.dimensions) {
            if (dim.choice_key == x_key) {
                continue;
            }
            auto it = record.effective_choices.find(dim.choice_key);
            if (it != record.effective_choices.end()) {
                label += (label.empty() ? "" : ",") + dim.choice_key + "=" + it->second;
            }
        }
        if (label.empty()) {
            label = "all";
        }
        groups[label].push_back(Point{x_it->second, stat_of(agg->second, *stat),
                                      agg->second.std});
    }

    // x ordering follows the dimension's declared value order
    std::map<std::string, size_t> x_order;
    for (size_t i = 0; i < x_dim->values.size(); ++i) {
        x_order[x_dim->values[i]] = i;
    }

    Json series = Json::array();
    for (auto& [label, points] : groups) {
        std::stable_sort(points.begin(), points.end(), [&](const Point& a, const Point& b) {
            auto ia = x_order.find(a.x);
            auto ib = x_order.find(b.x);
            size_t ra = ia == x_order.end() ? x_order.size() : ia->second;
            size_t rb = ib == x_order.end() ? x_order.size() : ib->second;
            return ra < rb;
        });
        Json x = Json::array();
        Json y = Json::array();
        Json y_err = Json::array();
        for (const auto& point : points) {
            x.push_back(point.x);
            y.push_back(point.y);
            y_err.push_back(point.y_err);
        }
        series.push_back(Json{{"label", label},
                              {"x", x},
                              {"y", y},
                              {"y_err", y_err},
                              {"metadata", Json{{"metric", metric},
                                                {"statistic", statistic},
                                                {"pipeline", parent.meta["exploration"].value(
                                                                 "pipeline_ref", "")}}}});
    }
    return Json{{"series", series}};
}

std::string render_validation_report(const Store& store, const std::string& report_ref) {
    ComponentEntry entry = store.get_entry(ModuleKind::Experiment, report_ref);
    if (!entry.meta.contains("validation_report")) {
        raise(ErrorCode::NotFound, "experiment:" + report_ref + " is not a validation report");
    }
    ValidationReport report = ValidationReport::from_json(entry.meta["validation_report"]);

    std::string text;
    text += "ckp validation report\n";
    text += "=====================\n";
    text += "reference: " + report.reference_uid + "\n";
    text += "replay:    " + report.replay_uid + "\n";
    text += "BADGE: " + report.badge + "\n";
    text += "\n";

    text += pad("metric", 24) + pad("reference", 18) + pad("replay", 18) + pad("rule", 22) +
            "result\n";
    text += std::string(24, '-') + " " + std::string(17, '-') + " " + std::string(17, '-') + " " +
            std::string(21, '-') + " ------\n";
    for (const auto& row : report.rows) {
        text += pad(row.metric, 24) + pad(json_cell(row.reference), 18) +
                pad(json_cell(row.replay), 18) + pad(row.rule, 22) +
                (row.pass ? "pass" : "FAIL") + "\n";
    }
    if (report.rows.empty()) {
        text += "(no comparable metrics)\n";
    }
    text += "\n";

    text += "environment diff\n";
    text += "----------------\n";
    bool changed = false;
    if (report.env_diff.is_object()) {
        for (const auto& dep : report.env_diff.value("dependencies", Json::array())) {
            std::string role = dep.value("role", "");
            Json ref = dep.value("reference", Json(nullptr));
            Json rep = dep.value("replay", Json(nullptr));
            auto describe = [](const Json& side) {
                if (side.is_null()) {
                    return std::string("(absent)");
                }
                return side.value("version", "") + " (" + side.value("install_path", "") + ")";
            };
            text += "CHANGED: dependency " + role + ": " + describe(ref) + " -> " +
                    describe(rep) + "\n";
            changed = true;
        }
        for (const auto& field : report.env_diff.value("platform", Json::array())) {
            text += "CHANGED: platform " + field.value("field", "") + ": " +
                    field.value("reference", "") + " -> " + field.value("replay", "") + "\n";
            changed = true;
        }
    }
    if (!changed) {
        text += "(no environment changes)\n";
    }
    return text;
}

} // namespace ckp
