#include "ckp/autotune.hpp"

#include <algorithm>
#include <ctime>
#include <limits>
#include <random>
#include <set>

#include "ckp/error.hpp"

namespace ckp {

namespace {

// Bounded uniform draw by rejection, so seeded sequences are identical
// across standard library implementations (uniform_int_distribution is not
// portable that way).
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                (std::numeric_limits<std::uint64_t>::max() % n);
    std::uint64_t x = rng();
    while (x >= limit) {
        x = rng();
    }
    return x % n;
}

ChoicePoint decode_point(const TuningSpace& space, std::uint64_t index) {
    // mixed-radix decode, first dimension is the most significant digit
    ChoicePoint point(space.dimensions.size());
    for (size_t d = space.dimensions.size(); d-- > 0;) {
        const auto& dim = space.dimensions[d];
        std::uint64_t size = dim.values.size();
        point[d] = {dim.choice_key, dim.values[static_cast<size_t>(index % size)]};
        index /= size;
    }
    return point;
}

constexpr std::uint64_t kShuffleCutover = 1000000;

} // namespace

void TuningSpace::validate() const {
    std::set<std::string> keys;
    for (const auto& dim : dimensions) {
        if (dim.choice_key.empty()) {
            raise(ErrorCode::InvalidSpace, "dimension with empty choice key");
        }
        if (!keys.insert(dim.choice_key).second) {
            raise(ErrorCode::InvalidSpace, "duplicate dimension '" + dim.choice_key + "'");
        }
        if (dim.values.empty()) {
            raise(ErrorCode::InvalidSpace, "dimension '" + dim.choice_key + "' has no values");
        }
        std::set<std::string> distinct(dim.values.begin(), dim.values.end());
        if (distinct.size() != dim.values.size()) {
            raise(ErrorCode::InvalidSpace,
                  "dimension '" + dim.choice_key + "' has duplicate values");
        }
    }
    if (const auto* random = std::get_if<RandomStrategy>(&strategy)) {
        if (random->sample_count < 0) {
            raise(ErrorCode::InvalidSpace, "sample_count must be >= 0");
        }
        if (static_cast<std::uint64_t>(random->sample_count) > point_count()) {
            raise(ErrorCode::InvalidSpace,
                  "sample_count " + std::to_string(random->sample_count) +
                      " exceeds space size " + std::to_string(point_count()));
        }
    }
}

std::uint64_t TuningSpace::point_count() const {
    std::uint64_t product = 1;
    for (const auto& dim : dimensions) {
        product *= dim.values.size();
    }
    return product;
}

Json TuningSpace::to_json() const {
    Json dims = Json::array();
    for (const auto& dim : dimensions) {
        dims.push_back(Json{{"key", dim.choice_key}, {"values", dim.values}});
    }
    Json doc;
    doc["dimensions"] = dims;
    if (const auto* random = std::get_if<RandomStrategy>(&strategy)) {
        doc["strategy"] = Json{{"random", Json{{"sample_count", random->sample_count},
                                               {"seed", random->seed}}}};
    } else {
        doc["strategy"] = "exhaustive";
    }
    return doc;
}

TuningSpace TuningSpace::from_json(const Json& doc) {
    TuningSpace space;
    for (const auto& d : doc.value("dimensions", Json::array())) {
        TuningDimension dim;
        dim.choice_key = d.value("key", "");
        for (const auto& v : d.value("values", Json::array())) {
            dim.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        }
        space.dimensions.push_back(std::move(dim));
    }
    if (doc.contains("strategy") && doc["strategy"].is_object() &&
        doc["strategy"].contains("random")) {
        RandomStrategy random;
        random.sample_count = doc["strategy"]["random"].value("sample_count", std::int64_t{0});
        random.seed = doc["strategy"]["random"].value("seed", std::uint64_t{0});
        space.strategy = random;
    } else {
        space.strategy = ExhaustiveStrategy{};
    }
    space.validate();
    return space;
}

void ParetoObjectives::validate() const {
    if (objectives.empty()) {
        raise(ErrorCode::InvalidSpace, "at least one objective is required");
    }
    std::set<std::string> seen;
    for (const auto& objective : objectives) {
        if (objective.metric.empty()) {
            raise(ErrorCode::InvalidSpace, "objective with empty metric");
        }
        std::string key = objective.metric + ":" + std::string(to_string(objective.statistic));
        if (!seen.insert(key).second) {
            raise(ErrorCode::InvalidSpace, "duplicate objective " + key);
        }
    }
}

Json ParetoObjectives::to_json() const {
    Json doc = Json::array();
    for (const auto& objective : objectives) {
        doc.push_back(Json{
            {"metric", objective.metric},
            {"direction", objective.direction == Direction::Minimize ? "minimize" : "maximize"},
            {"statistic", std::string(to_string(objective.statistic))}});
    }
    return doc;
}

ParetoObjectives ParetoObjectives::from_json(const Json& doc) {
    ParetoObjectives objectives;
    for (const auto& o : doc) {
        Objective objective;
        objective.metric = o.value("metric", "");
        std::string direction = o.value("direction", "minimize");
        if (direction == "minimize") {
            objective.direction = Direction::Minimize;
        } else if (direction == "maximize") {
            objective.direction = Direction::Maximize;
        } else {
            raise(ErrorCode::InvalidSpace, "direction must be minimize or maximize");
        }
        auto stat = parse_statistic(o.value("statistic", "mean"));
        if (!stat) {
            raise(ErrorCode::InvalidSpace,
                  "unknown statistic '" + o.value("statistic", "") + "'");
        }
        objective.statistic = *stat;
        objectives.objectives.push_back(std::move(objective));
    }
    objectives.validate();
    return objectives;
}

std::vector<ChoicePoint> enumerate_points(const TuningSpace& space) {
    space.validate();
    const std::uint64_t total = space.point_count();

    std::vector<ChoicePoint> points;
    if (const auto* random = std::get_if<RandomStrategy>(&space.strategy)) {
        const auto wanted = static_cast<std::uint64_t>(random->sample_count);
        std::mt19937_64 rng(random->seed);
        std::vector<std::uint64_t> indices;
        indices.reserve(wanted);
        if (total <= kShuffleCutover) {
            // exact: seeded Fisher-Yates over the full index space
            std::vector<std::uint64_t> all(total);
            for (std::uint64_t i = 0; i < total; ++i) {
                all[i] = i;
            }
            for (std::uint64_t i = total; i > 1; --i) {
                std::swap(all[i - 1], all[bounded(rng, i)]);
            }
            indices.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(wanted));
        } else {
            // large spaces: seeded rejection sampling without replacement
            std::set<std::uint64_t> used;
            while (indices.size() < wanted) {
                std::uint64_t candidate = bounded(rng, total);
                if (used.insert(candidate).second) {
                    indices.push_back(candidate);
                }
            }
        }
        points.reserve(indices.size());
        for (std::uint64_t index : indices) {
            points.push_back(decode_point(space, index));
        }
    } else {
        points.reserve(total);
        for (std::uint64_t index = 0; index < total; ++index) {
            points.push_back(decode_point(space, index));
        }
    }
    return points;
}

std::vector<std::size_t> pareto_filter(const std::vector<std::map<std::string, double>>& points,
                                       const ParetoObjectives& objectives) {
    objectives.validate();

    // normalize to cost vectors: lower is better on every axis
    std::vector<std::vector<double>> costs(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        costs[i].reserve(objectives.objectives.size());
        for (const auto& objective : objectives.objectives) {
            auto it = points[i].find(objective.metric);
            if (it == points[i].end()) {
                raise(ErrorCode::IncomparablePoint,
                      "point " + std::to_string(i) + " lacks metric '" + objective.metric + "'",
                      Json{{"point", i}, {"metric", objective.metric}});
            }
            costs[i].push_back(objective.direction == Direction::Minimize ? it->second
                                                                          : -it->second);
        }
    }

    auto dominates = [&](size_t a, size_t b) {
        bool strictly_better = false;
        for (size_t k = 0; k < costs[a].size(); ++k) {
            if (costs[a][k] > costs[b][k]) {
                return false;
            }
            if (costs[a][k] < costs[b][k]) {
                strictly_better = true;
            }
        }
        return strictly_better;
    };

    // incremental non-dominated archive
    std::vector<size_t> archive;
    for (size_t i = 0; i < points.size(); ++i) {
        bool dominated = false;
        for (size_t j : archive) {
            if (dominates(j, i)) {
                dominated = true;
                break;
            }
        }
        if (dominated) {
            continue;
        }
        archive.erase(std::remove_if(archive.begin(), archive.end(),
                                     [&](size_t j) { return dominates(i, j); }),
                      archive.end());
        archive.push_back(i);
    }
    std::sort(archive.begin(), archive.end()); // restore input order
    return archive;
}

ExploreResult explore(Store& store, const ComponentEntry& pipeline_entry, const TuningSpace& space,
                      const ParetoObjectives& objectives, const ExecuteContext& ctx) {
    PipelineDefinition def = load_pipeline(pipeline_entry);
    space.validate();
    objectives.validate();

    for (const auto& dim : space.dimensions) {
        if (!def.choices.contains(dim.choice_key)) {
            raise(ErrorCode::InvalidSpace,
                  "tuning dimension '" + dim.choice_key + "' is not a pipeline choice");
        }
    }
    {
        auto perf = def.effective_performance_keys();
        for (const auto& objective : objectives.objectives) {
            if (std::find(perf.begin(), perf.end(), objective.metric) == perf.end()) {
                raise(ErrorCode::InvalidSpace,
                      "objective metric '" + objective.metric +
                          "' is not a performance key of the pipeline");
            }
        }
    }

    std::vector<ChoicePoint> points = enumerate_points(space);

    std::optional<std::int64_t> seed;
    if (const auto* random = std::get_if<RandomStrategy>(&space.strategy)) {
        seed = static_cast<std::int64_t>(random->seed);
    }

    // parent entry reserves the exploration id and freezes the space
    Json parent_meta =
        Json{{"exploration", Json{{"pipeline_uid", pipeline_entry.id.uid},
                                  {"pipeline_ref", pipeline_entry.ref()},
                                  {"space", space.to_json()},
                                  {"objectives", objectives.to_json()},
                                  {"created_at", static_cast<std::int64_t>(::time(nullptr))}}}};
    ComponentEntry parent = store.add_entry(pipeline_entry.repo, ModuleKind::Experiment, "",
                                            {"exploration"}, parent_meta);

    ExploreResult result;
    result.exploration_uid = parent.id.uid;

    std::vector<std::map<std::string, double>> frontier_inputs;
    std::vector<size_t> frontier_point_index; // maps frontier input -> result.points index

    for (const auto& point : points) {
        std::map<std::string, std::string> overrides(point.begin(), point.end());

        RecordContext rctx;
        rctx.exploration_id = parent.id.uid;
        rctx.seed = seed;
        rctx.started_at = static_cast<std::int64_t>(::time(nullptr));
        ExecutionOutcome outcome = execute(def, overrides, ctx);
        rctx.finished_at = static_cast<std::int64_t>(::time(nullptr));

        ComponentEntry entry = record(store, pipeline_entry, def, outcome, rctx);

        ExplorePoint ep;
        ep.experiment_uid = entry.id.uid;
        ep.choices = point;
        ep.status = outcome.ok() ? "success" : "failed";
        if (outcome.ok()) {
            std::map<std::string, double> values;
            for (const auto& objective : objectives.objectives) {
                values[objective.metric + ":" + std::string(to_string(objective.statistic))] =
                    stat_of(outcome.state.aggregated.at(objective.metric), objective.statistic);
            }
            ep.objective_values = values;
            frontier_inputs.push_back(std::move(values));
            frontier_point_index.push_back(result.points.size());
        }
        result.points.push_back(std::move(ep));
    }

    // frontier over the (metric:statistic)-keyed objective values
    ParetoObjectives keyed = objectives;
    for (auto& objective : keyed.objectives) {
        objective.metric += ":" + std::string(to_string(objective.statistic));
    }
    for (size_t idx : pareto_filter(frontier_inputs, keyed)) {
        result.frontier_uids.push_back(result.points[frontier_point_index[idx]].experiment_uid);
    }
    return result;
}

std::pair<TuningSpace, ParetoObjectives> load_tuning(const ComponentEntry& pipeline_entry) {
    if (!pipeline_entry.meta.contains("tuning")) {
        raise(ErrorCode::InvalidSpace,
              "pipeline:" + pipeline_entry.ref() + " declares no tuning space");
    }
    const Json& doc = pipeline_entry.meta.at("tuning");
    TuningSpace space = TuningSpace::from_json(doc);
    ParetoObjectives objectives;
    if (doc.contains("objectives")) {
        objectives = ParetoObjectives::from_json(doc["objectives"]);
    } else {
        objectives.objectives.push_back(
            Objective{"wall_time_s", Direction::Minimize, Statistic::Mean});
    }
    return {std::move(space), std::move(objectives)};
}

} // namespace ckp
