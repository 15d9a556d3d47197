#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ckp/experiment.hpp"
#include "ckp/pipeline.hpp"
#include "ckp/store.hpp"

namespace ckp {

struct TuningDimension {
    std::string choice_key;
    std::vector<std::string> values; // non-empty, all distinct
};

struct ExhaustiveStrategy {};

struct RandomStrategy {
    std::int64_t sample_count = 0;
    std::uint64_t seed = 0;
};

/// The explored choice space: ordered dimensions plus an enumeration
/// strategy. Random enumeration is seeded and draws without replacement,
/// so a (space, seed) pair always yields the identical point sequence.
struct TuningSpace {
    std::vector<TuningDimension> dimensions;
    std::variant<ExhaustiveStrategy, RandomStrategy> strategy;

    void validate() const;
    std::uint64_t point_count() const; // product of dimension sizes

    Json to_json() const;
    static TuningSpace from_json(const Json& doc);
};

enum class Direction { Minimize, Maximize };

struct Objective {
    std::string metric;
    Direction direction = Direction::Minimize;
    Statistic statistic = Statistic::Mean;
};

struct ParetoObjectives {
    std::vector<Objective> objectives; // at least one

    void validate() const;
    Json to_json() const;
    static ParetoObjectives from_json(const Json& doc);
};

/// One choice assignment, keys in dimension order.
using ChoicePoint = std::vector<std::pair<std::string, std::string>>;

/// Exhaustive: lexicographic cartesian product in dimension order (first
/// dimension varies slowest). Random: sample_count draws without
/// replacement, in draw order.
std::vector<ChoicePoint> enumerate_points(const TuningSpace& space);

/// Non-dominated subset in input order. A point dominates another iff it
/// is at least as good on every objective and strictly better on at least
/// one; duplicate-coordinate points are all retained.
std::vector<std::size_t> pareto_filter(const std::vector<std::map<std::string, double>>& points,
                                       const ParetoObjectives& objectives);

struct ExplorePoint {
    std::string experiment_uid;
    ChoicePoint choices;
    std::string status; // "success" | "failed"
    std::map<std::string, double> objective_values;
};

struct ExploreResult {
    std::string exploration_uid; // parent entry grouping the points
    std::vector<ExplorePoint> points;
    std::vector<std::string> frontier_uids; // subset of points, input order
};

/// Executes the pipeline once per point, persisting one experiment record
/// per point tagged with the exploration uid. A failing point is recorded
/// with status=failed and excluded from the frontier; exploration
/// continues.
ExploreResult explore(Store& store, const ComponentEntry& pipeline_entry, const TuningSpace& space,
                      const ParetoObjectives& objectives, const ExecuteContext& ctx);

/// Reads the `tuning` key of a pipeline entry's meta.
std::pair<TuningSpace, ParetoObjectives> load_tuning(const ComponentEntry& pipeline_entry);

} // namespace ckp
