#pragma once

#include <string>
#include <vector>

#include "ckp/json_util.hpp"
#include "ckp/store.hpp"

namespace ckp {

/// Column selectors for export_table:
///   uid | alias | status | choice:<key> | functional:<metric> | <stat>:<metric>
/// where <stat> is one of min, max, mean, median, std, count.
///
/// Output is RFC-4180-style quoted CSV with LF line endings, one row per
/// experiment record ordered by uid; missing metrics render as empty
/// cells. Validation reports and exploration parents are skipped.
std::string export_table(const Store& store, const Query& query,
                         const std::vector<std::string>& columns);

/// Plot-ready series for one exploration: one series per distinct
/// combination of the remaining choice keys, points ordered by the x
/// dimension's declared value order, failed points omitted.
/// Returns {"series":[{label,x,y,y_err,metadata},...]}.
Json export_plot_series(const Store& store, const std::string& exploration_ref,
                        const std::string& x_key, const std::string& metric,
                        const std::string& statistic = "mean");

/// Fixed-layout text rendering of a persisted validation report:
/// badge line, per-metric table, environment diff. Deterministic bytes
/// for identical input.
std::string render_validation_report(const Store& store, const std::string& report_ref);

} // namespace ckp
