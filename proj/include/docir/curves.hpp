// Learning curves from metrics streams: rolling means per seed, aggregated
// across seeds into a mean line with a min/max band.
#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace docir {

struct Series {
  std::vector<long> steps;
  std::vector<double> values;
};

/// Reads one field from the lines of the given kind, skipping nulls.
Series read_metric_series(const std::filesystem::path& metrics, const std::string& kind = "update",
                          const std::string& field = "success_rate");

/// Trailing mean over `window` points, one output per full window. A series
/// shorter than the window collapses to its overall mean.
Series rolling_mean(const Series& series, int window);

struct CurveBand {
  std::vector<long> steps;
  std::vector<double> mean;
  std::vector<double> min;
  std::vector<double> max;
};

/// Pointwise over seeds, truncated to the shortest series.
CurveBand aggregate_seeds(std::span<const Series> per_seed);

using CurveSet = std::map<std::string, CurveBand>;

void write_curves_csv(const std::filesystem::path& path, const CurveSet& curves);
std::string render_svg(const CurveSet& curves, const std::string& title, const std::string& y_label);

/// Expands a shell glob (sorted).
std::vector<std::filesystem::path> expand_glob(const std::string& pattern);

/// Groups metrics files by method, read from run.json next to each file
/// (falling back to the parent directory name), then writes PREFIX.csv and
/// PREFIX.svg.
CurveSet curves(const std::vector<std::filesystem::path>& metrics_files, const std::filesystem::path& out_prefix,
                int window = 50, const std::string& field = "success_rate");

}  // namespace docir
