#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lkgp/fitting.hpp"

namespace lkgp {

// Level-interval histogram edges: [0, 0.3), [0.3, 0.5), ..., [2.5, 2.7), [2.7, 3.0].
const std::vector<double>& interval_edges();
// Bin of `level` under interval_edges(); 3.0 lands in the last bin.
std::size_t interval_bin(double level);

struct DriverSummary {
  std::string driver_id;
  std::optional<double> true_level;
  std::optional<double> cgt_percent;
  std::optional<double> dgt_percent;
  std::size_t n_comparisons = 0;
};

struct LevelPoint {
  std::string driver_id;
  StateId state = 0;
  double l_opt = 0.0;
  double crit_opt = 0.0;
  std::optional<double> true_level;
};

// Success-percent grid, CGT on rows and DGT on columns, 5-point cells.
inline constexpr int kGridCells = 20;
using SuccessGrid = std::array<std::array<std::size_t, kGridCells>, kGridCells>;
int grid_cell(double percent);

struct MethodSummary {
  std::size_t drivers = 0;  // drivers with a defined percent
  double mean_percent = 0.0;
};

struct ReportBundle {
  std::vector<DriverSummary> drivers;
  std::vector<LevelPoint> levels;  // successful CGT fits only
  std::vector<std::size_t> intervals;
  SuccessGrid grid{};
  MethodSummary cgt;
  MethodSummary dgt;
  std::size_t undefined_drivers = 0;  // no comparison in either method
  // Per true level: median |l_opt - l*| over successful fits.
  std::map<double, double> median_level_error;
};

// Drivers are matched by id; `truth` maps driver id to its generating level.
ReportBundle build_report(std::span<const DriverReport> cgt, std::span<const DriverReport> dgt,
                          const std::map<std::string, double>& truth = {});

nlohmann::json summary_json(const ReportBundle& b);

// Writes summary.json, fig2_success.csv, fig3_grid.csv, fig4_scatter.csv,
// fig5_intervals.csv and table1.csv into `dir`.
void write_report(const ReportBundle& b, const std::filesystem::path& dir);

}  // namespace lkgp
