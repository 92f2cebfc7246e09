#include "lkgp/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <fmt/os.h>

#include "lkgp/error.hpp"

namespace lkgp {

const std::vector<double>& interval_edges() {
  static const std::vector<double> edges{0.0, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5, 1.7, 1.9, 2.1, 2.3, 2.5, 2.7, 3.0};
  return edges;
}

std::size_t interval_bin(double level) {
  const auto& e = interval_edges();
  if (!(level >= e.front() && level <= e.back())) throw DomainError(fmt::format("level {} outside [0, 3]", level));
  const auto it = std::upper_bound(e.begin(), e.end(), level);
  return std::min(static_cast<std::size_t>(it - e.begin()) - 1, e.size() - 2);
}

int grid_cell(double percent) {
  if (!(percent >= 0.0 && percent <= 100.0)) throw DomainError(fmt::format("percent {} outside [0, 100]", percent));
  return std::min(static_cast<int>(percent / 5.0), kGridCells - 1);
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string opt(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

ReportBundle build_report(std::span<const DriverReport> cgt, std::span<const DriverReport> dgt,
                          const std::map<std::string, double>& truth) {
  if (cgt.empty()) throw InputError("report: no driver reports");
  std::map<std::string, const DriverReport*> dgt_by_id;
  for (const auto& r : dgt) dgt_by_id[r.driver_id] = &r;

  ReportBundle b;
  b.intervals.assign(interval_edges().size() - 1, 0);
  std::map<double, std::vector<double>> errors;
  double cgt_sum = 0.0, dgt_sum = 0.0;

  for (const auto& r : cgt) {
    DriverSummary d;
    d.driver_id = r.driver_id;
    d.cgt_percent = r.percent;
    d.n_comparisons = r.n_comparisons;
    if (const auto it = truth.find(r.driver_id); it != truth.end()) d.true_level = it->second;
    if (const auto it = dgt_by_id.find(r.driver_id); it != dgt_by_id.end()) d.dgt_percent = it->second->percent;

    if (d.cgt_percent) {
      ++b.cgt.drivers;
      cgt_sum += *d.cgt_percent;
    }
    if (d.dgt_percent) {
      ++b.dgt.drivers;
      dgt_sum += *d.dgt_percent;
    }
    if (d.cgt_percent && d.dgt_percent)
      ++b.grid[static_cast<std::size_t>(grid_cell(*d.cgt_percent))][static_cast<std::size_t>(grid_cell(*d.dgt_percent))];
    else
      ++b.undefined_drivers;

    for (const auto& f : r.results) {
      if (!f.success) continue;  // rejected fits are left out of the level plots
      b.levels.push_back({r.driver_id, f.state, f.l_opt, f.crit_opt, d.true_level});
      ++b.intervals[interval_bin(f.l_opt)];
      if (d.true_level) errors[*d.true_level].push_back(std::abs(f.l_opt - *d.true_level));
    }
    b.drivers.push_back(std::move(d));
  }
  if (b.cgt.drivers) b.cgt.mean_percent = cgt_sum / static_cast<double>(b.cgt.drivers);
  if (b.dgt.drivers) b.dgt.mean_percent = dgt_sum / static_cast<double>(b.dgt.drivers);
  for (auto& [level, e] : errors) b.median_level_error[level] = median(std::move(e));
  return b;
}

nlohmann::json summary_json(const ReportBundle& b) {
  nlohmann::json j;
  j["drivers"] = b.drivers.size();
  j["undefined_drivers"] = b.undefined_drivers;
  j["cgt"] = {{"drivers", b.cgt.drivers}, {"mean_percent", b.cgt.mean_percent}};
  j["dgt"] = {{"drivers", b.dgt.drivers}, {"mean_percent", b.dgt.mean_percent}};
  j["mean_difference"] = b.cgt.mean_percent - b.dgt.mean_percent;
  j["successful_fits"] = b.levels.size();
  auto intervals = nlohmann::json::array();
  const auto& e = interval_edges();
  for (std::size_t i = 0; i < b.intervals.size(); ++i)
    intervals.push_back({{"lo", e[i]}, {"hi", e[i + 1]}, {"count", b.intervals[i]}});
  j["intervals"] = std::move(intervals);
  auto rec = nlohmann::json::array();
  for (const auto& [level, err] : b.median_level_error) rec.push_back({{"true_level", level}, {"median_abs_error", err}});
  j["level_recovery"] = std::move(rec);
  auto drivers = nlohmann::json::array();
  for (const auto& d : b.drivers)
    drivers.push_back({{"driver_id", d.driver_id},
                       {"true_level", opt_json(d.true_level)},
                       {"cgt_percent", opt_json(d.cgt_percent)},
                       {"dgt_percent", opt_json(d.dgt_percent)},
                       {"n_comparisons", d.n_comparisons}});
  j["per_driver"] = std::move(drivers);
  return j;
}

void write_report(const ReportBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "summary.json");
    if (!out) throw InputError("cannot write " + (dir / "summary.json").string());
    out << summary_json(b).dump(2) << '\n';
  }
  auto f2 = fmt::output_file((dir / "fig2_success.csv").string());
  f2.print("driver_id,true_level,cgt_percent,dgt_percent,n_comparisons\n");
  for (const auto& d : b.drivers)
    f2.print("{},{},{},{},{}\n", d.driver_id, opt(d.true_level), opt(d.cgt_percent), opt(d.dgt_percent), d.n_comparisons);
  f2.close();

  auto f3 = fmt::output_file((dir / "fig3_grid.csv").string());
  f3.print("cgt_lo,cgt_hi,dgt_lo,dgt_hi,count\n");
  for (int i = 0; i < kGridCells; ++i)
    for (int j = 0; j < kGridCells; ++j)
      f3.print("{},{},{},{},{}\n", 5 * i, 5 * (i + 1), 5 * j, 5 * (j + 1),
               b.grid[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
  f3.close();

  auto f4 = fmt::output_file((dir / "fig4_scatter.csv").string());
  f4.print("driver_id,state_id,l_opt,crit_opt,true_level\n");
  for (const auto& p : b.levels)
    f4.print("{},{},{},{},{}\n", p.driver_id, p.state, p.l_opt, p.crit_opt, opt(p.true_level));
  f4.close();

  auto f5 = fmt::output_file((dir / "fig5_intervals.csv").string());
  f5.print("lo,hi,count,fraction\n");
  const auto& e = interval_edges();
  for (std::size_t i = 0; i < b.intervals.size(); ++i)
    f5.print("{},{},{},{}\n", e[i], e[i + 1], b.intervals[i],
             b.levels.empty() ? 0.0 : static_cast<double>(b.intervals[i]) / static_cast<double>(b.levels.size()));
  f5.close();

  auto t1 = fmt::output_file((dir / "table1.csv").string());
  t1.print("method,drivers,mean_percent\n");
  t1.print("DGT,{},{}\n", b.dgt.drivers, b.dgt.mean_percent);
  t1.print("CGT,{},{}\n", b.cgt.drivers, b.cgt.mean_percent);
  t1.close();
}

}  // namespace lkgp
