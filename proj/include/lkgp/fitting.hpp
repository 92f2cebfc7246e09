#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lkgp/gp.hpp"
#include "lkgp/policy.hpp"

namespace lkgp {

// Per-driver, per-state action counts.
struct DriverRecord {
  std::string driver_id;
  std::map<StateId, std::vector<std::uint64_t>> counts;

  std::uint64_t n_visits(StateId s) const;
  std::uint64_t total_samples() const;
};

// Frequencies with every entry floored at `floor` and renormalized.
Policy empirical_policy(std::span<const std::uint64_t> counts, double floor = 0.01);

// Asymptotic Kolmogorov distribution tail Q_KS(lambda) = 2 sum_j (-1)^(j-1) exp(-2 j^2 lambda^2).
double kolmogorov_q(double lambda);

enum class KsMode { kOneSample, kTwoSample };

struct KsConfig {
  KsMode mode = KsMode::kOneSample;
  std::uint64_t model_samples = 1000;  // reference sample size in two-sample mode
};

struct KsResult {
  double statistic = 0.0;  // max |CDF_model - CDF_data| over action prefixes
  double p_value = 1.0;    // the "critical value" score; higher is a better fit
};

// Discrete K-S over the serialized action order. p-value uses Stephens'
// small-sample correction: Q_KS(D (sqrt(n) + 0.12 + 0.11 / sqrt(n))).
KsResult ks_compare(const Policy& model, const Policy& data, std::uint64_t n_eff, const KsConfig& cfg = {});

struct SAConfig {
  double initial_temperature = 2.0;
  double cooling = 0.90;
  int max_steps = 50;
  double neighbor_scale = 0.75;  // proposal sd = neighbor_scale * T / T0
  std::vector<double> restart_levels{0.0, 1.0, 2.0, 3.0};
  double min_level = 0.0;
  double max_level = 3.0;
  // Accept with exp(-(cv_new - cv) / T) exactly as printed in the original
  // algorithm instead of the standard exp(-(cv - cv_new) / T).
  bool printed_acceptance = false;
  // Return the best accepted (level, cv) rather than the final chain state.
  bool track_best = true;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const SAConfig& c);
void from_json(const nlohmann::json& j, SAConfig& c);

struct SaResult {
  double level = 0.0;
  double cv = 0.0;
  double final_level = 0.0;
  double final_cv = 0.0;
};

// Model policy at `level`: GP predictive mean after shift-normalization.
Policy model_policy(const StateGP& gp, double level);

// Simulated-annealing search over the level axis for the best K-S score.
SaResult sa_fit_level(const StateGP& gp, const Policy& data, std::uint64_t n_eff, double init_level,
                      const SAConfig& cfg, std::uint64_t stream_seed, const KsConfig& ks = {});

struct FitResult {
  StateId state = 0;
  std::uint64_t n_visits = 0;
  double l_opt = 0.0;
  double crit_opt = 0.0;
  bool success = false;
  std::vector<std::pair<double, double>> restarts;  // (l_j, criticalvalue_j)
};

struct DriverReport {
  std::string driver_id;
  std::size_t n_comparisons = 0;
  std::size_t n_success = 0;
  std::optional<double> percent;  // undefined when there are no comparisons
  std::vector<FitResult> results;
};

nlohmann::json driver_report_to_json(const DriverReport& r);
DriverReport driver_report_from_json(const nlohmann::json& j);

struct CompareConfig {
  std::uint64_t n_th = 30;
  double theta = 0.05;
  double prob_floor = 0.01;
  SAConfig sa;
  KsConfig ks;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const CompareConfig& c);
void from_json(const nlohmann::json& j, CompareConfig& c);

// Continuous-level comparison: for every state with n_visits >= n_th, fit the
// level with one SA run per restart level and keep the best critical value.
DriverReport compare_driver(const DriverRecord& record, GpCache& models, const CompareConfig& cfg);

// Discrete baseline: candidate levels are exactly the training levels and
// their discrete policies; no search.
DriverReport compare_driver_dgt(const DriverRecord& record, GpCache& models, const CompareConfig& cfg);

enum class Method { kContinuous, kDiscrete };

// Runs the comparison for every record on `jobs` worker threads; output order
// matches input order.
std::vector<DriverReport> compare_drivers(std::span<const DriverRecord> records, GpCache& models,
                                          const CompareConfig& cfg, Method method, int jobs = 1);

}  // namespace lkgp
