#include "lkgp/fitting.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <thread>

#include "lkgp/error.hpp"
#include "lkgp/rng.hpp"

namespace lkgp {

std::uint64_t DriverRecord::n_visits(StateId s) const {
  const auto it = counts.find(s);
  if (it == counts.end()) return 0;
  return std::accumulate(it->second.begin(), it->second.end(), std::uint64_t{0});
}

std::uint64_t DriverRecord::total_samples() const {
  std::uint64_t n = 0;
  for (const auto& [s, c] : counts) n += std::accumulate(c.begin(), c.end(), std::uint64_t{0});
  return n;
}

Policy empirical_policy(std::span<const std::uint64_t> counts, double floor) {
  if (counts.empty()) throw InputError("empirical_policy: empty count vector");
  const auto total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  if (total == 0) throw InputError("empirical_policy: zero total count");
  Policy p{std::vector<double>(counts.size())};
  double sum = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    p.probs[i] = std::max(static_cast<double>(counts[i]) / static_cast<double>(total), floor);
    sum += p.probs[i];
  }
  for (auto& v : p.probs) v /= sum;
  return p;
}

double kolmogorov_q(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  double q;
  if (lambda < 1.18) {
    // Jacobi theta form: 1 - sqrt(2 pi)/lambda * sum_j exp(-(2j-1)^2 pi^2 / (8 lambda^2))
    const double y = std::exp(-std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda));
    const double y8 = std::pow(y, 8);
    const double s = y * (1.0 + y8 * (1.0 + y8 * y8 * (1.0 + y8 * y8 * y8)));
    q = 1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s;
  } else {
    const double x = std::exp(-2.0 * lambda * lambda);
    q = 2.0 * (x - std::pow(x, 4) + std::pow(x, 9) - std::pow(x, 16));
  }
  return std::clamp(q, 0.0, 1.0);
}

KsResult ks_compare(const Policy& model, const Policy& data, std::uint64_t n_eff, const KsConfig& cfg) {
  if (model.size() != data.size()) throw InputError("ks_compare: policies have different lengths");
  if (model.size() == 0) throw InputError("ks_compare: empty policies");
  if (n_eff == 0) throw InputError("ks_compare: n_eff must be positive");
  KsResult r;
  double cm = 0.0, cd = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    cm += model.probs[i];
    cd += data.probs[i];
    r.statistic = std::max(r.statistic, std::abs(cm - cd));
  }
  double n = static_cast<double>(n_eff);
  if (cfg.mode == KsMode::kTwoSample) {
    const double m = static_cast<double>(cfg.model_samples);
    n = n * m / (n + m);
  }
  const double sq = std::sqrt(n);
  r.p_value = kolmogorov_q(r.statistic * (sq + 0.12 + 0.11 / sq));
  return r;
}

void SAConfig::validate() const {
  if (!(initial_temperature > 0.0)) throw ConfigError("sa: initial temperature must be positive");
  if (!(cooling > 0.0 && cooling < 1.0)) throw ConfigError("sa: cooling factor must be in (0, 1)");
  if (max_steps < 1) throw ConfigError("sa: max_steps must be >= 1");
  if (!(neighbor_scale > 0.0)) throw ConfigError("sa: neighbor scale must be positive");
  if (restart_levels.empty()) throw ConfigError("sa: need at least one restart level");
  if (!(max_level > min_level)) throw ConfigError("sa: invalid level interval");
}

void to_json(nlohmann::json& j, const SAConfig& c) {
  j = nlohmann::json{{"initial_temperature", c.initial_temperature},
                     {"cooling", c.cooling},
                     {"max_steps", c.max_steps},
                     {"neighbor_scale", c.neighbor_scale},
                     {"restart_levels", c.restart_levels},
                     {"min_level", c.min_level},
                     {"max_level", c.max_level},
                     {"printed_acceptance", c.printed_acceptance},
                     {"track_best", c.track_best},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SAConfig& c) {
  c = SAConfig{};
  c.initial_temperature = j.value("initial_temperature", c.initial_temperature);
  c.cooling = j.value("cooling", c.cooling);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.neighbor_scale = j.value("neighbor_scale", c.neighbor_scale);
  c.restart_levels = j.value("restart_levels", c.restart_levels);
  c.min_level = j.value("min_level", c.min_level);
  c.max_level = j.value("max_level", c.max_level);
  c.printed_acceptance = j.value("printed_acceptance", c.printed_acceptance);
  c.track_best = j.value("track_best", c.track_best);
  c.seed = j.value("seed", c.seed);
  c.validate();
}

Policy model_policy(const StateGP& gp, double level) { return shift_normalize(gp.predict(level).mean); }

SaResult sa_fit_level(const StateGP& gp, const Policy& data, std::uint64_t n_eff, double init_level,
                      const SAConfig& cfg, std::uint64_t stream_seed, const KsConfig& ks) {
  cfg.validate();
  const double lo = std::max(cfg.min_level, gp.min_level());
  const double hi = std::min(cfg.max_level, gp.max_level());
  std::mt19937_64 rng(stream_seed);
  std::normal_distribution<double> step(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double temperature = cfg.initial_temperature;
  double level = std::clamp(init_level, lo, hi);
  double cv = ks_compare(model_policy(gp, level), data, n_eff, ks).p_value;
  SaResult best{level, cv, level, cv};

  for (int it = 0; it < cfg.max_steps; ++it) {
    const double sd = cfg.neighbor_scale * temperature / cfg.initial_temperature;
    const double candidate = std::clamp(level + sd * step(rng), lo, hi);
    const double cv_new = ks_compare(model_policy(gp, candidate), data, n_eff, ks).p_value;
    const double delta = cfg.printed_acceptance ? cv_new - cv : cv - cv_new;
    const double p_acc = std::exp(-delta / temperature);
    if (p_acc > unit(rng)) {
      level = candidate;
      cv = cv_new;
      if (cv > best.cv) {
        best.level = level;
        best.cv = cv;
      }
    }
    temperature *= cfg.cooling;
  }
  best.final_level = level;
  best.final_cv = cv;
  if (!cfg.track_best) {
    best.level = level;
    best.cv = cv;
  }
  return best;
}

namespace {

void finalize(DriverReport& r, double theta) {
  for (auto& f : r.results) {
    f.success = f.crit_opt > theta;
    if (f.success) ++r.n_success;
  }
  r.n_comparisons = r.results.size();
  if (r.n_comparisons > 0) r.percent = 100.0 * static_cast<double>(r.n_success) / static_cast<double>(r.n_comparisons);
}

FitResult pick_best(StateId s, std::uint64_t visits, std::vector<std::pair<double, double>> candidates) {
  FitResult f;
  f.state = s;
  f.n_visits = visits;
  f.restarts = std::move(candidates);
  // argmax over restarts; first one wins ties
  std::size_t best = 0;
  for (std::size_t j = 1; j < f.restarts.size(); ++j)
    if (f.restarts[j].second > f.restarts[best].second) best = j;
  f.l_opt = f.restarts[best].first;
  f.crit_opt = f.restarts[best].second;
  return f;
}

}  // namespace

DriverReport compare_driver(const DriverRecord& record, GpCache& models, const CompareConfig& cfg) {
  if (cfg.n_th < 1) throw InputError("compare_driver: n_th must be >= 1");
  DriverReport report;
  report.driver_id = record.driver_id;
  const std::uint64_t driver_hash = stable_hash(record.driver_id);
  for (const auto& [state, counts] : record.counts) {
    const auto visits = record.n_visits(state);
    if (visits < cfg.n_th) continue;
    const auto gp = models.get(state);
    const Policy data = empirical_policy(counts, cfg.prob_floor);
    std::vector<std::pair<double, double>> runs;
    for (std::size_t j = 0; j < cfg.sa.restart_levels.size(); ++j) {
      const auto seed = derive_seed({cfg.seed, driver_hash, state, j});
      const auto r = sa_fit_level(*gp, data, visits, cfg.sa.restart_levels[j], cfg.sa, seed, cfg.ks);
      runs.emplace_back(r.level, r.cv);
    }
    report.results.push_back(pick_best(state, visits, std::move(runs)));
  }
  finalize(report, cfg.theta);
  return report;
}

DriverReport compare_driver_dgt(const DriverRecord& record, GpCache& models, const CompareConfig& cfg) {
  if (cfg.n_th < 1) throw InputError("compare_driver_dgt: n_th must be >= 1");
  DriverReport report;
  report.driver_id = record.driver_id;
  for (const auto& [state, counts] : record.counts) {
    const auto visits = record.n_visits(state);
    if (visits < cfg.n_th) continue;
    const auto gp = models.get(state);
    const Policy data = empirical_policy(counts, cfg.prob_floor);
    std::vector<std::pair<double, double>> candidates;
    for (std::size_t k = 0; k < gp->levels().size(); ++k)
      candidates.emplace_back(gp->levels()[k], ks_compare(gp->policies()[k], data, visits, cfg.ks).p_value);
    report.results.push_back(pick_best(state, visits, std::move(candidates)));
  }
  finalize(report, cfg.theta);
  return report;
}

std::vector<DriverReport> compare_drivers(std::span<const DriverRecord> records, GpCache& models,
                                          const CompareConfig& cfg, Method method, int jobs) {
  std::vector<DriverReport> out(records.size());
  std::vector<std::exception_ptr> errors(records.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      try {
        out[i] = method == Method::kContinuous ? compare_driver(records[i], models, cfg)
                                               : compare_driver_dgt(records[i], models, cfg);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(records.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

nlohmann::json driver_report_to_json(const DriverReport& r) {
  nlohmann::json j;
  j["driver_id"] = r.driver_id;
  j["n_comparisons"] = r.n_comparisons;
  j["n_success"] = r.n_success;
  j["percent"] = r.percent ? nlohmann::json(*r.percent) : nlohmann::json(nullptr);
  auto states = nlohmann::json::array();
  for (const auto& f : r.results) {
    auto restarts = nlohmann::json::array();
    for (const auto& [l, cv] : f.restarts) restarts.push_back({{"level", l}, {"cv", cv}});
    states.push_back({{"state_id", f.state},
                      {"n_visits", f.n_visits},
                      {"l_opt", f.l_opt},
                      {"crit_opt", f.crit_opt},
                      {"success", f.success},
                      {"restarts", std::move(restarts)}});
  }
  j["states"] = std::move(states);
  return j;
}

DriverReport driver_report_from_json(const nlohmann::json& j) {
  DriverReport r;
  r.driver_id = j.at("driver_id").get<std::string>();
  for (const auto& s : j.at("states")) {
    FitResult f;
    f.state = s.at("state_id").get<StateId>();
    f.n_visits = s.value("n_visits", std::uint64_t{0});
    f.l_opt = s.at("l_opt").get<double>();
    f.crit_opt = s.at("crit_opt").get<double>();
    f.success = s.at("success").get<bool>();
    for (const auto& rs : s.value("restarts", nlohmann::json::array()))
      f.restarts.emplace_back(rs.at("level").get<double>(), rs.at("cv").get<double>());
    r.results.push_back(std::move(f));
  }
  r.n_comparisons = r.results.size();
  r.n_success = static_cast<std::size_t>(std::count_if(r.results.begin(), r.results.end(), [](const auto& f) { return f.success; }));
  if (r.n_comparisons > 0) r.percent = 100.0 * static_cast<double>(r.n_success) / static_cast<double>(r.n_comparisons);
  return r;
}

void to_json(nlohmann::json& j, const CompareConfig& c) {
  j = nlohmann::json{{"n_th", c.n_th},
                     {"theta", c.theta},
                     {"prob_floor", c.prob_floor},
                     {"sa", c.sa},
                     {"ks",
                      {{"mode", c.ks.mode == KsMode::kOneSample ? "one-sample" : "two-sample"},
                       {"model_samples", c.ks.model_samples}}},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, CompareConfig& c) {
  c = CompareConfig{};
  c.n_th = j.value("n_th", c.n_th);
  c.theta = j.value("theta", c.theta);
  c.prob_floor = j.value("prob_floor", c.prob_floor);
  if (j.contains("sa")) c.sa = j["sa"].get<SAConfig>();
  if (j.contains("ks")) {
    const auto mode = j["ks"].value("mode", std::string("one-sample"));
    if (mode == "one-sample")
      c.ks.mode = KsMode::kOneSample;
    else if (mode == "two-sample")
      c.ks.mode = KsMode::kTwoSample;
    else
      throw ConfigError("fitting: unknown K-S mode '" + mode + "'");
    c.ks.model_samples = j["ks"].value("model_samples", c.ks.model_samples);
  }
  c.seed = j.value("seed", c.seed);
  if (c.n_th < 1) throw ConfigError("fitting: n_th must be >= 1");
}

}  // namespace lkgp
