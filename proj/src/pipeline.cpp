#include "lkgp/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "lkgp/error.hpp"
#include "lkgp/rng.hpp"

namespace lkgp {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const CorpusConfig& c) {
  j = nlohmann::json{{"drivers", c.drivers},
                     {"states", c.states},
                     {"samples_per_state", c.samples_per_state},
                     {"levels", c.levels},
                     {"min_visits", c.min_visits},
                     {"min_adjacent_tv", c.min_adjacent_tv}};
}

void from_json(const nlohmann::json& j, CorpusConfig& c) {
  c = CorpusConfig{};
  c.drivers = j.value("drivers", c.drivers);
  c.states = j.value("states", c.states);
  c.samples_per_state = j.value("samples_per_state", c.samples_per_state);
  c.levels = j.value("levels", c.levels);
  c.min_visits = j.value("min_visits", c.min_visits);
  c.min_adjacent_tv = j.value("min_adjacent_tv", c.min_adjacent_tv);
  if (c.drivers < 1 || c.states < 1 || c.samples_per_state < 1) throw ConfigError("corpus: sizes must be >= 1");
  if (c.levels.empty()) throw ConfigError("corpus: need at least one true level");
  for (double l : c.levels)
    if (!(l >= 0.0 && l <= 3.0)) throw ConfigError("corpus: true levels must lie in [0, 3]");
}

void PipelineConfig::validate() const {
  env.validate();
  data.validate();
  fitting.sa.validate();
  if (jobs < 1) throw ConfigError("pipeline: jobs must be >= 1");
  if (max_level < 1) throw ConfigError("pipeline: max_level must be >= 1");
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = nlohmann::json{{"seed", c.seed},       {"jobs", c.jobs}, {"max_level", c.max_level}, {"env", c.env},
                     {"rl", c.rl},           {"gp", c.gp},     {"data", c.data},           {"fitting", c.fitting},
                     {"corpus", c.corpus}};
  if (c.trajectories) j["trajectories"] = c.trajectories->string();
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  static const std::vector<std::string> known{"seed", "jobs", "max_level", "env", "rl", "gp",
                                              "data", "fitting", "corpus", "trajectories"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("pipeline config: unknown key '" + k + "'");
  c = PipelineConfig{};
  c.seed = j.value("seed", c.seed);
  c.jobs = j.value("jobs", c.jobs);
  c.max_level = j.value("max_level", c.max_level);
  if (j.contains("env")) c.env = j["env"].get<EnvConfig>();
  if (j.contains("rl")) c.rl = j["rl"].get<RlConfig>();
  if (j.contains("gp")) c.gp = j["gp"].get<GpConfig>();
  if (j.contains("data")) c.data = j["data"].get<DataConfig>();
  if (j.contains("fitting")) c.fitting = j["fitting"].get<CompareConfig>();
  if (j.contains("corpus")) c.corpus = j["corpus"].get<CorpusConfig>();
  if (j.contains("trajectories") && !j["trajectories"].is_null()) c.trajectories = j["trajectories"].get<std::string>();
  c.validate();
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  auto cfg = j.get<PipelineConfig>();
  // relative trajectory paths are resolved against the config file
  if (cfg.trajectories && cfg.trajectories->is_relative()) cfg.trajectories = path.parent_path() / *cfg.trajectories;
  return cfg;
}

fs::path qtable_path(const fs::path& model_dir, int level) {
  return model_dir / "qtables" / fmt::format("level_{}.json", level);
}

fs::path gp_dir(const fs::path& model_dir) { return model_dir / "gp"; }

void save_qtables(std::span<const QTable> tables, const fs::path& model_dir) {
  fs::create_directories(model_dir / "qtables");
  for (const auto& t : tables) {
    std::ofstream out(qtable_path(model_dir, t.level));
    if (!out) throw InputError("cannot write " + qtable_path(model_dir, t.level).string());
    out << qtable_to_json(t).dump() << '\n';
  }
}

std::vector<QTable> load_qtables(const fs::path& model_dir, int max_level) {
  std::vector<QTable> out;
  for (int k = 1; k <= max_level; ++k) {
    const auto p = qtable_path(model_dir, k);
    std::ifstream in(p);
    if (!in) throw InputError("missing level table " + p.string());
    out.push_back(qtable_from_json(nlohmann::json::parse(in)));
    if (out.back().level != k) throw SchemaError(p.string() + " holds level " + std::to_string(out.back().level));
  }
  return out;
}

std::vector<QTable> train_stage(const PipelineConfig& cfg, const fs::path& model_dir) {
  auto results = train_levels(cfg.env, cfg.rl, cfg.max_level, cfg.seed);
  std::vector<QTable> tables;
  for (auto& r : results) tables.push_back(std::move(r.table));
  save_qtables(tables, model_dir);
  return tables;
}

std::vector<StateId> select_states(std::span<const QTable> tables, const PipelineConfig& cfg, std::size_t count) {
  if (tables.empty()) throw InputError("select_states: no level tables");
  std::vector<std::pair<std::uint64_t, StateId>> ranked;
  for (const auto& [s, v] : tables.front().visits) {
    std::uint64_t total = 0;
    bool ok = true;
    for (const auto& t : tables) {
      const auto it = t.visits.find(s);
      if (it == t.visits.end() || it->second < cfg.corpus.min_visits) {
        ok = false;
        break;
      }
      total += it->second;
    }
    if (!ok) continue;
    if (cfg.corpus.min_adjacent_tv > 0.0) {
      const auto set = build_observation_set(s, tables, cfg.env, cfg.rl.level0_epsilon);
      for (std::size_t k = 0; ok && k + 1 < set.size(); ++k)
        ok = total_variation(set[k], set[k + 1]) >= cfg.corpus.min_adjacent_tv;
      if (!ok) continue;
    }
    ranked.emplace_back(total, s);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<StateId> out;
  for (std::size_t i = 0; i < std::min(count, ranked.size()); ++i) out.push_back(ranked[i].second);
  if (out.size() < count) spdlog::warn("only {} of {} requested states qualify", out.size(), count);
  std::sort(out.begin(), out.end());
  return out;
}

GpCache::Builder make_gp_builder(std::vector<QTable> tables, const PipelineConfig& cfg) {
  if (tables.empty())
    return [](StateId s) -> StateGP { throw InputError(fmt::format("no fitted model for state {}", s)); };
  auto shared = std::make_shared<const std::vector<QTable>>(std::move(tables));
  std::vector<double> levels;
  for (int k = 0; k <= cfg.max_level; ++k) levels.push_back(k);
  return [shared, levels, env = cfg.env, gp = cfg.gp, eps = cfg.rl.level0_epsilon](StateId s) {
    auto set = build_observation_set(s, *shared, env, eps);
    return fit_state_gp(s, levels, std::move(set), gp);
  };
}

void build_models(GpCache& cache, std::span<const StateId> states, int jobs) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(states.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < states.size(); i = next++) {
      try {
        cache.get(states[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(states.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  cache.save_all();
}

std::vector<SyntheticDriverSpec> corpus_specs(const PipelineConfig& cfg, std::span<const StateId> states) {
  std::vector<SyntheticDriverSpec> specs;
  const auto& levels = cfg.corpus.levels;
  for (int i = 0; i < cfg.corpus.drivers; ++i) {
    SyntheticDriverSpec s;
    s.driver_id = fmt::format("syn{:03d}", i);
    s.level = levels[static_cast<std::size_t>(i) % levels.size()];
    s.states.assign(states.begin(), states.end());
    s.samples_per_state = cfg.corpus.samples_per_state;
    s.seed = derive_seed({cfg.seed, 0x5e9d, static_cast<std::uint64_t>(i)});
    specs.push_back(std::move(s));
  }
  return specs;
}

Corpus synthesize_corpus(const PipelineConfig& cfg, std::span<const StateId> states, GpCache& cache) {
  Corpus c;
  for (const auto& spec : corpus_specs(cfg, states)) {
    c.records.push_back(synthesize_driver(spec, cache));
    c.truth[spec.driver_id] = spec.level;
  }
  return c;
}

namespace {

template <class F>
auto stage(const char* name, F&& f) {
  spdlog::info("stage {}", name);
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream out(p);
  if (!out) throw InputError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

nlohmann::json reports_json(const char* method, std::span<const DriverReport> reports) {
  auto arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(driver_report_to_json(r));
  return {{"method", method}, {"drivers", std::move(arr)}};
}

}  // namespace

ReportBundle run_pipeline(const PipelineConfig& cfg, const PipelineOptions& opts) {
  cfg.validate();
  const fs::path model_dir = opts.model_dir.value_or(opts.out_dir / "models");
  fs::create_directories(opts.out_dir);

  std::vector<QTable> tables;
  if (!opts.no_train) {
    tables = stage("train-levels", [&] { return train_stage(cfg, model_dir); });
  }

  auto [cache, states] = stage("build-gp", [&] {
    if (opts.no_train) {
      if (!fs::is_directory(model_dir)) throw InputError("model directory " + model_dir.string() + " does not exist");
      tables = load_qtables(model_dir, cfg.max_level);
    }
    // freshly trained tables invalidate any models fitted earlier
    if (!opts.no_train) fs::remove_all(gp_dir(model_dir));
    auto states = select_states(tables, cfg, static_cast<std::size_t>(cfg.corpus.states));
    if (states.empty()) throw InputError("no state qualifies for modelling");
    auto cache = std::make_unique<GpCache>(make_gp_builder(tables, cfg), gp_dir(model_dir));
    build_models(*cache, states, cfg.jobs);
    write_json(model_dir / "states.json", nlohmann::json{{"states", states}});
    return std::make_pair(std::move(cache), std::move(states));
  });

  Corpus corpus;
  if (cfg.trajectories) {
    corpus = stage("ingest", [&] {
      Corpus c;
      auto r = ingest_trajectories(*cfg.trajectories, cfg.env, cfg.data);
      spdlog::info("ingested {} drivers from {} rows ({} rejected)", r.records.size(), r.rows_read, r.rows_rejected);
      c.records = std::move(r.records);
      return c;
    });
  } else {
    corpus = stage("synthesize", [&] { return synthesize_corpus(cfg, states, *cache); });
  }
  write_json(opts.out_dir / "records.json", records_to_json(corpus.records));

  auto [cgt, dgt] = stage("fit-drivers", [&] {
    auto c = compare_drivers(corpus.records, *cache, cfg.fitting, Method::kContinuous, cfg.jobs);
    auto d = compare_drivers(corpus.records, *cache, cfg.fitting, Method::kDiscrete, cfg.jobs);
    write_json(opts.out_dir / "cgt_report.json", reports_json("cgt", c));
    write_json(opts.out_dir / "dgt_report.json", reports_json("dgt", d));
    return std::make_pair(std::move(c), std::move(d));
  });

  return stage("report", [&] {
    auto bundle = build_report(cgt, dgt, corpus.truth);
    write_report(bundle, opts.out_dir);
    return bundle;
  });
}

}  // namespace lkgp
