#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lkgp/data.hpp"
#include "lkgp/env.hpp"
#include "lkgp/fitting.hpp"
#include "lkgp/gp.hpp"
#include "lkgp/levelk.hpp"
#include "lkgp/report.hpp"

namespace lkgp {

// Synthetic driver corpus used when no trajectory file is configured.
struct CorpusConfig {
  int drivers = 50;
  int states = 20;
  std::uint64_t samples_per_state = 500;
  // True levels, assigned to drivers round-robin.
  std::vector<double> levels{0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0};
  // State selection: visited at least this often by every trained level...
  std::uint64_t min_visits = 50;
  // ...and every pair of adjacent levels differs by at least this much in
  // total variation, so that the level is identifiable from behaviour.
  double min_adjacent_tv = 0.0;
};

void to_json(nlohmann::json& j, const CorpusConfig& c);
void from_json(const nlohmann::json& j, CorpusConfig& c);

struct PipelineConfig {
  std::uint64_t seed = 0;
  int jobs = 1;
  int max_level = 3;
  EnvConfig env;
  RlConfig rl;
  GpConfig gp;
  DataConfig data;
  CompareConfig fitting;
  CorpusConfig corpus;
  std::optional<std::filesystem::path> trajectories;  // ingest instead of synthesizing

  void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// Model directory layout: qtables/level_<k>.json, gp/state_<id>.json, states.json.
std::filesystem::path qtable_path(const std::filesystem::path& model_dir, int level);
std::filesystem::path gp_dir(const std::filesystem::path& model_dir);

void save_qtables(std::span<const QTable> tables, const std::filesystem::path& model_dir);
// Levels 1..max_level; throws InputError when any is missing.
std::vector<QTable> load_qtables(const std::filesystem::path& model_dir, int max_level);

std::vector<QTable> train_stage(const PipelineConfig& cfg, const std::filesystem::path& model_dir);

// States eligible for the synthetic corpus, most visited first (ties by id).
std::vector<StateId> select_states(std::span<const QTable> tables, const PipelineConfig& cfg, std::size_t count);

// Model builder fitting a state's GP from its observation set. Without tables
// the builder throws, so a cache only serves models already on disk.
GpCache::Builder make_gp_builder(std::vector<QTable> tables, const PipelineConfig& cfg);

// Fits (or loads) every listed state on `jobs` threads and saves them.
void build_models(GpCache& cache, std::span<const StateId> states, int jobs);

struct Corpus {
  std::vector<DriverRecord> records;
  std::map<std::string, double> truth;  // synthetic drivers only
};

std::vector<SyntheticDriverSpec> corpus_specs(const PipelineConfig& cfg, std::span<const StateId> states);
Corpus synthesize_corpus(const PipelineConfig& cfg, std::span<const StateId> states, GpCache& cache);

struct PipelineOptions {
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> model_dir;  // defaults to <out_dir>/models
  bool no_train = false;                           // reuse tables/models from model_dir
};

// train-levels -> build-gp -> synthesize|ingest -> fit-drivers -> report.
// Any failure is rethrown as StageError naming the stage.
ReportBundle run_pipeline(const PipelineConfig& cfg, const PipelineOptions& opts);

}  // namespace lkgp
