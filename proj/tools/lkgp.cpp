// Command-line front end for the level-k GP pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "lkgp/data.hpp"
#include "lkgp/error.hpp"
#include "lkgp/game.hpp"
#include "lkgp/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lkgp;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  fs::path out_dir = "out";
  std::optional<fs::path> model_dir;
  std::optional<fs::path> config;
  std::string log_level = "info";

  PipelineConfig pipeline() const {
    PipelineConfig c = config ? load_pipeline_config(*config) : PipelineConfig{};
    if (seed) {
      c.seed = *seed;
      c.fitting.seed = *seed;
    }
    if (jobs) c.jobs = *jobs;
    c.validate();
    return c;
  }

  fs::path models() const { return model_dir.value_or(out_dir / "models"); }
};

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InputError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw InputError("cannot write " + p.string());
  out << j.dump(2) << '\n';
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw InputError("not a number: '" + item + "'");
    }
  }
  return out;
}

std::vector<StateId> model_states(const fs::path& model_dir) {
  return read_json(model_dir / "states.json").at("states").get<std::vector<StateId>>();
}

// Cache over the model directory that can fit missing states when the level
// tables are available.
std::unique_ptr<GpCache> open_models(const PipelineConfig& cfg, const fs::path& model_dir) {
  std::vector<QTable> tables;
  try {
    tables = load_qtables(model_dir, cfg.max_level);
  } catch (const InputError&) {
    spdlog::debug("no level tables under {}; serving stored models only", model_dir.string());
  }
  return std::make_unique<GpCache>(make_gp_builder(std::move(tables), cfg), gp_dir(model_dir));
}

nlohmann::json reports_json(const char* method, const std::vector<DriverReport>& reports) {
  auto arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(driver_report_to_json(r));
  return {{"method", method}, {"drivers", std::move(arr)}};
}

std::vector<DriverReport> reports_from(const nlohmann::json& j) {
  std::vector<DriverReport> out;
  for (const auto& d : j.at("drivers")) out.push_back(driver_report_from_json(d));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous level-k driver models with multi-output Gaussian processes"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed (overrides the config)");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--model-dir", g.model_dir, "Model directory (default <out-dir>/models)");
  app.add_option("--config", g.config, "Master config JSON")->check(CLI::ExistingFile);
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off");

  // train-levels
  auto* train = app.add_subcommand("train-levels", "Train level-1..n Q-tables by tabular Q-learning");
  std::optional<int> max_level;
  train->add_option("--max-level", max_level, "Highest trained level")->check(CLI::PositiveNumber);

  // build-gp
  auto* build = app.add_subcommand("build-gp", "Fit per-state multi-output GPs over the trained levels");
  std::string states_arg;
  int auto_states = 0;
  build->add_option("--states", states_arg, "Comma-separated state ids");
  build->add_option("--auto", auto_states, "Select this many well-visited states instead");

  // synthesize
  auto* synth = app.add_subcommand("synthesize", "Sample a synthetic driver from the level-l policy");
  SyntheticDriverSpec spec;
  spec.driver_id = "synthetic";
  std::string mixture_arg, synth_states, synth_csv;
  fs::path synth_out;
  synth->add_option("--level", spec.level, "True level in [0, 3]")->check(CLI::Range(0.0, 3.0));
  synth->add_option("--samples", spec.samples_per_state, "Samples per state")->check(CLI::PositiveNumber);
  synth->add_option("--driver-id", spec.driver_id);
  synth->add_option("--mixture", mixture_arg, "Mixture coefficients c0,..,cn instead of a level");
  synth->add_option("--states", synth_states, "Comma-separated state ids (default: the model directory's states)");
  synth->add_option("--csv", synth_csv, "Also export a trajectory CSV");
  synth->add_option("--out", synth_out, "Records JSON (default <out-dir>/records.json)");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Discretize a trajectory CSV into driver records");
  fs::path ingest_csv, ingest_out;
  bool ngsim = false;
  ingest->add_option("csv", ingest_csv, "Trajectory CSV")->required()->check(CLI::ExistingFile);
  ingest->add_flag("--ngsim-units", ngsim, "Input in feet and ft/s");
  ingest->add_option("--out", ingest_out, "Records JSON (default <out-dir>/records.json)");

  // fit-drivers
  auto* fit = app.add_subcommand("fit-drivers", "Fit per-state levels of each driver and score them");
  std::string fit_data = "synthetic", method = "cgt";
  std::optional<fs::path> fit_models;
  std::optional<std::uint64_t> n_th;
  std::optional<double> theta;
  fs::path fit_out;
  fit->add_option("--data", fit_data, "records.json, a trajectory .csv, or 'synthetic'");
  fit->add_option("--models", fit_models, "Model directory (default --model-dir)");
  fit->add_option("--n-th", n_th, "Minimum visits per compared state")->check(CLI::PositiveNumber);
  fit->add_option("--theta", theta, "Success threshold on the K-S p-value");
  fit->add_option("--method", method, "cgt (continuous level search) or dgt (integer levels)")
      ->check(CLI::IsMember({"cgt", "dgt"}));
  fit->add_option("--out", fit_out, "Report JSON (default <out-dir>/<method>_report.json)");

  // best-response
  auto* br = app.add_subcommand("best-response", "Best response to a mixed level-k opponent");
  std::string coeffs_arg;
  double grid = 0.05;
  bool verify = false;
  br->add_option("--coeffs", coeffs_arg, "Opponent coefficients over levels 0..n-1")->required();
  br->add_option("--grid", grid, "Simplex grid step for --verify")->check(CLI::Range(1e-6, 1.0));
  br->add_flag("--verify", verify, "Check against brute-force enumeration");

  // report
  auto* rep = app.add_subcommand("report", "Emit the summary and figure tables");
  fs::path rep_cgt, rep_dgt;
  std::optional<fs::path> rep_truth;
  rep->add_option("--cgt", rep_cgt, "CGT report JSON")->required()->check(CLI::ExistingFile);
  rep->add_option("--dgt", rep_dgt, "DGT report JSON")->required()->check(CLI::ExistingFile);
  rep->add_option("--truth", rep_truth, "JSON object mapping driver id to true level")->check(CLI::ExistingFile);

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "train-levels -> build-gp -> synthesize|ingest -> fit-drivers -> report");
  bool no_train = false;
  pipe->add_flag("--no-train", no_train, "Reuse level tables and models from the model directory");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::stderr_color_mt("lkgp"));
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    if (*train) {
      auto cfg = g.pipeline();
      if (max_level) cfg.max_level = *max_level;
      const auto tables = train_stage(cfg, g.models());
      for (const auto& t : tables)
        fmt::print("level {}: {} states, hash {:016x}\n", t.level, t.values.size(), t.hash());
    } else if (*build) {
      const auto cfg = g.pipeline();
      auto tables = load_qtables(g.models(), cfg.max_level);
      std::vector<StateId> states;
      if (!states_arg.empty()) {
        for (double v : parse_list(states_arg)) states.push_back(static_cast<StateId>(v));
      } else {
        states = select_states(tables, cfg, static_cast<std::size_t>(auto_states > 0 ? auto_states : cfg.corpus.states));
      }
      GpCache cache(make_gp_builder(std::move(tables), cfg), gp_dir(g.models()));
      build_models(cache, states, cfg.jobs);
      write_json(g.models() / "states.json", nlohmann::json{{"states", states}});
      for (const StateId s : states) {
        const auto gp = cache.get(s);
        fmt::print("state {}: log-likelihood {:.4f}\n", s, gp->diagnostics().log_likelihood);
      }
    } else if (*synth) {
      const auto cfg = g.pipeline();
      auto models = open_models(cfg, g.models());
      if (!synth_states.empty())
        for (double v : parse_list(synth_states)) spec.states.push_back(static_cast<StateId>(v));
      else
        spec.states = model_states(g.models());
      if (!mixture_arg.empty()) spec.mixture = parse_list(mixture_arg);
      spec.seed = cfg.seed;
      const std::vector<DriverRecord> recs{synthesize_driver(spec, *models)};
      const auto out = synth_out.empty() ? g.out_dir / "records.json" : synth_out;
      write_json(out, records_to_json(recs));
      if (!synth_csv.empty()) export_trajectories(recs, cfg.env, fs::path(synth_csv), cfg.data);
      fmt::print("{}: {} states x {} samples -> {}\n", spec.driver_id, spec.states.size(), spec.samples_per_state,
                 out.string());
    } else if (*ingest) {
      auto cfg = g.pipeline();
      if (ngsim) cfg.data.ngsim_units = true;
      const auto r = ingest_trajectories(ingest_csv, cfg.env, cfg.data);
      const auto out = ingest_out.empty() ? g.out_dir / "records.json" : ingest_out;
      write_json(out, records_to_json(r.records));
      fmt::print("{} rows read, {} rejected, {} transitions, {} drivers -> {}\n", r.rows_read, r.rows_rejected,
                 r.transitions, r.records.size(), out.string());
    } else if (*fit) {
      auto cfg = g.pipeline();
      if (n_th) cfg.fitting.n_th = *n_th;
      if (theta) cfg.fitting.theta = *theta;
      const fs::path model_dir = fit_models.value_or(g.models());
      auto models = open_models(cfg, model_dir);
      std::vector<DriverRecord> records;
      nlohmann::json truth = nlohmann::json::object();
      if (fit_data == "synthetic") {
        auto corpus = synthesize_corpus(cfg, model_states(model_dir), *models);
        records = std::move(corpus.records);
        for (const auto& [id, l] : corpus.truth) truth[id] = l;
      } else if (fs::path(fit_data).extension() == ".csv") {
        records = ingest_trajectories(fit_data, cfg.env, cfg.data).records;
      } else {
        records = records_from_json(read_json(fit_data));
      }
      const auto m = method == "cgt" ? Method::kContinuous : Method::kDiscrete;
      const auto reports = compare_drivers(records, *models, cfg.fitting, m, cfg.jobs);
      const auto out = fit_out.empty() ? g.out_dir / (method + "_report.json") : fit_out;
      write_json(out, reports_json(method.c_str(), reports));
      if (!truth.empty()) write_json(out.parent_path() / "truth.json", truth);
      for (const auto& r : reports)
        fmt::print("{}: {} / {} states{}\n", r.driver_id, r.n_success, r.n_comparisons,
                   r.percent ? fmt::format(" ({:.1f}%)", *r.percent) : std::string(" (undefined)"));
    } else if (*br) {
      const MixedStrategy opponent(parse_list(coeffs_arg), 1e-9);
      const auto res = best_response_set(opponent);
      fmt::print("M = {{{}}}\n", fmt::join(res.levels, ", "));
      fmt::print("strategy = [{}]\n", fmt::join(res.strategy.coeffs(), ", "));
      fmt::print("value = {}\n", res.value);
      if (verify) {
        const auto bf = brute_force_best_response(opponent, grid);
        const bool agree = std::abs(bf.max_utility - res.value) <= 1e-12 &&
                           std::abs(mixed_utility(res.strategy, opponent, true) - res.value) <= 1e-12;
        fmt::print("brute force max = {} over step {} ({} maximizers): {}\n", bf.max_utility, grid, bf.argmax.size(),
                   agree ? "agree" : "DISAGREE");
        if (!agree) return 1;
      }
    } else if (*rep) {
      const auto cgt = reports_from(read_json(rep_cgt));
      const auto dgt = reports_from(read_json(rep_dgt));
      std::map<std::string, double> truth;
      if (rep_truth) truth = read_json(*rep_truth).get<std::map<std::string, double>>();
      const auto b = build_report(cgt, dgt, truth);
      write_report(b, g.out_dir);
      fmt::print("CGT mean {:.2f}% over {} drivers, DGT mean {:.2f}% over {} drivers -> {}\n", b.cgt.mean_percent,
                 b.cgt.drivers, b.dgt.mean_percent, b.dgt.drivers, g.out_dir.string());
    } else if (*pipe) {
      const auto cfg = g.pipeline();
      const auto b = run_pipeline(cfg, PipelineOptions{g.out_dir, g.model_dir, no_train});
      fmt::print("CGT mean {:.2f}%, DGT mean {:.2f}% over {} drivers -> {}\n", b.cgt.mean_percent, b.dgt.mean_percent,
                 b.drivers.size(), (g.out_dir / "summary.json").string());
    }
  } catch (const StageError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
