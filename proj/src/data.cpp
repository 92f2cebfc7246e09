#include "lkgp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include <boost/tokenizer.hpp>
#include <spdlog/spdlog.h>

#include "lkgp/error.hpp"
#include "lkgp/game.hpp"
#include "lkgp/rng.hpp"

namespace lkgp {

namespace {

constexpr double kFeetToMeters = 0.3048;
const std::vector<std::string> kColumns{"vehicle_id", "frame", "local_x", "local_y", "lane_id", "velocity"};

std::vector<std::string> split_csv(const std::string& line) {
  using Tok = boost::tokenizer<boost::escaped_list_separator<char>>;
  std::vector<std::string> out;
  for (auto field : Tok(line)) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

void DataConfig::validate() const {
  if (!(frame_dt > 0.0)) throw ConfigError("data: frame_dt must be positive");
  if (!(maintain_band > 0.0)) throw ConfigError("data: maintain band must be positive");
  if (!(hard_brake_below <= -maintain_band)) throw ConfigError("data: hard-brake threshold must not exceed -maintain_band");
}

void to_json(nlohmann::json& j, const DataConfig& c) {
  j = nlohmann::json{{"frame_dt", c.frame_dt},
                     {"maintain_band", c.maintain_band},
                     {"hard_brake_below", c.hard_brake_below},
                     {"first_lane_id", c.first_lane_id},
                     {"ngsim_units", c.ngsim_units}};
}

void from_json(const nlohmann::json& j, DataConfig& c) {
  c = DataConfig{};
  c.frame_dt = j.value("frame_dt", c.frame_dt);
  c.maintain_band = j.value("maintain_band", c.maintain_band);
  c.hard_brake_below = j.value("hard_brake_below", c.hard_brake_below);
  c.first_lane_id = j.value("first_lane_id", c.first_lane_id);
  c.ngsim_units = j.value("ngsim_units", c.ngsim_units);
  c.validate();
}

std::size_t label_action(double v0, double v1, int lane0, int lane1, std::int64_t frames, const DataConfig& cfg) {
  if (lane0 != lane1) return action::kChangeLane;
  const double a = (v1 - v0) / (static_cast<double>(frames) * cfg.frame_dt);
  if (a <= cfg.hard_brake_below) return action::kHardBrake;
  if (a <= -cfg.maintain_band) return action::kDecelerate;
  if (a >= cfg.maintain_band) return action::kAccelerate;
  return action::kMaintain;
}

IngestResult ingest_trajectories(std::istream& in, const EnvConfig& env, const DataConfig& cfg) {
  env.validate();
  cfg.validate();
  IngestResult result;

  std::string line;
  if (!std::getline(in, line)) throw SchemaError("trajectory CSV is empty; expected header " + fmt::format("{}", fmt::join(kColumns, ",")));
  const auto header = split_csv(line);
  std::vector<std::size_t> col(kColumns.size());
  std::vector<std::string> missing;
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    const auto it = std::find(header.begin(), header.end(), kColumns[c]);
    if (it == header.end())
      missing.push_back(kColumns[c]);
    else
      col[c] = static_cast<std::size_t>(it - header.begin());
  }
  if (!missing.empty()) throw SchemaError(fmt::format("trajectory CSV is missing columns: {}", fmt::join(missing, ", ")));
  const std::size_t width = *std::max_element(col.begin(), col.end()) + 1;

  const double unit = cfg.ngsim_units ? kFeetToMeters : 1.0;
  std::map<std::string, std::int64_t> last_frame;
  std::vector<TrajectoryRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++result.rows_read;
    const auto f = split_csv(line);
    if (f.size() < width) {
      ++result.rows_rejected;
      spdlog::debug("ingest: line {} has {} fields, rejected", lineno, f.size());
      continue;
    }
    TrajectoryRow r;
    try {
      r.vehicle_id = f[col[0]];
      r.frame = std::stoll(f[col[1]]);
      r.local_x = std::stod(f[col[2]]) * unit;
      r.local_y = std::stod(f[col[3]]) * unit;
      r.lane_id = std::stoi(f[col[4]]);
      r.velocity = std::stod(f[col[5]]) * unit;
    } catch (const std::exception&) {
      ++result.rows_rejected;
      spdlog::debug("ingest: line {} does not parse, rejected", lineno);
      continue;
    }
    if (!std::isfinite(r.local_x) || !std::isfinite(r.local_y) || !std::isfinite(r.velocity)) {
      ++result.rows_rejected;
      continue;
    }
    const auto it = last_frame.find(r.vehicle_id);
    if (it != last_frame.end() && r.frame <= it->second) {
      ++result.rows_rejected;
      spdlog::debug("ingest: vehicle {} frame {} not after {}, rejected", r.vehicle_id, r.frame, it->second);
      continue;
    }
    last_frame[r.vehicle_id] = r.frame;
    rows.push_back(std::move(r));
  }
  if (result.rows_rejected > 0) spdlog::warn("ingest: rejected {} of {} rows", result.rows_rejected, result.rows_read);

  // Scenes: every accepted row of a frame, for observing neighbours.
  std::map<std::int64_t, std::vector<std::size_t>> by_frame;
  std::map<std::string, std::vector<std::size_t>> by_vehicle;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    by_frame[rows[i].frame].push_back(i);
    by_vehicle[rows[i].vehicle_id].push_back(i);
  }
  auto lane_index = [&](int lane_id) { return std::clamp(lane_id - cfg.first_lane_id, 0, env.lanes - 1); };

  for (const auto& [id, idx] : by_vehicle) {
    DriverRecord rec{id, {}};
    for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
      const auto& a = rows[idx[k]];
      const auto& b = rows[idx[k + 1]];
      // only consecutive frames form a labeled step; a gap starts a new segment
      if (b.frame - a.frame != 1) continue;
      const auto& scene_idx = by_frame.at(a.frame);
      std::vector<Vehicle> scene;
      std::size_t ego = 0;
      for (std::size_t s : scene_idx) {
        if (s == idx[k]) ego = scene.size();
        scene.push_back({rows[s].local_y, lane_index(rows[s].lane_id), rows[s].velocity});
      }
      const StateId state = observe(scene, ego, env, std::nullopt).id(env);
      auto& counts = rec.counts[state];
      if (counts.empty()) counts.assign(action::kCount, 0);
      ++counts[label_action(a.velocity, b.velocity, a.lane_id, b.lane_id, 1, cfg)];
      ++result.transitions;
    }
    if (!rec.counts.empty()) result.records.push_back(std::move(rec));
  }
  return result;
}

IngestResult ingest_trajectories(const std::filesystem::path& csv, const EnvConfig& env, const DataConfig& cfg) {
  std::ifstream in(csv);
  if (!in) throw InputError("cannot open trajectory file " + csv.string());
  return ingest_trajectories(in, env, cfg);
}

namespace {

// Representative value inside gap bin `b`.
double gap_value(int b, const EnvConfig& env) {
  const auto& e = env.gap_edges;
  if (b == 0) return 0.5 * e.front();
  if (b == env.gap_bins() - 1) return e.back() + 25.0;
  return 0.5 * (e[static_cast<std::size_t>(b) - 1] + e[static_cast<std::size_t>(b)]);
}

// Representative acceleration for each longitudinal action.
double action_accel(std::size_t a, const DataConfig& cfg) {
  switch (a) {
    case action::kAccelerate: return 2.0 * cfg.maintain_band;
    case action::kDecelerate: return 0.5 * (cfg.hard_brake_below - cfg.maintain_band);
    case action::kHardBrake: return 1.5 * cfg.hard_brake_below;
    default: return 0.0;
  }
}

}  // namespace

void export_trajectories(std::span<const DriverRecord> records, const EnvConfig& env, std::ostream& out,
                         const DataConfig& cfg) {
  env.validate();
  cfg.validate();
  const double unit = cfg.ngsim_units ? 1.0 / kFeetToMeters : 1.0;
  const double width = env.max_speed / env.speed_bins;
  const double L = env.vehicle_length;
  const double x0 = 100.0;
  std::int64_t frame = 0;
  std::uint64_t neighbour = 0;

  out << "vehicle_id,frame,local_x,local_y,lane_id,velocity\n";
  out.precision(17);
  auto row = [&](const std::string& id, std::int64_t f, double y, int lane, double v) {
    out << id << ',' << f << ",0," << y * unit << ',' << lane + cfg.first_lane_id << ',' << v * unit << '\n';
  };

  for (const auto& rec : records) {
    if (rec.driver_id.find_first_of(",\"\n") != std::string::npos)
      throw InputError("export: driver id '" + rec.driver_id + "' is not CSV-safe");
    for (const auto& [state, counts] : rec.counts) {
      const auto s = EnvState::from_id(state, env);
      const double v = (s.speed_bin + 0.5) * width;
      const double rel = 1.25 * env.rel_speed_threshold;
      const double v_front = v + (s.front_rel_speed == 0 ? -rel : s.front_rel_speed == 1 ? 0.0 : rel);
      const double front_gap = gap_value(s.front_gap, env);
      // target = lower adjacent lane when both exist; the other one gets a
      // strictly shorter front gap so the target choice is unambiguous
      std::optional<int> target, other;
      if (s.lane > 0) target = s.lane - 1;
      if (s.lane + 1 < env.lanes) (target ? other : target) = s.lane + 1;

      for (std::size_t a = 0; a < counts.size(); ++a) {
        for (std::uint64_t n = 0; n < counts[a]; ++n) {
          const std::string nid = "n" + std::to_string(neighbour);
          row(rec.driver_id, frame, x0, s.lane, v);
          row(nid + "a", frame, x0 + front_gap + L, s.lane, v_front);
          if (target) {
            const double tg = gap_value(s.target_front_gap, env);
            row(nid + "b", frame, x0 + tg + L, *target, v);
            row(nid + "c", frame, x0 - gap_value(s.target_rear_gap, env) - L, *target, v);
            if (other) row(nid + "d", frame, x0 + 0.5 * tg + L, *other, v);
          }
          ++neighbour;
          if (a == action::kChangeLane) {
            const int lane = target ? *target : s.lane + 1;
            row(rec.driver_id, frame + 1, x0 + v * cfg.frame_dt, lane, v);
          } else {
            const double v1 = v + action_accel(a, cfg) * cfg.frame_dt;
            row(rec.driver_id, frame + 1, x0 + 0.5 * (v + v1) * cfg.frame_dt, s.lane, v1);
          }
          frame += 3;
        }
      }
    }
  }
}

void export_trajectories(std::span<const DriverRecord> records, const EnvConfig& env,
                         const std::filesystem::path& csv, const DataConfig& cfg) {
  std::ofstream out(csv);
  if (!out) throw InputError("cannot write trajectory file " + csv.string());
  export_trajectories(records, env, out, cfg);
}

void to_json(nlohmann::json& j, const SyntheticDriverSpec& s) {
  j = nlohmann::json{{"driver_id", s.driver_id},
                     {"level", s.level},
                     {"states", s.states},
                     {"samples_per_state", s.samples_per_state},
                     {"seed", s.seed}};
  if (s.mixture) j["mixture"] = *s.mixture;
}

void from_json(const nlohmann::json& j, SyntheticDriverSpec& s) {
  s = SyntheticDriverSpec{};
  s.driver_id = j.at("driver_id").get<std::string>();
  s.level = j.value("level", 0.0);
  s.states = j.value("states", std::vector<StateId>{});
  s.samples_per_state = j.value("samples_per_state", s.samples_per_state);
  s.seed = j.value("seed", s.seed);
  if (j.contains("mixture")) s.mixture = j["mixture"].get<std::vector<double>>();
  if (s.samples_per_state < 1) throw ConfigError("synthetic driver: samples per state must be >= 1");
}

Policy synthetic_policy(const SyntheticDriverSpec& spec, const StateGP& gp) {
  if (spec.mixture) return mixed_policy(MixedStrategy(*spec.mixture, 1e-9), gp.policies());
  return model_policy(gp, spec.level);
}

DriverRecord synthesize_driver(const SyntheticDriverSpec& spec, GpCache& models) {
  if (spec.samples_per_state < 1) throw InputError("synthesize_driver: samples per state must be >= 1");
  if (!spec.mixture && !(spec.level >= 0.0 && spec.level <= 3.0))
    throw InputError("synthesize_driver: level must lie in [0, 3]");
  DriverRecord rec{spec.driver_id, {}};
  const auto driver_hash = stable_hash(spec.driver_id);
  for (const StateId s : spec.states) {
    const auto gp = models.get(s);
    const Policy p = synthetic_policy(spec, *gp);
    std::mt19937_64 rng(derive_seed({spec.seed, driver_hash, s}));
    std::discrete_distribution<std::size_t> draw(p.probs.begin(), p.probs.end());
    auto& counts = rec.counts[s];
    counts.assign(p.size(), 0);
    for (std::uint64_t n = 0; n < spec.samples_per_state; ++n) ++counts[draw(rng)];
  }
  return rec;
}

nlohmann::json records_to_json(std::span<const DriverRecord> records) {
  auto drivers = nlohmann::json::array();
  for (const auto& r : records) {
    auto states = nlohmann::json::array();
    for (const auto& [s, c] : r.counts) states.push_back({{"state_id", s}, {"counts", c}});
    drivers.push_back({{"driver_id", r.driver_id}, {"states", std::move(states)}});
  }
  return {{"version", 1}, {"drivers", std::move(drivers)}};
}

std::vector<DriverRecord> records_from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != 1) throw SchemaError("driver records: unsupported version");
  std::vector<DriverRecord> out;
  for (const auto& d : j.at("drivers")) {
    DriverRecord r{d.at("driver_id").get<std::string>(), {}};
    for (const auto& s : d.at("states")) {
      auto counts = s.at("counts").get<std::vector<std::uint64_t>>();
      r.counts[s.at("state_id").get<StateId>()] = std::move(counts);
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace lkgp
