#include "lkgp/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lkgp/error.hpp"

namespace lkgp {

std::size_t EnvConfig::num_states() const {
  const auto g = static_cast<std::size_t>(gap_bins());
  return static_cast<std::size_t>(lanes) * static_cast<std::size_t>(speed_bins) * g * kRelSpeedBins * g * g;
}

void EnvConfig::validate() const {
  if (lanes < 1 || vehicles < 1 || speed_bins < 1) throw ConfigError("env: lanes, vehicles, speed_bins must be >= 1");
  if (!(road_length > 0) || !(dt > 0) || !(max_speed > 0) || !(vehicle_length > 0))
    throw ConfigError("env: lengths, dt and max speed must be positive");
  if (gap_edges.empty() || !std::is_sorted(gap_edges.begin(), gap_edges.end()))
    throw ConfigError("env: gap_edges must be non-empty and increasing");
  if (episode_steps < 1) throw ConfigError("env: episode_steps must be >= 1");
  if (road_length < vehicles * (vehicle_length + 2.0) / lanes)
    throw ConfigError("env: road too short for the vehicle count");
}

void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = nlohmann::json{{"lanes", c.lanes},
                     {"vehicles", c.vehicles},
                     {"road_length", c.road_length},
                     {"dt", c.dt},
                     {"max_speed", c.max_speed},
                     {"speed_bins", c.speed_bins},
                     {"gap_edges", c.gap_edges},
                     {"rel_speed_threshold", c.rel_speed_threshold},
                     {"vehicle_length", c.vehicle_length},
                     {"accel", c.accel},
                     {"decel", c.decel},
                     {"hard_brake", c.hard_brake},
                     {"init_speed_min", c.init_speed_min},
                     {"init_speed_max", c.init_speed_max},
                     {"episode_steps", c.episode_steps},
                     {"reward",
                      {{"speed", c.reward.speed},
                       {"collision", c.reward.collision},
                       {"lane_change", c.reward.lane_change}}}};
}

void from_json(const nlohmann::json& j, EnvConfig& c) {
  c = EnvConfig{};
  c.lanes = j.value("lanes", c.lanes);
  c.vehicles = j.value("vehicles", c.vehicles);
  c.road_length = j.value("road_length", c.road_length);
  c.dt = j.value("dt", c.dt);
  c.max_speed = j.value("max_speed", c.max_speed);
  c.speed_bins = j.value("speed_bins", c.speed_bins);
  c.gap_edges = j.value("gap_edges", c.gap_edges);
  c.rel_speed_threshold = j.value("rel_speed_threshold", c.rel_speed_threshold);
  c.vehicle_length = j.value("vehicle_length", c.vehicle_length);
  c.accel = j.value("accel", c.accel);
  c.decel = j.value("decel", c.decel);
  c.hard_brake = j.value("hard_brake", c.hard_brake);
  c.init_speed_min = j.value("init_speed_min", c.init_speed_min);
  c.init_speed_max = j.value("init_speed_max", c.init_speed_max);
  c.episode_steps = j.value("episode_steps", c.episode_steps);
  if (j.contains("reward")) {
    const auto& r = j["reward"];
    c.reward.speed = r.value("speed", c.reward.speed);
    c.reward.collision = r.value("collision", c.reward.collision);
    c.reward.lane_change = r.value("lane_change", c.reward.lane_change);
  }
  c.validate();
}

std::array<int, EnvState::kFields> EnvState::bins() const {
  return {lane, speed_bin, front_gap, front_rel_speed, target_front_gap, target_rear_gap};
}

namespace {

std::array<int, EnvState::kFields> radices(const EnvConfig& c) {
  const int g = c.gap_bins();
  return {c.lanes, c.speed_bins, g, EnvConfig::kRelSpeedBins, g, g};
}

}  // namespace

bool EnvState::valid(const EnvConfig& c) const {
  const auto b = bins();
  const auto r = radices(c);
  for (std::size_t i = 0; i < kFields; ++i)
    if (b[i] < 0 || b[i] >= r[i]) return false;
  return true;
}

StateId EnvState::id(const EnvConfig& c) const {
  if (!valid(c)) throw InputError("EnvState bins out of range");
  const auto b = bins();
  const auto r = radices(c);
  StateId id = 0;
  for (std::size_t i = 0; i < kFields; ++i) id = id * static_cast<StateId>(r[i]) + static_cast<StateId>(b[i]);
  return id;
}

EnvState EnvState::from_id(StateId id, const EnvConfig& c) {
  if (id >= c.num_states()) throw InputError("state id " + std::to_string(id) + " out of range");
  const auto r = radices(c);
  std::array<int, kFields> b{};
  for (std::size_t i = kFields; i-- > 0;) {
    b[i] = static_cast<int>(id % static_cast<StateId>(r[i]));
    id /= static_cast<StateId>(r[i]);
  }
  return {b[0], b[1], b[2], b[3], b[4], b[5]};
}

int hamming_distance(const EnvState& a, const EnvState& b) {
  const auto x = a.bins();
  const auto y = b.bins();
  int d = 0;
  for (std::size_t i = 0; i < EnvState::kFields; ++i) d += x[i] != y[i];
  return d;
}

LaneNeighbors scan_lane(std::span<const Vehicle> vehicles, std::size_t ego, int lane, double vehicle_length,
                        std::optional<double> ring_length) {
  LaneNeighbors out;
  const Vehicle& me = vehicles[ego];
  double best_front = std::numeric_limits<double>::infinity();
  double best_rear = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    if (i == ego || vehicles[i].lane != lane) continue;
    double ahead = vehicles[i].position - me.position;
    if (ring_length) {
      ahead = std::fmod(ahead, *ring_length);
      if (ahead < 0) ahead += *ring_length;
      // ahead in [0, L): leader at distance ahead, follower at L - ahead
      if (ahead < best_front) {
        best_front = ahead;
        out.front_speed = vehicles[i].speed;
      }
      const double behind = ahead == 0.0 ? 0.0 : *ring_length - ahead;
      best_rear = std::min(best_rear, behind);
    } else if (ahead >= 0.0) {
      if (ahead < best_front) {
        best_front = ahead;
        out.front_speed = vehicles[i].speed;
      }
    } else {
      best_rear = std::min(best_rear, -ahead);
    }
  }
  if (std::isfinite(best_front)) out.front_gap = best_front - vehicle_length;
  if (std::isfinite(best_rear)) out.rear_gap = best_rear - vehicle_length;
  return out;
}

std::optional<int> target_lane(std::span<const Vehicle> vehicles, std::size_t ego, const EnvConfig& c,
                               std::optional<double> ring_length) {
  const int lane = vehicles[ego].lane;
  std::optional<int> best;
  double best_gap = -std::numeric_limits<double>::infinity();
  for (int cand : {lane - 1, lane + 1}) {
    if (cand < 0 || cand >= c.lanes) continue;
    const auto n = scan_lane(vehicles, ego, cand, c.vehicle_length, ring_length);
    const double gap = n.front_gap.value_or(std::numeric_limits<double>::infinity());
    if (!best || gap > best_gap) {
      best = cand;
      best_gap = gap;
    }
  }
  return best;
}

int speed_bin(double speed, const EnvConfig& c) {
  const double width = c.max_speed / c.speed_bins;
  const int b = static_cast<int>(std::floor(std::max(speed, 0.0) / width));
  return std::clamp(b, 0, c.speed_bins - 1);
}

int gap_bin(std::optional<double> gap, const EnvConfig& c) {
  if (!gap) return c.gap_bins() - 1;
  const auto it = std::upper_bound(c.gap_edges.begin(), c.gap_edges.end(), *gap);
  return static_cast<int>(it - c.gap_edges.begin());
}

int rel_speed_bin(std::optional<double> front_speed, double ego_speed, const EnvConfig& c) {
  if (!front_speed) return 2;
  const double rel = *front_speed - ego_speed;
  if (rel < -c.rel_speed_threshold) return 0;
  if (rel > c.rel_speed_threshold) return 2;
  return 1;
}

EnvState observe(std::span<const Vehicle> vehicles, std::size_t ego, const EnvConfig& c,
                 std::optional<double> ring_length) {
  const Vehicle& me = vehicles[ego];
  const auto own = scan_lane(vehicles, ego, me.lane, c.vehicle_length, ring_length);
  EnvState s;
  s.lane = std::clamp(me.lane, 0, c.lanes - 1);
  s.speed_bin = speed_bin(me.speed, c);
  s.front_gap = gap_bin(own.front_gap, c);
  s.front_rel_speed = rel_speed_bin(own.front_speed, me.speed, c);
  if (const auto t = target_lane(vehicles, ego, c, ring_length)) {
    const auto side = scan_lane(vehicles, ego, *t, c.vehicle_length, ring_length);
    s.target_front_gap = gap_bin(side.front_gap, c);
    s.target_rear_gap = gap_bin(side.rear_gap, c);
  } else {
    s.target_front_gap = 0;
    s.target_rear_gap = 0;
  }
  return s;
}

HighwayEnv::HighwayEnv(EnvConfig config) : config_(std::move(config)) { config_.validate(); }

EnvState HighwayEnv::reset(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> lane(0, config_.lanes - 1);
  std::uniform_real_distribution<double> pos(0.0, config_.road_length);
  std::uniform_real_distribution<double> speed(config_.init_speed_min, config_.init_speed_max);
  const double spacing = config_.vehicle_length + 2.0;
  vehicles_.clear();
  steps_ = 0;
  while (static_cast<int>(vehicles_.size()) < config_.vehicles) {
    Vehicle v{pos(rng), lane(rng), speed(rng)};
    bool clear = true;
    for (const auto& o : vehicles_) {
      if (o.lane != v.lane) continue;
      double d = std::abs(o.position - v.position);
      d = std::min(d, config_.road_length - d);
      if (d < spacing) clear = false;
    }
    if (clear) vehicles_.push_back(v);
  }
  return observe(0);
}

EnvState HighwayEnv::observe(std::size_t vehicle) const {
  return lkgp::observe(vehicles_, vehicle, config_, config_.road_length);
}

HighwayEnv::Step HighwayEnv::step(std::span<const std::size_t> actions) {
  if (actions.size() != vehicles_.size()) throw InputError("HighwayEnv::step: one action per vehicle required");
  const double L = config_.road_length;
  std::vector<Vehicle> next = vehicles_;
  bool ego_changed = false;
  for (std::size_t i = 0; i < vehicles_.size(); ++i) {
    double a = 0.0;
    switch (actions[i]) {
      case action::kAccelerate: a = config_.accel; break;
      case action::kDecelerate: a = config_.decel; break;
      case action::kHardBrake: a = config_.hard_brake; break;
      case action::kChangeLane:
        if (const auto t = target_lane(vehicles_, i, config_, L)) {
          next[i].lane = *t;
          if (i == 0) ego_changed = true;
        }
        break;
      default: break;
    }
    const double v0 = vehicles_[i].speed;
    const double v1 = std::clamp(v0 + a * config_.dt, 0.0, config_.max_speed);
    next[i].speed = v1;
    next[i].position = std::fmod(vehicles_[i].position + 0.5 * (v0 + v1) * config_.dt, L);
  }

  // Resolve overlaps lane by lane. Ego involvement is a collision; other
  // followers are pushed back behind their leader.
  bool collision = false;
  for (int lane = 0; lane < config_.lanes; ++lane) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < next.size(); ++i)
      if (next[i].lane == lane) idx.push_back(i);
    if (idx.size() < 2) continue;
    std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return next[x].position < next[y].position; });
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const std::size_t follower = idx[k];
      const std::size_t leader = idx[(k + 1) % idx.size()];
      double ahead = next[leader].position - next[follower].position;
      if (ahead < 0) ahead += L;
      if (ahead - config_.vehicle_length >= 0.0) continue;
      if (follower == 0 || leader == 0) {
        collision = true;
      } else {
        next[follower].position = std::fmod(next[leader].position - config_.vehicle_length - 0.1 + L, L);
        next[follower].speed = std::min(next[follower].speed, next[leader].speed);
      }
    }
  }

  vehicles_ = std::move(next);
  ++steps_;
  Step s;
  s.collision = collision;
  s.reward = config_.reward.speed * vehicles_[0].speed / config_.max_speed -
             (ego_changed ? config_.reward.lane_change : 0.0) - (collision ? config_.reward.collision : 0.0);
  s.done = collision || steps_ >= config_.episode_steps;
  return s;
}

}  // namespace lkgp
