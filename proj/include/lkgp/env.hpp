#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "lkgp/policy.hpp"

namespace lkgp {

struct RewardWeights {
  double speed = 1.0;        // per step, times v / v_max
  double collision = 10.0;   // ego collision, ends the episode
  double lane_change = 0.1;  // per executed lane change
};

// Toy multi-lane ring road. Also defines the discretization shared with
// trajectory ingestion.
struct EnvConfig {
  int lanes = 3;
  int vehicles = 10;
  double road_length = 300.0;  // m
  double dt = 0.5;             // s
  double max_speed = 30.0;     // m/s
  int speed_bins = 5;
  std::vector<double> gap_edges{10.0, 25.0, 50.0};  // m; 4 gap bins
  double rel_speed_threshold = 2.0;                 // m/s; 3 relative-speed bins
  double vehicle_length = 5.0;                      // m
  double accel = 2.0;                               // m/s^2 for accelerate
  double decel = -2.0;                              // decelerate
  double hard_brake = -5.0;                         // hard-brake
  double init_speed_min = 10.0;
  double init_speed_max = 25.0;
  int episode_steps = 100;
  RewardWeights reward;

  int gap_bins() const { return static_cast<int>(gap_edges.size()) + 1; }
  static constexpr int kRelSpeedBins = 3;
  std::size_t num_states() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const EnvConfig& c);
void from_json(const nlohmann::json& j, EnvConfig& c);

// Discretized observation. The id is a mixed-radix encoding of the bin tuple
// (lane, speed, front gap, front relative speed, target front gap, target
// rear gap), so id <-> tuple is a bijection.
struct EnvState {
  int lane = 0;
  int speed_bin = 0;
  int front_gap = 0;
  int front_rel_speed = 0;  // 0 closing, 1 steady, 2 opening
  int target_front_gap = 0;
  int target_rear_gap = 0;

  static constexpr std::size_t kFields = 6;
  std::array<int, kFields> bins() const;
  StateId id(const EnvConfig& c) const;
  static EnvState from_id(StateId id, const EnvConfig& c);
  bool valid(const EnvConfig& c) const;
  bool operator==(const EnvState&) const = default;
};

int hamming_distance(const EnvState& a, const EnvState& b);

struct Vehicle {
  double position = 0.0;  // longitudinal, front bumper (m)
  int lane = 0;
  double speed = 0.0;  // m/s
};

struct LaneNeighbors {
  std::optional<double> front_gap;
  std::optional<double> front_speed;
  std::optional<double> rear_gap;
};

// Nearest leader/follower of `ego` in `lane`. Gaps are bumper-to-bumper.
// With `ring_length`, positions wrap around.
LaneNeighbors scan_lane(std::span<const Vehicle> vehicles, std::size_t ego, int lane, double vehicle_length,
                        std::optional<double> ring_length);

// Adjacent lane with the larger front gap (no leader counts as infinite);
// ties go to the lower lane index. Returns nullopt for single-lane roads.
std::optional<int> target_lane(std::span<const Vehicle> vehicles, std::size_t ego, const EnvConfig& c,
                               std::optional<double> ring_length);

int speed_bin(double speed, const EnvConfig& c);
int gap_bin(std::optional<double> gap, const EnvConfig& c);
int rel_speed_bin(std::optional<double> front_speed, double ego_speed, const EnvConfig& c);

EnvState observe(std::span<const Vehicle> vehicles, std::size_t ego, const EnvConfig& c,
                 std::optional<double> ring_length);

// Ring-road simulator with vehicle 0 as ego.
class HighwayEnv {
 public:
  struct Step {
    double reward = 0.0;
    bool collision = false;
    bool done = false;
  };

  explicit HighwayEnv(EnvConfig config);

  // Random placement; returns ego observation.
  EnvState reset(std::mt19937_64& rng);
  EnvState observe(std::size_t vehicle) const;

  // Applies one action per vehicle (index 0 is ego).
  Step step(std::span<const std::size_t> actions);

  const EnvConfig& config() const { return config_; }
  const std::vector<Vehicle>& vehicles() const { return vehicles_; }
  void set_vehicles(std::vector<Vehicle> v) { vehicles_ = std::move(v); }

 private:
  EnvConfig config_;
  std::vector<Vehicle> vehicles_;
  int steps_ = 0;
};

}  // namespace lkgp
