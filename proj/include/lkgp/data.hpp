#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lkgp/env.hpp"
#include "lkgp/fitting.hpp"
#include "lkgp/gp.hpp"

namespace lkgp {

// Trajectory CSV conventions. Columns: vehicle_id,frame,local_x,local_y,lane_id,velocity
// with local_y the longitudinal coordinate.
struct DataConfig {
  double frame_dt = 0.1;          // s between consecutive frames
  double maintain_band = 0.5;     // |a| below this is "maintain" (m/s^2)
  double hard_brake_below = -2.5; // a at or below this is "hard-brake"
  int first_lane_id = 1;          // lane_id of the leftmost lane
  bool ngsim_units = false;       // source in feet and ft/s

  void validate() const;
};

void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);

struct TrajectoryRow {
  std::string vehicle_id;
  std::int64_t frame = 0;
  double local_x = 0.0;
  double local_y = 0.0;  // longitudinal, m
  int lane_id = 0;
  double velocity = 0.0;  // m/s
};

// Action taken between two samples `frames` apart. A lane-id change wins over
// any longitudinal label.
std::size_t label_action(double v0, double v1, int lane0, int lane1, std::int64_t frames, const DataConfig& cfg);

struct IngestResult {
  std::vector<DriverRecord> records;  // sorted by driver id; vehicles with no labeled step are dropped
  std::size_t rows_read = 0;
  std::size_t rows_rejected = 0;      // non-increasing frames or non-finite values
  std::size_t transitions = 0;
};

IngestResult ingest_trajectories(const std::filesystem::path& csv, const EnvConfig& env, const DataConfig& cfg = {});
IngestResult ingest_trajectories(std::istream& csv, const EnvConfig& env, const DataConfig& cfg = {});

// Writes a trajectory CSV whose ingestion reproduces `records` exactly. Every
// sample becomes its own two-frame scene in which neighbours are placed to
// realize the state's bins and the ego's second frame realizes the action.
void export_trajectories(std::span<const DriverRecord> records, const EnvConfig& env, std::ostream& out,
                         const DataConfig& cfg = {});
void export_trajectories(std::span<const DriverRecord> records, const EnvConfig& env,
                         const std::filesystem::path& csv, const DataConfig& cfg = {});

struct SyntheticDriverSpec {
  std::string driver_id;
  double level = 0.0;                          // true level in [0, 3]
  std::optional<std::vector<double>> mixture;  // if set, sum_k c_k pi_k instead of the GP policy
  std::vector<StateId> states;
  std::uint64_t samples_per_state = 500;
  std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const SyntheticDriverSpec& s);
void from_json(const nlohmann::json& j, SyntheticDriverSpec& s);

// Generating policy for one state: shift-normalized GP mean at `level`, or
// the mixture of the model's training policies.
Policy synthetic_policy(const SyntheticDriverSpec& spec, const StateGP& gp);

// i.i.d. action samples per state; each state draws from its own seeded stream.
DriverRecord synthesize_driver(const SyntheticDriverSpec& spec, GpCache& models);

nlohmann::json records_to_json(std::span<const DriverRecord> records);
std::vector<DriverRecord> records_from_json(const nlohmann::json& j);

}  // namespace lkgp
