#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "lkgp/env.hpp"
#include "lkgp/policy.hpp"

namespace lkgp {

// Per-level action values for visited states.
struct QTable {
  int level = 1;
  ActionSet actions;
  std::map<StateId, std::vector<double>> values;
  std::map<StateId, std::uint64_t> visits;

  bool contains(StateId s) const { return values.count(s) > 0; }

  // Populated state closest to `state` in Hamming distance on the bin tuple;
  // ties go to the lowest id. Throws InputError on an empty table.
  StateId nearest(StateId state, const EnvConfig& env) const;

  // Q-values at `state`, falling back to nearest() (logged) when unvisited.
  const std::vector<double>& lookup(StateId state, const EnvConfig& env) const;

  // FNV hash of the serialized contents; equal tables hash equally.
  std::uint64_t hash() const;
};

nlohmann::json qtable_to_json(const QTable& t);
QTable qtable_from_json(const nlohmann::json& j);

// pi(a_i) = exp(q_i) / sum_j exp(q_j), evaluated with max subtraction.
Policy softmax_policy(std::span<const double> q_values);

// Hand-crafted lane-keeping rule, smoothed with `epsilon` mass on every other
// action:
//   tiny front gap                      -> hard-brake
//   short gap and closing               -> decelerate
//   largest gap bin and below top speed -> accelerate
//   otherwise                           -> maintain
Policy level0_policy(const EnvState& state, const EnvConfig& env, double epsilon = 0.01,
                     std::size_t num_actions = action::kCount);

// Dense per-state policy lookup used for simulated traffic.
class PolicyTable {
 public:
  PolicyTable() = default;
  static PolicyTable level0(const EnvConfig& env, double epsilon = 0.01);
  // softmax(Q) at every state, unvisited states resolved by nearest().
  static PolicyTable from_qtable(const QTable& table, const EnvConfig& env);

  const Policy& at(StateId s) const { return policies_.at(s); }
  std::size_t size() const { return policies_.size(); }

 private:
  std::vector<Policy> policies_;
};

struct RlConfig {
  int episodes = 3000;
  int min_episodes = 500;
  double learning_rate = 0.1;
  double discount = 0.9;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double q_init = 0.0;
  double td_threshold = 0.05;  // convergence when the TD-error moving average drops below this
  double td_smoothing = 1e-3;  // exponential moving-average weight per update
  double level0_epsilon = 0.01;
};

void to_json(nlohmann::json& j, const RlConfig& c);
void from_json(const nlohmann::json& j, RlConfig& c);

struct TrainResult {
  QTable table;
  bool converged = false;
  double td_error = 0.0;  // final moving average
  int episodes = 0;
};

// Epsilon-greedy tabular Q-learning for the ego vehicle against traffic that
// samples actions from `opponents`. Deterministic given `seed`.
TrainResult train_level_k(const EnvConfig& env, const PolicyTable& opponents, const RlConfig& rl, int level,
                          std::uint64_t seed);

// Trains levels 1..max_level sequentially, each against homogeneous traffic
// of the previous level.
std::vector<TrainResult> train_levels(const EnvConfig& env, const RlConfig& rl, int max_level, std::uint64_t seed);

// pi_0 (rule) followed by softmax(Q_k) for k = 1..n.
std::vector<Policy> build_observation_set(StateId state, std::span<const QTable> tables, const EnvConfig& env,
                                          double level0_epsilon = 0.01);

// Average undiscounted episode return of an ego policy (greedy or sampled)
// against traffic drawn from `opponents`.
enum class EgoMode { kGreedy, kSample };
double evaluate_ego(const EnvConfig& env, const PolicyTable& ego, const PolicyTable& opponents, int episodes,
                    std::uint64_t seed, EgoMode mode = EgoMode::kGreedy);

}  // namespace lkgp
