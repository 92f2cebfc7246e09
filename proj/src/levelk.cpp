#include "lkgp/levelk.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "lkgp/error.hpp"
#include "lkgp/rng.hpp"

namespace lkgp {

namespace {

constexpr int kQTableVersion = 1;

std::size_t sample(const Policy& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double x = u(rng);
  for (std::size_t i = 0; i + 1 < p.size(); ++i) {
    if (x < p.probs[i]) return i;
    x -= p.probs[i];
  }
  return p.size() - 1;
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

StateId QTable::nearest(StateId state, const EnvConfig& env) const {
  if (values.empty()) throw InputError("QTable level " + std::to_string(level) + " is empty");
  if (values.count(state)) return state;
  const EnvState target = EnvState::from_id(state, env);
  StateId best = values.begin()->first;
  int best_d = std::numeric_limits<int>::max();
  for (const auto& [id, q] : values) {  // ascending ids: first hit wins ties
    const int d = hamming_distance(target, EnvState::from_id(id, env));
    if (d < best_d) {
      best_d = d;
      best = id;
    }
  }
  return best;
}

const std::vector<double>& QTable::lookup(StateId state, const EnvConfig& env) const {
  if (auto it = values.find(state); it != values.end()) return it->second;
  const StateId n = nearest(state, env);
  spdlog::debug("level {}: state {} not visited in training, using nearest state {}", level, state, n);
  return values.at(n);
}

nlohmann::json qtable_to_json(const QTable& t) {
  nlohmann::json j;
  j["version"] = kQTableVersion;
  j["level"] = t.level;
  j["actions"] = t.actions.labels();
  auto states = nlohmann::json::array();
  for (const auto& [id, q] : t.values) {
    const auto v = t.visits.find(id);
    states.push_back({{"id", id}, {"q", q}, {"visits", v == t.visits.end() ? 0 : v->second}});
  }
  j["states"] = std::move(states);
  return j;
}

QTable qtable_from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kQTableVersion) throw SchemaError("QTable: unsupported version");
  QTable t;
  t.level = j.at("level").get<int>();
  t.actions = ActionSet(j.at("actions").get<std::vector<std::string>>());
  for (const auto& s : j.at("states")) {
    const auto id = s.at("id").get<StateId>();
    auto q = s.at("q").get<std::vector<double>>();
    if (q.size() != t.actions.size()) throw SchemaError("QTable: action count mismatch at state " + std::to_string(id));
    for (double v : q)
      if (!std::isfinite(v)) throw SchemaError("QTable: non-finite value");
    t.values.emplace(id, std::move(q));
    t.visits.emplace(id, s.value("visits", std::uint64_t{0}));
  }
  return t;
}

std::uint64_t QTable::hash() const { return stable_hash(qtable_to_json(*this).dump()); }

Policy softmax_policy(std::span<const double> q) {
  if (q.empty()) throw InputError("softmax_policy: empty input");
  for (double v : q)
    if (std::isnan(v)) throw InputError("softmax_policy: NaN input");
  const double m = *std::max_element(q.begin(), q.end());
  if (!std::isfinite(m)) throw InputError("softmax_policy: non-finite input");
  Policy p{std::vector<double>(q.size())};
  double sum = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) sum += (p.probs[i] = std::exp(q[i] - m));
  for (auto& v : p.probs) v /= sum;
  return p;
}

Policy level0_policy(const EnvState& s, const EnvConfig& env, double epsilon, std::size_t num_actions) {
  if (num_actions < action::kCount) throw InputError("level0_policy needs the default action set");
  if (epsilon < 0.0 || epsilon * static_cast<double>(num_actions - 1) > 1.0)
    throw InputError("level0_policy: epsilon out of range");
  std::size_t choice = action::kMaintain;
  if (s.front_gap == 0)
    choice = action::kHardBrake;
  else if (s.front_gap == 1 && s.front_rel_speed == 0)
    choice = action::kDecelerate;
  else if (s.front_gap == env.gap_bins() - 1 && s.speed_bin < env.speed_bins - 1)
    choice = action::kAccelerate;
  Policy p{std::vector<double>(num_actions, epsilon)};
  p.probs[choice] = 1.0 - epsilon * static_cast<double>(num_actions - 1);
  return p;
}

PolicyTable PolicyTable::level0(const EnvConfig& env, double epsilon) {
  PolicyTable t;
  t.policies_.reserve(env.num_states());
  for (StateId s = 0; s < env.num_states(); ++s) t.policies_.push_back(level0_policy(EnvState::from_id(s, env), env, epsilon));
  return t;
}

PolicyTable PolicyTable::from_qtable(const QTable& table, const EnvConfig& env) {
  PolicyTable t;
  t.policies_.reserve(env.num_states());
  for (StateId s = 0; s < env.num_states(); ++s) {
    const auto it = table.values.find(s);
    const auto& q = it != table.values.end() ? it->second : table.values.at(table.nearest(s, env));
    t.policies_.push_back(softmax_policy(q));
  }
  return t;
}

void to_json(nlohmann::json& j, const RlConfig& c) {
  j = nlohmann::json{{"episodes", c.episodes},         {"min_episodes", c.min_episodes},
                     {"learning_rate", c.learning_rate}, {"discount", c.discount},
                     {"epsilon_start", c.epsilon_start}, {"epsilon_end", c.epsilon_end},
                     {"q_init", c.q_init},               {"td_threshold", c.td_threshold},
                     {"td_smoothing", c.td_smoothing},   {"level0_epsilon", c.level0_epsilon}};
}

void from_json(const nlohmann::json& j, RlConfig& c) {
  c = RlConfig{};
  c.episodes = j.value("episodes", c.episodes);
  c.min_episodes = j.value("min_episodes", c.min_episodes);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.discount = j.value("discount", c.discount);
  c.epsilon_start = j.value("epsilon_start", c.epsilon_start);
  c.epsilon_end = j.value("epsilon_end", c.epsilon_end);
  c.q_init = j.value("q_init", c.q_init);
  c.td_threshold = j.value("td_threshold", c.td_threshold);
  c.td_smoothing = j.value("td_smoothing", c.td_smoothing);
  c.level0_epsilon = j.value("level0_epsilon", c.level0_epsilon);
  if (c.episodes < 1 || c.min_episodes < 0) throw ConfigError("rl: episodes must be >= 1");
  if (c.learning_rate < 0 || c.learning_rate > 1) throw ConfigError("rl: learning rate must be in [0, 1]");
  if (c.discount < 0 || c.discount >= 1) throw ConfigError("rl: discount must be in [0, 1)");
  if (c.epsilon_start < 0 || c.epsilon_start > 1 || c.epsilon_end < 0 || c.epsilon_end > 1)
    throw ConfigError("rl: exploration rates must be in [0, 1]");
}

TrainResult train_level_k(const EnvConfig& env, const PolicyTable& opponents, const RlConfig& rl, int level,
                          std::uint64_t seed) {
  if (level < 1) throw InputError("train_level_k: level must be >= 1");
  if (opponents.size() != env.num_states()) throw InputError("train_level_k: opponent table does not cover the state space");

  const std::size_t na = action::kCount;
  const std::size_t ns = env.num_states();
  std::vector<double> q(ns * na, rl.q_init);
  std::vector<std::uint64_t> visits(ns, 0);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any_action(0, na - 1);
  HighwayEnv sim(env);

  TrainResult result;
  double td_avg = 1.0;
  std::vector<std::size_t> actions(static_cast<std::size_t>(env.vehicles));
  for (int ep = 0; ep < rl.episodes; ++ep) {
    const double frac = rl.episodes > 1 ? static_cast<double>(ep) / (rl.episodes - 1) : 1.0;
    const double eps = rl.epsilon_start + (rl.epsilon_end - rl.epsilon_start) * frac;
    StateId s = sim.reset(rng).id(env);
    for (;;) {
      std::span<const double> qs(&q[s * na], na);
      actions[0] = unit(rng) < eps ? any_action(rng) : argmax(qs);
      for (std::size_t v = 1; v < actions.size(); ++v) actions[v] = sample(opponents.at(sim.observe(v).id(env)), rng);
      const auto step = sim.step(actions);
      const StateId s2 = sim.observe(0).id(env);
      double target = step.reward;
      if (!step.collision) {
        // time-limit truncation still bootstraps
        std::span<const double> q2(&q[s2 * na], na);
        target += rl.discount * *std::max_element(q2.begin(), q2.end());
      }
      double& cell = q[s * na + actions[0]];
      const double td = target - cell;
      cell += rl.learning_rate * td;
      ++visits[s];
      td_avg += rl.td_smoothing * (std::abs(td) - td_avg);
      s = s2;
      if (step.done) break;
    }
    result.episodes = ep + 1;
    if (ep + 1 >= rl.min_episodes && td_avg < rl.td_threshold) {
      result.converged = true;
      break;
    }
  }
  result.td_error = td_avg;
  if (!result.converged)
    spdlog::info("level {}: episode cap {} reached with TD error {:.4f} (flagged non-converged)", level, rl.episodes,
                 td_avg);

  result.table.level = level;
  for (StateId s = 0; s < ns; ++s) {
    if (visits[s] == 0) continue;
    result.table.values.emplace(s, std::vector<double>(q.begin() + s * na, q.begin() + (s + 1) * na));
    result.table.visits.emplace(s, visits[s]);
  }
  return result;
}

std::vector<TrainResult> train_levels(const EnvConfig& env, const RlConfig& rl, int max_level, std::uint64_t seed) {
  if (max_level < 1) throw InputError("train_levels: max level must be >= 1");
  std::vector<TrainResult> out;
  PolicyTable opponents = PolicyTable::level0(env, rl.level0_epsilon);
  for (int k = 1; k <= max_level; ++k) {
    out.push_back(train_level_k(env, opponents, rl, k, derive_seed({seed, static_cast<std::uint64_t>(k)})));
    spdlog::info("level {}: {} episodes, {} states visited, TD {:.4f}", k, out.back().episodes,
                 out.back().table.values.size(), out.back().td_error);
    opponents = PolicyTable::from_qtable(out.back().table, env);
  }
  return out;
}

std::vector<Policy> build_observation_set(StateId state, std::span<const QTable> tables, const EnvConfig& env,
                                          double level0_epsilon) {
  std::vector<Policy> out;
  out.push_back(level0_policy(EnvState::from_id(state, env), env, level0_epsilon));
  for (std::size_t k = 0; k < tables.size(); ++k) {
    if (tables[k].level != static_cast<int>(k) + 1) throw InputError("build_observation_set: tables must be levels 1..n in order");
    if (!tables[k].contains(state)) {
      const StateId n = tables[k].nearest(state, env);
      spdlog::warn("level {}: state {} missing from training, falling back to nearest state {}", k + 1, state, n);
    }
    out.push_back(softmax_policy(tables[k].lookup(state, env)));
  }
  return out;
}

double evaluate_ego(const EnvConfig& env, const PolicyTable& ego, const PolicyTable& opponents, int episodes,
                    std::uint64_t seed, EgoMode mode) {
  std::mt19937_64 rng(seed);
  HighwayEnv sim(env);
  std::vector<std::size_t> actions(static_cast<std::size_t>(env.vehicles));
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    sim.reset(rng);
    for (;;) {
      const Policy& p = ego.at(sim.observe(0).id(env));
      actions[0] = mode == EgoMode::kGreedy ? argmax(p.probs) : sample(p, rng);
      for (std::size_t v = 1; v < actions.size(); ++v) actions[v] = sample(opponents.at(sim.observe(v).id(env)), rng);
      const auto step = sim.step(actions);
      total += step.reward;
      if (step.done) break;
    }
  }
  return total / episodes;
}

}  // namespace lkgp
