#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "lkgp/error.hpp"
#include "lkgp/levelk.hpp"

using namespace lkgp;

TEST_CASE("softmax") {
  const std::vector<double> flat{1, 1, 1, 1};
  for (double p : softmax_policy(flat).probs) CHECK(p == doctest::Approx(0.25));

  const std::vector<double> two{std::log(2.0), 0.0};
  const auto p = softmax_policy(two);
  CHECK(p.probs[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(p.probs[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const std::vector<double> q{0.3, -1.2, 2.5, 0.0, 1.1};
  std::vector<double> shifted = q;
  for (auto& v : shifted) v += 800.0;  // would overflow exp() without max subtraction
  const auto a = softmax_policy(q), b = softmax_policy(shifted);
  for (std::size_t i = 0; i < q.size(); ++i) CHECK(a.probs[i] == doctest::Approx(b.probs[i]).epsilon(1e-12));
  CHECK(b.valid(1e-9));

  const std::vector<double> bad{0.0, std::nan("")};
  CHECK_THROWS_AS(softmax_policy(bad), InputError);
}

TEST_CASE("level-0 rule") {
  const EnvConfig env;
  const double eps = 0.01;
  const auto brake = level0_policy(EnvState{1, 3, 0, 1, 2, 2}, env, eps);
  CHECK(brake.probs[action::kHardBrake] == doctest::Approx(1.0 - eps * 4));
  CHECK(brake.probs[action::kMaintain] == doctest::Approx(eps));

  const auto slow = level0_policy(EnvState{1, 3, 1, 0, 2, 2}, env, eps);
  CHECK(slow.probs[action::kDecelerate] == doctest::Approx(0.96));

  const auto open = level0_policy(EnvState{0, 1, 3, 2, 0, 0}, env, eps);
  CHECK(open.probs[action::kAccelerate] == doctest::Approx(0.96));

  const auto cruise = level0_policy(EnvState{0, 4, 3, 2, 0, 0}, env, eps);
  CHECK(cruise.probs[action::kMaintain] == doctest::Approx(0.96));

  const auto pure = level0_policy(EnvState{1, 3, 0, 1, 2, 2}, env, 0.0);
  CHECK(pure.probs[action::kHardBrake] == 1.0);
  CHECK(std::accumulate(pure.probs.begin(), pure.probs.end(), 0.0) == 1.0);
}

TEST_CASE("nearest populated state: Hamming distance, lowest id on ties") {
  const EnvConfig env;
  QTable t;
  const EnvState a{0, 0, 0, 0, 0, 0}, b{0, 0, 0, 0, 1, 1}, c{2, 0, 0, 0, 0, 1};
  t.values[b.id(env)] = {1, 0, 0, 0, 0};
  t.values[c.id(env)] = {2, 0, 0, 0, 0};
  // a is 2 away from both b and c; b has the lower id
  REQUIRE(b.id(env) < c.id(env));
  CHECK(t.nearest(a.id(env), env) == b.id(env));
  CHECK(t.lookup(a.id(env), env)[0] == 1.0);
  CHECK(t.nearest(c.id(env), env) == c.id(env));
  CHECK_THROWS_AS(QTable{}.nearest(0, env), InputError);
}

TEST_CASE("observation set") {
  const EnvConfig env;
  QTable t1, t2, t3;
  t1.level = 1;
  t2.level = 2;
  t3.level = 3;
  t1.values[5] = {1, 0, 0, 0, 0};
  t2.values[5] = {0, 1, 0, 0, 0};
  t3.values[7] = {0, 0, 1, 0, 0};
  const std::vector<QTable> tables{t1, t2, t3};
  const auto set = build_observation_set(5, tables, env);
  REQUIRE(set.size() == 4);
  const auto l0 = level0_policy(EnvState::from_id(5, env), env);
  CHECK(set[0].probs == l0.probs);
  for (const auto& p : set) CHECK(p.valid(1e-9));
  CHECK(set[3].probs[2] > set[3].probs[0]);  // resolved through the fallback
}

TEST_CASE("QTable JSON round trip preserves the hash") {
  QTable t;
  t.level = 2;
  t.values[3] = {0.5, -1.0, 2.0, 0.0, 0.25};
  t.visits[3] = 7;
  const auto back = qtable_from_json(qtable_to_json(t));
  CHECK(back.level == 2);
  CHECK(back.values.at(3) == t.values.at(3));
  CHECK(back.hash() == t.hash());
  t.values[3][0] = 0.6;
  CHECK(back.hash() != t.hash());
}

TEST_CASE("zero learning rate leaves the table at its initialization") {
  const EnvConfig env;
  RlConfig rl;
  rl.episodes = 30;
  rl.min_episodes = 30;
  rl.learning_rate = 0.0;
  rl.q_init = 0.75;
  const auto r = train_level_k(env, PolicyTable::level0(env), rl, 1, 9);
  REQUIRE(!r.table.values.empty());
  for (const auto& [s, q] : r.table.values)
    for (double v : q) CHECK(v == 0.75);
}

TEST_CASE("training is deterministic given the seed") {
  const EnvConfig env;
  RlConfig rl;
  rl.episodes = 200;
  rl.min_episodes = 200;
  const auto opp = PolicyTable::level0(env);
  const auto a = train_level_k(env, opp, rl, 1, 42);
  const auto b = train_level_k(env, opp, rl, 1, 42);
  const auto c = train_level_k(env, opp, rl, 1, 43);
  CHECK(a.table.hash() == b.table.hash());
  CHECK(a.table.hash() != c.table.hash());
  CHECK(a.episodes == 200);
}

TEST_CASE("invalid RL config is rejected") {
  nlohmann::json j = RlConfig{};
  j["learning_rate"] = 1.5;
  CHECK_THROWS_AS(j.get<RlConfig>(), ConfigError);
  j = RlConfig{};
  j["discount"] = 1.0;
  CHECK_THROWS_AS(j.get<RlConfig>(), ConfigError);
}

TEST_CASE("trained level-1 is a sensible best response to level-0 traffic") {
  const EnvConfig env;
  RlConfig rl;
  rl.episodes = 30000;
  const auto l0 = PolicyTable::level0(env);
  const auto r = train_level_k(env, l0, rl, 1, 2024);
  CHECK(r.episodes <= rl.episodes);

  // Closing in at a tiny gap: braking is worth more than accelerating, on a
  // visit-weighted average over those states (individual rarely-seen states
  // are still noisy after tabular training).
  double diff = 0.0, weight = 0.0;
  for (const auto& [s, q] : r.table.values) {
    const auto st = EnvState::from_id(s, env);
    const auto n = static_cast<double>(r.table.visits.at(s));
    if (st.front_gap != 0 || st.front_rel_speed != 0 || n < 20) continue;
    diff += n * (q[action::kHardBrake] - q[action::kAccelerate]);
    weight += n;
  }
  REQUIRE(weight > 0);
  CHECK(diff / weight > 0.0);

  // Averaged over 20 evaluation seeds against level-0 traffic.
  const auto l1 = PolicyTable::from_qtable(r.table, env);
  double u0 = 0.0, u1 = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    u0 += evaluate_ego(env, l0, l0, 20, 1000 + seed);
    u1 += evaluate_ego(env, l1, l0, 20, 1000 + seed);
  }
  MESSAGE("level-0 return " << u0 / 20 << ", level-1 return " << u1 / 20);
  CHECK(u1 > u0);
}
