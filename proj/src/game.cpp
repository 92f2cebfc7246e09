#include "lkgp/game.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "lkgp/error.hpp"

namespace lkgp {

MixedStrategy::MixedStrategy(std::vector<double> coeffs, double tol) : coeffs_(std::move(coeffs)) {
  if (coeffs_.empty()) throw InputError("mixed strategy needs at least one level");
  double sum = 0.0;
  for (double c : coeffs_) {
    if (!std::isfinite(c) || c < 0.0) throw InputError("mixed strategy coefficients must be finite and nonnegative");
    sum += c;
  }
  if (std::abs(sum - 1.0) > tol) throw InputError("mixed strategy coefficients must sum to 1");
}

MixedStrategy MixedStrategy::pure(std::size_t levels, std::size_t k) {
  if (k >= levels) throw InputError("pure strategy level out of range");
  std::vector<double> c(levels, 0.0);
  c[k] = 1.0;
  return MixedStrategy(std::move(c));
}

MixedStrategy MixedStrategy::uniform(std::size_t levels) {
  if (levels == 0) throw InputError("uniform strategy over zero levels");
  return MixedStrategy(std::vector<double>(levels, 1.0 / static_cast<double>(levels)), 1e-9);
}

int pure_utility(int k, int j) {
  if (k < 0 || j < 0) throw InputError("pure_utility: levels must be nonnegative");
  return k == j + 1 ? 1 : 0;
}

double mixed_utility(const MixedStrategy& a, const MixedStrategy& b, bool pad) {
  if (!pad && a.size() != b.size()) throw InputError("mixed_utility: strategy dimensions differ");
  double u = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) u += a[j + 1] * b[j];
  return u;
}

BestResponseResult best_response_set(const MixedStrategy& opponent, double tie_tol) {
  return best_response_set_n(opponent, opponent.size(), tie_tol);
}

BestResponseResult best_response_set_n(const MixedStrategy& opponent, std::size_t n, double tie_tol) {
  if (n == 0) throw InputError("best_response_set: n must be >= 1");
  if (opponent.size() > n + 1) throw DomainError("best_response_set: opponent has levels above n");
  if (opponent.size() == n + 1 && opponent[n] != 0.0)
    throw DomainError("best_response_set: opponent puts mass on level n, which has no responder level");

  double best = 0.0;
  for (std::size_t i = 0; i < n; ++i) best = std::max(best, opponent[i]);
  BestResponseResult r;
  r.value = best;
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(opponent[i] - best) <= tie_tol) r.levels.insert(static_cast<int>(i) + 1);

  std::vector<double> gamma(n + 1, 0.0);
  const double w = 1.0 / static_cast<double>(r.levels.size());
  for (int m : r.levels) gamma[static_cast<std::size_t>(m)] = w;
  r.strategy = MixedStrategy(std::move(gamma), 1e-9);
  return r;
}

namespace {

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

}  // namespace

BruteForceResult brute_force_best_response(const MixedStrategy& opponent, double grid_step, std::size_t n, double tol,
                                           std::size_t max_points) {
  if (n == 0) n = opponent.size();
  if (opponent.size() > n + 1 || (opponent.size() == n + 1 && opponent[n] != 0.0))
    throw DomainError("brute_force_best_response: opponent must be supported on levels 0..n-1");
  if (!(grid_step > 0.0) || grid_step > 1.0) throw InputError("brute_force_best_response: grid step must be in (0, 1]");
  const double inv = 1.0 / grid_step;
  const auto units = static_cast<std::size_t>(std::llround(inv));
  if (std::abs(inv - static_cast<double>(units)) > 1e-9) throw InputError("brute_force_best_response: grid step must divide 1");
  if (binomial(units + n, n) > static_cast<double>(max_points))
    throw InputError("brute_force_best_response: grid too large");

  // Compositions of `units` into n parts, assigned to levels 1..n.
  BruteForceResult out;
  out.max_utility = -1.0;
  std::vector<std::size_t> parts(n, 0);
  std::vector<std::vector<double>> hits;
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t idx, std::size_t left) {
    if (idx + 1 == n) {
      parts[idx] = left;
      double u = 0.0;
      for (std::size_t j = 0; j < n; ++j) u += (static_cast<double>(parts[j]) / static_cast<double>(units)) * opponent[j];
      if (u > out.max_utility + tol) {
        out.max_utility = u;
        hits.clear();
      }
      if (std::abs(u - out.max_utility) <= tol) {
        std::vector<double> c(n + 1, 0.0);
        for (std::size_t j = 0; j < n; ++j) c[j + 1] = static_cast<double>(parts[j]) / static_cast<double>(units);
        hits.push_back(std::move(c));
      }
      return;
    }
    for (std::size_t take = 0; take <= left; ++take) {
      parts[idx] = take;
      rec(idx + 1, left - take);
    }
  };
  rec(0, units);
  for (auto& c : hits) out.argmax.emplace_back(std::move(c), 1e-9);
  return out;
}

Policy mixed_policy(const MixedStrategy& coeffs, std::span<const Policy> pure_policies) {
  if (coeffs.size() != pure_policies.size()) throw InputError("mixed_policy: one coefficient per pure policy required");
  const std::size_t a = pure_policies.front().size();
  Policy out{std::vector<double>(a, 0.0)};
  for (std::size_t k = 0; k < pure_policies.size(); ++k) {
    if (pure_policies[k].size() != a) throw InputError("mixed_policy: policies disagree on action count");
    for (std::size_t i = 0; i < a; ++i) out.probs[i] += coeffs[k] * pure_policies[k].probs[i];
  }
  return out;
}

}  // namespace lkgp
