#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <vector>

#include "lkgp/policy.hpp"

namespace lkgp {

// Simplex coefficients over pure level-k strategies pi_0..pi_n.
class MixedStrategy {
 public:
  MixedStrategy() = default;
  // Validates nonnegativity and sum == 1 within `tol`.
  explicit MixedStrategy(std::vector<double> coeffs, double tol = 1e-12);

  static MixedStrategy pure(std::size_t levels, std::size_t k);
  static MixedStrategy uniform(std::size_t levels);

  std::size_t size() const { return coeffs_.size(); }
  double operator[](std::size_t k) const { return k < coeffs_.size() ? coeffs_[k] : 0.0; }
  const std::vector<double>& coeffs() const { return coeffs_; }

 private:
  std::vector<double> coeffs_;
};

// +1 iff the responder sits exactly one level above the opponent.
int pure_utility(int k, int j);

// sum_k sum_j cA_k cB_j u(k, j) = sum_j cA_{j+1} cB_j. With `pad`, strategies
// of unequal length are zero-extended; otherwise lengths must match.
double mixed_utility(const MixedStrategy& a, const MixedStrategy& b, bool pad = false);

struct BestResponseResult {
  std::set<int> levels;       // the responder levels {i + 1 : c_i attains the max}
  MixedStrategy strategy;     // over levels 0..n, uniform on `levels`
  double value = 0.0;         // max coefficient of the opponent
};

// Best response to an opponent mixing levels 0..n-1. `n` defaults to the
// opponent's length; an opponent of length n + 1 must put zero mass on level n.
BestResponseResult best_response_set(const MixedStrategy& opponent, double tie_tol = 1e-12);
BestResponseResult best_response_set_n(const MixedStrategy& opponent, std::size_t n, double tie_tol = 1e-12);

struct BruteForceResult {
  double max_utility = 0.0;
  std::vector<MixedStrategy> argmax;  // every grid strategy within tol of the max, over levels 0..n
};

// Enumerates every responder strategy on the simplex grid over levels 1..n
// (step must divide 1) and evaluates its utility against the opponent.
BruteForceResult brute_force_best_response(const MixedStrategy& opponent, double grid_step, std::size_t n = 0,
                                           double tol = 1e-12, std::size_t max_points = 10'000'000);

// Convex combination sum_k c_k pi_k.
Policy mixed_policy(const MixedStrategy& coeffs, std::span<const Policy> pure_policies);

}  // namespace lkgp
