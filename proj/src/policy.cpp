#include "lkgp/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lkgp/error.hpp"

namespace lkgp {

bool Policy::valid(double tol) const {
  if (probs.empty()) return false;
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0 + tol) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

Policy Policy::uniform(std::size_t n) {
  if (n == 0) throw InputError("uniform policy over zero actions");
  return Policy{std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

Policy Policy::one_hot(std::size_t n, std::size_t hot) {
  if (hot >= n) throw InputError("one-hot index out of range");
  Policy p{std::vector<double>(n, 0.0)};
  p.probs[hot] = 1.0;
  return p;
}

double total_variation(const Policy& a, const Policy& b) {
  if (a.size() != b.size()) throw InputError("policy length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return 0.5 * d;
}

ActionSet::ActionSet()
    : labels_{"maintain", "accelerate", "decelerate", "hard-brake", "change-lane"} {}

ActionSet::ActionSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  if (labels_.size() < 2) throw InputError("action set needs at least two actions");
}

std::size_t ActionSet::index_of(const std::string& label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw InputError("unknown action label: " + label);
  return static_cast<std::size_t>(it - labels_.begin());
}

}  // namespace lkgp
