#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lkgp {

using StateId = std::uint32_t;

// Probability distribution over the ordered action set at one state.
struct Policy {
  std::vector<double> probs;

  std::size_t size() const noexcept { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }

  // Entries in [0, 1] and summing to one within `tol`.
  bool valid(double tol = 1e-9) const;

  static Policy uniform(std::size_t n);
  static Policy one_hot(std::size_t n, std::size_t hot);
};

// Total-variation distance; both policies must have equal length.
double total_variation(const Policy& a, const Policy& b);

// Ordered action labels. The order is part of every serialized artifact since
// the K-S statistic is computed over prefix sums in this order.
class ActionSet {
 public:
  ActionSet();  // maintain, accelerate, decelerate, hard-brake, change-lane
  explicit ActionSet(std::vector<std::string> labels);

  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  std::size_t index_of(const std::string& label) const;

  bool operator==(const ActionSet&) const = default;

 private:
  std::vector<std::string> labels_;
};

// Index constants for the default action set.
namespace action {
inline constexpr std::size_t kMaintain = 0;
inline constexpr std::size_t kAccelerate = 1;
inline constexpr std::size_t kDecelerate = 2;
inline constexpr std::size_t kHardBrake = 3;
inline constexpr std::size_t kChangeLane = 4;
inline constexpr std::size_t kCount = 5;
}  // namespace action

}  // namespace lkgp
