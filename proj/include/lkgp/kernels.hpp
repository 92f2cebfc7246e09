#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace lkgp {

// Matérn nu=3/2 covariance on the level axis:
//   k(d) = variance * (1 + sqrt(3) d / length_scale) * exp(-sqrt(3) d / length_scale)
// with d = |x - x'|.
struct Matern32Kernel {
  double variance = 1.0;
  double length_scale = 1.0;

  Matern32Kernel() = default;
  Matern32Kernel(double variance, double length_scale);

  double operator()(double x, double x_prime) const;
};

// Raw evaluation at distance d >= 0.
double matern32_eval(double d, double variance, double length_scale);

// Constant covariance.
struct BiasKernel {
  double variance = 1.0;

  BiasKernel() = default;
  explicit BiasKernel(double variance);

  double operator()(double, double) const { return variance; }
};

double bias_eval(double variance);

using BaseKernel = std::variant<Matern32Kernel, BiasKernel>;

double eval_base(const BaseKernel& k, double x, double x_prime);
double base_variance(const BaseKernel& k);
void set_base_variance(BaseKernel& k, double variance);

// B = W W^T + diag(kappa), optionally pinched onto the decomposition
// span{1} (+) 1^perp:
//   B' = C B C + (u^T B u) u u^T,   u = 1/sqrt(D),  C = I - u u^T.
// Pinching keeps B PSD and makes the all-ones vector an eigenvector of every
// coregionalization matrix, so the LMC posterior mean maps zero-sum residuals
// to zero-sum predictions.
class CoregionalizationMatrix {
 public:
  CoregionalizationMatrix() = default;
  CoregionalizationMatrix(Eigen::MatrixXd W, Eigen::VectorXd kappa, bool sum_preserving = false);

  // Identity-like default: W = 0 (D x rank), kappa = 1.
  static CoregionalizationMatrix identity(int output_dim, int rank, bool sum_preserving = false);

  int output_dim() const { return static_cast<int>(kappa_.size()); }
  int rank() const { return static_cast<int>(W_.cols()); }
  const Eigen::MatrixXd& W() const { return W_; }
  const Eigen::VectorXd& kappa() const { return kappa_; }
  bool sum_preserving() const { return sum_preserving_; }

  void set_W(Eigen::MatrixXd W);
  void set_kappa(Eigen::VectorXd kappa);

  const Eigen::MatrixXd& B() const { return B_; }

 private:
  void rebuild();

  Eigen::MatrixXd W_;
  Eigen::VectorXd kappa_;
  bool sum_preserving_ = false;
  Eigen::MatrixXd B_;
};

// Applies the sum-preserving pinch described above to a symmetric matrix.
Eigen::MatrixXd pinch_to_ones(const Eigen::MatrixXd& M);

// Kernel-bank configuration entry.
struct KernelSpec {
  enum class Type { kMatern32, kBias };
  Type type = Type::kMatern32;
  std::optional<double> beta;  // fixed length scale; null means 1.0
  std::optional<int> rank;     // null means min(D, 7)
};

struct KernelBankConfig {
  std::vector<KernelSpec> kernels;
  bool sum_preserving = true;

  // One bias kernel plus six Matérn-3/2 kernels with
  // beta in {0.25, 0.5, 0.75, 1.0, 1.25, 1.5}.
  static KernelBankConfig default_config();
};

void to_json(nlohmann::json& j, const KernelBankConfig& c);
void from_json(const nlohmann::json& j, KernelBankConfig& c);

struct KernelBankEntry {
  BaseKernel kernel;
  CoregionalizationMatrix coreg;
};

// Ordered list of (base kernel, coregionalization matrix) pairs sharing an
// output dimension D.
class KernelBank {
 public:
  KernelBank() = default;
  explicit KernelBank(std::vector<KernelBankEntry> entries);

  static KernelBank from_config(const KernelBankConfig& config, int output_dim);

  int output_dim() const { return output_dim_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<KernelBankEntry>& entries() const { return entries_; }
  std::vector<KernelBankEntry>& mutable_entries() { return entries_; }

 private:
  std::vector<KernelBankEntry> entries_;
  int output_dim_ = 0;
};

void to_json(nlohmann::json& j, const KernelBank& bank);
void from_json(const nlohmann::json& j, KernelBank& bank);

// Gram matrix of one base kernel between two level lists.
Eigen::MatrixXd base_gram(const BaseKernel& k, std::span<const double> xs, std::span<const double> ys);

// Sigma = sum_z B_z (x) k_z(X, X'). Row index is d * N + i (outer blocks by
// output dimension, inner by level), column index d' * M + j.
Eigen::MatrixXd lmc_covariance(std::span<const double> xs, std::span<const double> ys, const KernelBank& bank);

// Row-major dump with explicit (N, M, D) header.
nlohmann::json covariance_to_json(const Eigen::MatrixXd& cov, int n, int m, int d);
Eigen::MatrixXd covariance_from_json(const nlohmann::json& j);

}  // namespace lkgp
