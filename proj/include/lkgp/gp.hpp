#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "lkgp/kernels.hpp"
#include "lkgp/policy.hpp"

namespace lkgp {

struct OptimizerConfig {
  int restarts = 4;
  int max_iterations = 200;
  double tolerance = 1e-6;  // stop when the relative objective change falls below this
  double min_variance = 1e-2;
  double max_variance = 1e2;
  std::uint64_t seed = 0;
};

enum class PriorMean {
  kZero,
  kTrainingMean,  // per-action mean of the training policies
};

struct GpConfig {
  KernelBankConfig bank = KernelBankConfig::default_config();
  OptimizerConfig optimizer;
  double jitter = 1e-6;
  double max_jitter = 1e-2;
  PriorMean prior_mean = PriorMean::kTrainingMean;
};

void to_json(nlohmann::json& j, const GpConfig& c);
void from_json(const nlohmann::json& j, GpConfig& c);

struct PolicyPrediction {
  Eigen::VectorXd mean;  // raw predictive mean, before normalization repair
  Eigen::MatrixXd cov;   // A x A predictive covariance
  double level = 0.0;    // level actually evaluated (after clamping)
};

struct FitDiagnostics {
  double initial_log_likelihood = 0.0;  // first restart, before optimization
  double log_likelihood = 0.0;
  int restarts = 0;
  int evaluations = 0;
};

// Multi-output GP over the level axis for one state. Immutable once built;
// safe to share across threads.
class StateGP {
 public:
  // Conditions the GP on the training set with fixed hyperparameters.
  // Escalates jitter by 10x from `jitter` up to `max_jitter` until Cholesky
  // succeeds; throws NumericalError otherwise.
  static StateGP condition(StateId state, std::vector<double> levels, std::vector<Policy> policies,
                           KernelBank bank, double jitter = 1e-6, double max_jitter = 1e-2,
                           PriorMean prior_mean = PriorMean::kTrainingMean);

  StateId state() const { return state_; }
  const std::vector<double>& levels() const { return levels_; }
  const std::vector<Policy>& policies() const { return policies_; }
  const KernelBank& bank() const { return bank_; }
  double jitter() const { return jitter_; }
  PriorMean prior_mean_kind() const { return prior_mean_kind_; }
  const Eigen::VectorXd& prior_mean() const { return prior_mean_; }
  const Eigen::MatrixXd& chol() const { return chol_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }
  int output_dim() const { return bank_.output_dim(); }
  double min_level() const { return levels_.front(); }
  double max_level() const { return levels_.back(); }

  // Training residual vector f - m in output-major layout (d * N + i).
  const Eigen::VectorXd& residual() const { return residual_; }

  double log_marginal_likelihood() const;

  // Levels outside [min_level, max_level] are clamped with a warning.
  PolicyPrediction predict(double level) const;

  const FitDiagnostics& diagnostics() const { return diagnostics_; }
  void set_diagnostics(const FitDiagnostics& d) { diagnostics_ = d; }

 private:
  StateGP() = default;

  StateId state_ = 0;
  std::vector<double> levels_;
  std::vector<Policy> policies_;
  KernelBank bank_;
  double jitter_ = 0.0;
  PriorMean prior_mean_kind_ = PriorMean::kTrainingMean;
  Eigen::VectorXd prior_mean_;
  Eigen::VectorXd residual_;
  Eigen::MatrixXd chol_;
  Eigen::VectorXd alpha_;
  FitDiagnostics diagnostics_;
};

// Gaussian log density of residual r under N(0, L L^T) given the lower
// Cholesky factor L.
double gaussian_log_likelihood(const Eigen::MatrixXd& chol_lower, const Eigen::VectorXd& r);

// Fits hyperparameters (kernel variances, W, kappa; length scales fixed) by
// maximizing the log marginal likelihood with multi-start L-BFGS.
StateGP fit_state_gp(StateId state, std::vector<double> levels, std::vector<Policy> policies,
                     const GpConfig& config);

// Log marginal likelihood and its gradient with respect to the packed
// unconstrained hyperparameter vector. Exposed for gradient checking.
class LmcObjective {
 public:
  LmcObjective(std::vector<double> levels, const Eigen::VectorXd& residual, KernelBank prototype,
               double jitter, const OptimizerConfig& opt);

  int num_parameters() const { return num_params_; }

  // Returns false when the covariance is not positive definite.
  bool evaluate(const double* params, double* value, double* gradient) const;

  KernelBank unpack(const double* params) const;
  std::vector<double> pack(const KernelBank& bank) const;

 private:
  std::vector<double> levels_;
  Eigen::VectorXd residual_;
  KernelBank prototype_;
  double jitter_;
  double log_min_var_;
  double log_max_var_;
  std::vector<Eigen::MatrixXd> unit_grams_;  // base kernels at unit variance
  int num_params_ = 0;
};

// Affine repair of a raw predictive mean onto the simplex: shift by the
// magnitude of the most negative entry, then renormalize. Falls back to the
// uniform policy (logged) when the shifted sum is below 1e-12.
Policy shift_normalize(std::span<const double> raw_mean);
Policy shift_normalize(const Eigen::VectorXd& raw_mean);

nlohmann::json state_gp_to_json(const StateGP& gp);
StateGP state_gp_from_json(const nlohmann::json& j);

// Thread-safe, build-once cache of fitted models keyed by state id, with an
// optional on-disk directory of `state_<id>.json` model files.
class GpCache {
 public:
  using Builder = std::function<StateGP(StateId)>;

  explicit GpCache(Builder builder, std::optional<std::filesystem::path> model_dir = std::nullopt);

  std::shared_ptr<const StateGP> get(StateId state);
  void insert(StateGP gp);
  bool contains(StateId state) const;
  std::vector<StateId> ids() const;

  // Writes every cached model to the model directory.
  void save_all() const;
  static std::filesystem::path model_path(const std::filesystem::path& dir, StateId state);

 private:
  using Slot = std::shared_future<std::shared_ptr<const StateGP>>;

  Builder builder_;
  std::optional<std::filesystem::path> model_dir_;
  mutable std::mutex mu_;
  std::map<StateId, Slot> slots_;
};

}  // namespace lkgp
