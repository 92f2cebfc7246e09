#include "lkgp/gp.hpp"

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>
#include <spdlog/spdlog.h>

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "lkgp/error.hpp"
#include "lkgp/rng.hpp"

namespace lkgp {

namespace {

constexpr int kModelVersion = 1;

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double softplus_inverse(double y) {
  y = std::max(y, 1e-12);
  return y > 30.0 ? y : std::log(std::expm1(y));
}

std::vector<double> unit_variance_levels_check(std::vector<double> levels) {
  if (levels.size() < 2) throw InputError("GP needs at least two training levels");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!std::isfinite(levels[i])) throw InputError("GP training level is not finite");
    if (i > 0 && !(levels[i] > levels[i - 1])) throw InputError("GP training levels must be strictly increasing");
  }
  return levels;
}

void check_policies(const std::vector<Policy>& policies, std::size_t n) {
  if (policies.size() != n) throw InputError("GP needs one policy per training level");
  const std::size_t a = policies.front().size();
  for (const auto& p : policies) {
    if (p.size() != a) throw InputError("GP training policies have inconsistent action counts");
    for (double v : p.probs)
      if (!std::isfinite(v)) throw InputError("GP training policy has a non-finite entry");
  }
}

Eigen::VectorXd compute_prior_mean(const std::vector<Policy>& policies, PriorMean kind) {
  const auto a = static_cast<Eigen::Index>(policies.front().size());
  Eigen::VectorXd m = Eigen::VectorXd::Zero(a);
  if (kind == PriorMean::kZero) return m;
  for (const auto& p : policies)
    for (Eigen::Index i = 0; i < a; ++i) m(i) += p.probs[static_cast<std::size_t>(i)];
  return m / static_cast<double>(policies.size());
}

// Output-major stacking: index d * N + i.
Eigen::VectorXd stack_residual(const std::vector<Policy>& policies, const Eigen::VectorXd& mean) {
  const auto n = static_cast<Eigen::Index>(policies.size());
  const auto a = mean.size();
  Eigen::VectorXd r(n * a);
  for (Eigen::Index d = 0; d < a; ++d)
    for (Eigen::Index i = 0; i < n; ++i)
      r(d * n + i) = policies[static_cast<std::size_t>(i)].probs[static_cast<std::size_t>(d)] - mean(d);
  return r;
}

const char* prior_mean_name(PriorMean p) { return p == PriorMean::kZero ? "zero" : "training-mean"; }

PriorMean prior_mean_from_name(const std::string& s) {
  if (s == "zero") return PriorMean::kZero;
  if (s == "training-mean") return PriorMean::kTrainingMean;
  throw ConfigError("unknown prior mean '" + s + "'");
}

class CeresObjective final : public ceres::FirstOrderFunction {
 public:
  CeresObjective(const LmcObjective& objective, int* evaluations)
      : objective_(objective), evaluations_(evaluations) {}

  bool Evaluate(const double* parameters, double* cost, double* gradient) const override {
    ++*evaluations_;
    double value = 0.0;
    if (!objective_.evaluate(parameters, &value, gradient)) return false;
    *cost = -value;
    if (gradient != nullptr)
      for (int i = 0; i < objective_.num_parameters(); ++i) gradient[i] = -gradient[i];
    return std::isfinite(value);
  }

  int NumParameters() const override { return objective_.num_parameters(); }

 private:
  const LmcObjective& objective_;
  int* evaluations_;
};

}  // namespace

void to_json(nlohmann::json& j, const GpConfig& c) {
  j = nlohmann::json{{"bank", c.bank},
                     {"jitter", c.jitter},
                     {"max_jitter", c.max_jitter},
                     {"prior_mean", prior_mean_name(c.prior_mean)},
                     {"optimizer",
                      {{"restarts", c.optimizer.restarts},
                       {"max_iterations", c.optimizer.max_iterations},
                       {"tolerance", c.optimizer.tolerance},
                       {"min_variance", c.optimizer.min_variance},
                       {"max_variance", c.optimizer.max_variance},
                       {"seed", c.optimizer.seed}}}};
}

void from_json(const nlohmann::json& j, GpConfig& c) {
  c = GpConfig{};
  if (j.contains("bank")) c.bank = j["bank"].get<KernelBankConfig>();
  c.jitter = j.value("jitter", c.jitter);
  c.max_jitter = j.value("max_jitter", c.max_jitter);
  if (j.contains("prior_mean")) c.prior_mean = prior_mean_from_name(j["prior_mean"].get<std::string>());
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    c.optimizer.restarts = o.value("restarts", c.optimizer.restarts);
    c.optimizer.max_iterations = o.value("max_iterations", c.optimizer.max_iterations);
    c.optimizer.tolerance = o.value("tolerance", c.optimizer.tolerance);
    c.optimizer.min_variance = o.value("min_variance", c.optimizer.min_variance);
    c.optimizer.max_variance = o.value("max_variance", c.optimizer.max_variance);
    c.optimizer.seed = o.value("seed", c.optimizer.seed);
  }
  if (!(c.jitter > 0.0) || c.max_jitter < c.jitter) throw ConfigError("gp: invalid jitter range");
  if (c.optimizer.restarts < 1 || c.optimizer.max_iterations < 1) throw ConfigError("gp: invalid optimizer settings");
  if (!(c.optimizer.min_variance > 0.0) || !(c.optimizer.max_variance > c.optimizer.min_variance))
    throw ConfigError("gp: invalid variance bounds");
}

double gaussian_log_likelihood(const Eigen::MatrixXd& chol_lower, const Eigen::VectorXd& r) {
  const auto L = chol_lower.triangularView<Eigen::Lower>();
  const Eigen::VectorXd z = L.solve(r);
  const double log_det = 2.0 * chol_lower.diagonal().array().log().sum();
  const double n = static_cast<double>(r.size());
  return -0.5 * z.squaredNorm() - 0.5 * log_det - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

StateGP StateGP::condition(StateId state, std::vector<double> levels, std::vector<Policy> policies,
                           KernelBank bank, double jitter, double max_jitter, PriorMean prior_mean) {
  levels = unit_variance_levels_check(std::move(levels));
  check_policies(policies, levels.size());
  if (bank.output_dim() != static_cast<int>(policies.front().size()))
    throw ConfigError("kernel bank output dimension does not match the action count");

  StateGP gp;
  gp.state_ = state;
  gp.levels_ = std::move(levels);
  gp.policies_ = std::move(policies);
  gp.bank_ = std::move(bank);
  gp.prior_mean_kind_ = prior_mean;
  gp.prior_mean_ = compute_prior_mean(gp.policies_, prior_mean);
  gp.residual_ = stack_residual(gp.policies_, gp.prior_mean_);

  const Eigen::MatrixXd sigma = lmc_covariance(gp.levels_, gp.levels_, gp.bank_);
  const Eigen::Index nd = sigma.rows();
  for (double j = jitter; j <= max_jitter * (1.0 + 1e-9); j *= 10.0) {
    Eigen::LLT<Eigen::MatrixXd> llt(sigma + j * Eigen::MatrixXd::Identity(nd, nd));
    if (llt.info() != Eigen::Success) continue;
    Eigen::MatrixXd L = llt.matrixL();
    if (!(L.diagonal().array() > 0.0).all() || !L.allFinite()) continue;
    if (j > jitter) spdlog::warn("state {}: jitter escalated to {:g}", state, j);
    gp.jitter_ = j;
    gp.chol_ = std::move(L);
    gp.alpha_ = llt.solve(gp.residual_);
    return gp;
  }
  throw NumericalError("Cholesky failed for state " + std::to_string(state) + " up to jitter " +
                       std::to_string(max_jitter));
}

double StateGP::log_marginal_likelihood() const { return gaussian_log_likelihood(chol_, residual_); }

PolicyPrediction StateGP::predict(double level) const {
  if (!std::isfinite(level)) throw InputError("predict: level is not finite");
  double l = level;
  if (l < min_level() || l > max_level()) {
    l = std::clamp(l, min_level(), max_level());
    spdlog::warn("state {}: level {:g} clamped to {:g}", state_, level, l);
  }
  const auto n = static_cast<Eigen::Index>(levels_.size());
  const auto d = static_cast<Eigen::Index>(output_dim());

  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(d, n * d);  // Sigma_*
  Eigen::MatrixXd prior = Eigen::MatrixXd::Zero(d, d);      // Sigma_**
  Eigen::RowVectorXd k(n);
  for (const auto& e : bank_.entries()) {
    for (Eigen::Index i = 0; i < n; ++i) k(i) = eval_base(e.kernel, l, levels_[static_cast<std::size_t>(i)]);
    const Eigen::MatrixXd& B = e.coreg.B();
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) cross.block(a, b * n, 1, n) += B(a, b) * k;
    prior += eval_base(e.kernel, l, l) * B;
  }

  PolicyPrediction out;
  out.level = l;
  out.mean = cross * alpha_ + prior_mean_;
  const Eigen::MatrixXd v = chol_.triangularView<Eigen::Lower>().solve(cross.transpose());
  out.cov = prior - v.transpose() * v;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

LmcObjective::LmcObjective(std::vector<double> levels, const Eigen::VectorXd& residual, KernelBank prototype,
                           double jitter, const OptimizerConfig& opt)
    : levels_(std::move(levels)),
      residual_(residual),
      prototype_(std::move(prototype)),
      jitter_(jitter),
      log_min_var_(std::log(opt.min_variance)),
      log_max_var_(std::log(opt.max_variance)) {
  for (const auto& e : prototype_.entries()) {
    BaseKernel unit = e.kernel;
    set_base_variance(unit, 1.0);
    unit_grams_.push_back(base_gram(unit, levels_, levels_));
    num_params_ += 1 + e.coreg.output_dim() * e.coreg.rank() + e.coreg.output_dim();
  }
}

KernelBank LmcObjective::unpack(const double* p) const {
  std::vector<KernelBankEntry> entries;
  for (const auto& e : prototype_.entries()) {
    const int d = e.coreg.output_dim();
    const int r = e.coreg.rank();
    BaseKernel k = e.kernel;
    set_base_variance(k, std::exp(log_min_var_ + (log_max_var_ - log_min_var_) * sigmoid(*p++)));
    Eigen::MatrixXd W(d, r);
    for (int a = 0; a < d; ++a)
      for (int c = 0; c < r; ++c) W(a, c) = *p++;
    Eigen::VectorXd kappa(d);
    for (int a = 0; a < d; ++a) kappa(a) = softplus(*p++);
    entries.push_back({k, CoregionalizationMatrix(std::move(W), std::move(kappa), e.coreg.sum_preserving())});
  }
  return KernelBank(std::move(entries));
}

std::vector<double> LmcObjective::pack(const KernelBank& bank) const {
  std::vector<double> p;
  p.reserve(static_cast<std::size_t>(num_params_));
  for (const auto& e : bank.entries()) {
    const double span = log_max_var_ - log_min_var_;
    double t = (std::log(base_variance(e.kernel)) - log_min_var_) / span;
    t = std::clamp(t, 1e-9, 1.0 - 1e-9);
    p.push_back(std::log(t / (1.0 - t)));
    const auto& W = e.coreg.W();
    for (Eigen::Index a = 0; a < W.rows(); ++a)
      for (Eigen::Index c = 0; c < W.cols(); ++c) p.push_back(W(a, c));
    for (Eigen::Index a = 0; a < e.coreg.kappa().size(); ++a) p.push_back(softplus_inverse(e.coreg.kappa()(a)));
  }
  return p;
}

bool LmcObjective::evaluate(const double* params, double* value, double* gradient) const {
  const auto n = static_cast<Eigen::Index>(levels_.size());
  const auto d = static_cast<Eigen::Index>(prototype_.output_dim());
  const double span = log_max_var_ - log_min_var_;

  struct Unpacked {
    double var, dvar_draw;
    Eigen::MatrixXd W, B;
    Eigen::VectorXd kappa_raw;
  };
  std::vector<Unpacked> parts;
  const double* p = params;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(n * d, n * d);
  for (std::size_t z = 0; z < prototype_.entries().size(); ++z) {
    const auto& e = prototype_.entries()[z];
    const int r = e.coreg.rank();
    Unpacked u;
    const double s = sigmoid(*p++);
    u.var = std::exp(log_min_var_ + span * s);
    u.dvar_draw = u.var * span * s * (1.0 - s);
    u.W.resize(d, r);
    for (Eigen::Index a = 0; a < d; ++a)
      for (int c = 0; c < r; ++c) u.W(a, c) = *p++;
    u.kappa_raw.resize(d);
    for (Eigen::Index a = 0; a < d; ++a) u.kappa_raw(a) = *p++;
    Eigen::MatrixXd M = u.W * u.W.transpose();
    for (Eigen::Index a = 0; a < d; ++a) M(a, a) += softplus(u.kappa_raw(a));
    u.B = e.coreg.sum_preserving() ? pinch_to_ones(M) : M;
    const Eigen::MatrixXd K = u.var * unit_grams_[z];
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) sigma.block(a * n, b * n, n, n).noalias() += u.B(a, b) * K;
    parts.push_back(std::move(u));
  }
  sigma.diagonal().array() += jitter_;
  if (!sigma.allFinite()) return false;

  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::MatrixXd L = llt.matrixL();
  if (!(L.diagonal().array() > 0.0).all()) return false;
  const Eigen::VectorXd alpha = llt.solve(residual_);
  *value = -0.5 * residual_.dot(alpha) - L.diagonal().array().log().sum() -
           0.5 * static_cast<double>(n * d) * std::log(2.0 * std::numbers::pi);
  if (!std::isfinite(*value)) return false;
  if (gradient == nullptr) return true;

  // dL/dtheta = 1/2 tr((alpha alpha^T - Sigma^-1) dSigma/dtheta)
  const Eigen::MatrixXd G = alpha * alpha.transpose() - llt.solve(Eigen::MatrixXd::Identity(n * d, n * d));
  double* g = gradient;
  for (std::size_t z = 0; z < parts.size(); ++z) {
    const auto& u = parts[z];
    const auto& e = prototype_.entries()[z];
    Eigen::MatrixXd H(d, d);  // H(a,b) = sum_ij G(aN+i, bN+j) Ktilde(i,j)
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b)
        H(a, b) = G.block(a * n, b * n, n, n).cwiseProduct(unit_grams_[z]).sum();
    // w.r.t. variance: 1/2 sum_ab B(a,b) H(a,b)
    *g++ = 0.5 * u.B.cwiseProduct(H).sum() * u.dvar_draw;
    // w.r.t. M = W W^T + diag(kappa): the pinch is self-adjoint.
    Eigen::MatrixXd dM = 0.5 * u.var * (e.coreg.sum_preserving() ? pinch_to_ones(H) : H);
    const Eigen::MatrixXd dW = 2.0 * dM * u.W;
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index c = 0; c < dW.cols(); ++c) *g++ = dW(a, c);
    for (Eigen::Index a = 0; a < d; ++a) *g++ = dM(a, a) * sigmoid(u.kappa_raw(a));
  }
  return true;
}

StateGP fit_state_gp(StateId state, std::vector<double> levels, std::vector<Policy> policies,
                     const GpConfig& config) {
  levels = unit_variance_levels_check(std::move(levels));
  check_policies(policies, levels.size());
  for (const auto& p : policies)
    if (!p.valid(1e-9)) throw InputError("fit_state_gp: training policy is not a valid distribution");

  const int d = static_cast<int>(policies.front().size());
  const KernelBank prototype = KernelBank::from_config(config.bank, d);
  const Eigen::VectorXd mean = compute_prior_mean(policies, config.prior_mean);
  const Eigen::VectorXd residual = stack_residual(policies, mean);
  const LmcObjective objective(levels, residual, prototype, config.jitter, config.optimizer);

  FitDiagnostics diag;
  std::vector<double> best;
  double best_value = -std::numeric_limits<double>::infinity();
  int evaluations = 0;

  for (int restart = 0; restart < config.optimizer.restarts; ++restart) {
    std::mt19937_64 rng(derive_seed({config.optimizer.seed, state, static_cast<std::uint64_t>(restart)}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    KernelBank init = prototype;
    for (auto& e : init.mutable_entries()) {
      const auto rows = e.coreg.output_dim();
      const auto cols = e.coreg.rank();
      Eigen::MatrixXd W(rows, cols);
      double variance = 1.0;
      double kappa = 0.1;
      double w_scale = 0.1;
      if (restart > 0) {
        variance = std::exp(std::log(0.1) + unit(rng) * std::log(100.0));
        kappa = std::exp(std::log(0.01) + unit(rng) * std::log(100.0));
        w_scale = 0.5;
      }
      for (Eigen::Index a = 0; a < rows; ++a)
        for (Eigen::Index c = 0; c < cols; ++c) W(a, c) = w_scale * normal(rng);
      set_base_variance(e.kernel, std::clamp(variance, config.optimizer.min_variance, config.optimizer.max_variance));
      e.coreg = CoregionalizationMatrix(W, Eigen::VectorXd::Constant(rows, kappa), e.coreg.sum_preserving());
    }
    std::vector<double> params = objective.pack(init);

    double init_value = 0.0;
    if (!objective.evaluate(params.data(), &init_value, nullptr)) continue;
    if (restart == 0) diag.initial_log_likelihood = init_value;

    ceres::GradientProblem problem(new CeresObjective(objective, &evaluations));
    ceres::GradientProblemSolver::Options options;
    options.line_search_direction_type = ceres::LBFGS;
    options.max_num_iterations = config.optimizer.max_iterations;
    options.function_tolerance = config.optimizer.tolerance;
    options.logging_type = ceres::SILENT;
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(options, problem, params.data(), &summary);

    double value = 0.0;
    if (!objective.evaluate(params.data(), &value, nullptr)) continue;
    if (value < init_value) {  // never hand back something worse than the start
      params = objective.pack(init);
      value = init_value;
    }
    ++diag.restarts;
    if (value > best_value) {
      best_value = value;
      best = params;
    }
  }
  if (best.empty()) throw NumericalError("fit_state_gp: no restart produced a positive-definite covariance");

  StateGP gp = StateGP::condition(state, std::move(levels), std::move(policies), objective.unpack(best.data()),
                                  config.jitter, config.max_jitter, config.prior_mean);
  diag.log_likelihood = gp.log_marginal_likelihood();
  diag.evaluations = evaluations;
  gp.set_diagnostics(diag);
  return gp;
}

Policy shift_normalize(std::span<const double> raw) {
  if (raw.empty()) throw InputError("shift_normalize: empty vector");
  for (double v : raw)
    if (!std::isfinite(v)) throw InputError("shift_normalize: non-finite entry");
  const double lo = *std::min_element(raw.begin(), raw.end());
  const double shift = lo < 0.0 ? -lo : 0.0;
  double sum = 0.0;
  for (double v : raw) sum += v + shift;
  if (sum < 1e-12) {
    spdlog::warn("shift_normalize: degenerate mean (shifted sum {:g}); using uniform policy", sum);
    return Policy::uniform(raw.size());
  }
  Policy out{std::vector<double>(raw.size())};
  for (std::size_t i = 0; i < raw.size(); ++i) out.probs[i] = (raw[i] + shift) / sum;
  return out;
}

Policy shift_normalize(const Eigen::VectorXd& raw) {
  return shift_normalize(std::span<const double>(raw.data(), static_cast<std::size_t>(raw.size())));
}

nlohmann::json state_gp_to_json(const StateGP& gp) {
  nlohmann::json j;
  j["version"] = kModelVersion;
  j["state_id"] = gp.state();
  j["levels"] = gp.levels();
  auto pols = nlohmann::json::array();
  for (const auto& p : gp.policies()) pols.push_back(p.probs);
  j["policies"] = std::move(pols);
  j["bank"] = gp.bank();
  j["jitter"] = gp.jitter();
  j["prior_mean"] = prior_mean_name(gp.prior_mean_kind());
  const auto& d = gp.diagnostics();
  j["diagnostics"] = {{"initial_log_likelihood", d.initial_log_likelihood},
                      {"log_likelihood", d.log_likelihood},
                      {"restarts", d.restarts},
                      {"evaluations", d.evaluations}};
  const int n = static_cast<int>(gp.levels().size());
  j["gram"] = covariance_to_json(lmc_covariance(gp.levels(), gp.levels(), gp.bank()), n, n, gp.output_dim());
  return j;
}

StateGP state_gp_from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kModelVersion)
    throw SchemaError("GP model: unsupported version " + std::to_string(j.value("version", 0)));
  std::vector<Policy> policies;
  for (const auto& p : j.at("policies")) policies.push_back(Policy{p.get<std::vector<double>>()});
  const double jitter = j.at("jitter").get<double>();
  StateGP gp = StateGP::condition(j.at("state_id").get<StateId>(), j.at("levels").get<std::vector<double>>(),
                                  std::move(policies), j.at("bank").get<KernelBank>(), jitter,
                                  std::max(jitter, 1e-2), prior_mean_from_name(j.value("prior_mean", "training-mean")));
  if (j.contains("diagnostics")) {
    const auto& d = j["diagnostics"];
    gp.set_diagnostics({d.value("initial_log_likelihood", 0.0), d.value("log_likelihood", 0.0),
                        d.value("restarts", 0), d.value("evaluations", 0)});
  }
  return gp;
}

GpCache::GpCache(Builder builder, std::optional<std::filesystem::path> model_dir)
    : builder_(std::move(builder)), model_dir_(std::move(model_dir)) {}

std::filesystem::path GpCache::model_path(const std::filesystem::path& dir, StateId state) {
  return dir / ("state_" + std::to_string(state) + ".json");
}

std::shared_ptr<const StateGP> GpCache::get(StateId state) {
  std::promise<std::shared_ptr<const StateGP>> promise;
  Slot slot;
  bool owner = false;
  {
    std::lock_guard lock(mu_);
    if (auto it = slots_.find(state); it != slots_.end()) {
      slot = it->second;
    } else {
      slot = promise.get_future().share();
      slots_.emplace(state, slot);
      owner = true;
    }
  }
  if (!owner) return slot.get();
  try {
    std::shared_ptr<const StateGP> gp;
    if (model_dir_) {
      const auto path = model_path(*model_dir_, state);
      if (std::filesystem::exists(path)) {
        std::ifstream in(path);
        gp = std::make_shared<const StateGP>(state_gp_from_json(nlohmann::json::parse(in)));
      }
    }
    if (!gp) {
      if (!builder_) throw InputError("no fitted model for state " + std::to_string(state));
      gp = std::make_shared<const StateGP>(builder_(state));
    }
    promise.set_value(gp);
    return gp;
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(mu_);
    slots_.erase(state);
    throw;
  }
}

void GpCache::insert(StateGP gp) {
  std::promise<std::shared_ptr<const StateGP>> promise;
  const StateId id = gp.state();
  promise.set_value(std::make_shared<const StateGP>(std::move(gp)));
  std::lock_guard lock(mu_);
  slots_.insert_or_assign(id, promise.get_future().share());
}

bool GpCache::contains(StateId state) const {
  std::lock_guard lock(mu_);
  return slots_.count(state) > 0;
}

std::vector<StateId> GpCache::ids() const {
  std::lock_guard lock(mu_);
  std::vector<StateId> out;
  for (const auto& [id, slot] : slots_) out.push_back(id);
  return out;
}

void GpCache::save_all() const {
  if (!model_dir_) throw ConfigError("GpCache::save_all: no model directory configured");
  std::filesystem::create_directories(*model_dir_);
  std::map<StateId, Slot> copy;
  {
    std::lock_guard lock(mu_);
    copy = slots_;
  }
  for (const auto& [id, slot] : copy) {
    std::ofstream out(model_path(*model_dir_, id));
    out << state_gp_to_json(*slot.get()).dump(1) << '\n';
  }
}

}  // namespace lkgp
