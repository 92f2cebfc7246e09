#include "lkgp/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "lkgp/error.hpp"

namespace lkgp {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

void check_matern(double variance, double length_scale) {
  if (!(variance > 0.0) || !std::isfinite(variance))
    throw ParameterError("matern32: variance must be positive");
  if (!(length_scale > 0.0) || !std::isfinite(length_scale))
    throw ParameterError("matern32: length_scale must be positive");
}

}  // namespace

double matern32_eval(double d, double variance, double length_scale) {
  check_matern(variance, length_scale);
  if (!(d >= 0.0)) throw ParameterError("matern32: distance must be nonnegative");
  const double r = kSqrt3 * d / length_scale;
  return variance * (1.0 + r) * std::exp(-r);
}

Matern32Kernel::Matern32Kernel(double variance, double length_scale)
    : variance(variance), length_scale(length_scale) {
  check_matern(variance, length_scale);
}

double Matern32Kernel::operator()(double x, double x_prime) const {
  const double r = kSqrt3 * std::abs(x - x_prime) / length_scale;
  return variance * (1.0 + r) * std::exp(-r);
}

double bias_eval(double variance) {
  if (!(variance >= 0.0)) throw ParameterError("bias: variance must be nonnegative");
  return variance;
}

BiasKernel::BiasKernel(double variance) : variance(bias_eval(variance)) {}

double eval_base(const BaseKernel& k, double x, double x_prime) {
  return std::visit([&](const auto& kern) { return kern(x, x_prime); }, k);
}

double base_variance(const BaseKernel& k) {
  return std::visit([](const auto& kern) { return kern.variance; }, k);
}

void set_base_variance(BaseKernel& k, double variance) {
  std::visit([&](auto& kern) { kern.variance = variance; }, k);
}

Eigen::MatrixXd pinch_to_ones(const Eigen::MatrixXd& M) {
  const Eigen::Index d = M.rows();
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
  const Eigen::MatrixXd C = Eigen::MatrixXd::Identity(d, d) - u * u.transpose();
  const double along = u.dot(M * u);
  Eigen::MatrixXd out = C * M * C + along * (u * u.transpose());
  return 0.5 * (out + out.transpose());
}

CoregionalizationMatrix::CoregionalizationMatrix(Eigen::MatrixXd W, Eigen::VectorXd kappa,
                                                 bool sum_preserving)
    : W_(std::move(W)), kappa_(std::move(kappa)), sum_preserving_(sum_preserving) {
  if (W_.rows() != kappa_.size())
    throw ConfigError("coregionalization: W rows must equal kappa length");
  if (kappa_.size() == 0) throw ConfigError("coregionalization: empty output dimension");
  if ((kappa_.array() < 0.0).any()) throw ParameterError("coregionalization: kappa must be nonnegative");
  rebuild();
}

CoregionalizationMatrix CoregionalizationMatrix::identity(int output_dim, int rank, bool sum_preserving) {
  return CoregionalizationMatrix(Eigen::MatrixXd::Zero(output_dim, rank),
                                 Eigen::VectorXd::Ones(output_dim), sum_preserving);
}

void CoregionalizationMatrix::set_W(Eigen::MatrixXd W) {
  if (W.rows() != kappa_.size()) throw ConfigError("coregionalization: W shape mismatch");
  W_ = std::move(W);
  rebuild();
}

void CoregionalizationMatrix::set_kappa(Eigen::VectorXd kappa) {
  if (kappa.size() != W_.rows()) throw ConfigError("coregionalization: kappa shape mismatch");
  if ((kappa.array() < 0.0).any()) throw ParameterError("coregionalization: kappa must be nonnegative");
  kappa_ = std::move(kappa);
  rebuild();
}

void CoregionalizationMatrix::rebuild() {
  Eigen::MatrixXd B = W_ * W_.transpose();
  B.diagonal() += kappa_;
  B_ = sum_preserving_ ? pinch_to_ones(B) : 0.5 * (B + B.transpose());
}

KernelBankConfig KernelBankConfig::default_config() {
  KernelBankConfig c;
  c.kernels.push_back({KernelSpec::Type::kBias, std::nullopt, std::nullopt});
  for (double beta : {0.25, 0.5, 0.75, 1.0, 1.25, 1.5})
    c.kernels.push_back({KernelSpec::Type::kMatern32, beta, std::nullopt});
  return c;
}

void to_json(nlohmann::json& j, const KernelBankConfig& c) {
  j = nlohmann::json::object();
  auto arr = nlohmann::json::array();
  for (const auto& k : c.kernels) {
    nlohmann::json e;
    e["type"] = k.type == KernelSpec::Type::kBias ? "bias" : "matern32";
    e["beta"] = k.beta ? nlohmann::json(*k.beta) : nlohmann::json(nullptr);
    e["rank"] = k.rank ? nlohmann::json(*k.rank) : nlohmann::json(nullptr);
    arr.push_back(std::move(e));
  }
  j["kernels"] = std::move(arr);
  j["sum_preserving"] = c.sum_preserving;
}

void from_json(const nlohmann::json& j, KernelBankConfig& c) {
  c = KernelBankConfig{};
  const auto& list = j.is_array() ? j : j.at("kernels");
  if (!list.is_array() || list.empty()) throw ConfigError("kernel bank config: need a non-empty kernel list");
  for (const auto& e : list) {
    KernelSpec k;
    const auto type = e.at("type").get<std::string>();
    if (type == "matern32")
      k.type = KernelSpec::Type::kMatern32;
    else if (type == "bias")
      k.type = KernelSpec::Type::kBias;
    else
      throw ConfigError("kernel bank config: unknown kernel type '" + type + "'");
    if (e.contains("beta") && !e["beta"].is_null()) {
      k.beta = e["beta"].get<double>();
      if (!(*k.beta > 0.0)) throw ConfigError("kernel bank config: beta must be positive");
    }
    if (e.contains("rank") && !e["rank"].is_null()) {
      k.rank = e["rank"].get<int>();
      if (*k.rank < 1) throw ConfigError("kernel bank config: rank must be >= 1");
    }
    c.kernels.push_back(k);
  }
  if (j.is_object() && j.contains("sum_preserving")) c.sum_preserving = j["sum_preserving"].get<bool>();
}

KernelBank::KernelBank(std::vector<KernelBankEntry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw ConfigError("kernel bank needs at least one entry");
  output_dim_ = entries_.front().coreg.output_dim();
  for (const auto& e : entries_)
    if (e.coreg.output_dim() != output_dim_)
      throw ConfigError("kernel bank entries disagree on output dimension");
}

KernelBank KernelBank::from_config(const KernelBankConfig& config, int output_dim) {
  if (output_dim < 1) throw ConfigError("kernel bank: output dimension must be >= 1");
  std::vector<KernelBankEntry> entries;
  for (const auto& spec : config.kernels) {
    const int rank = spec.rank.value_or(std::min(output_dim, 7));
    BaseKernel base = spec.type == KernelSpec::Type::kBias
                          ? BaseKernel{BiasKernel(1.0)}
                          : BaseKernel{Matern32Kernel(1.0, spec.beta.value_or(1.0))};
    entries.push_back({base, CoregionalizationMatrix::identity(output_dim, rank, config.sum_preserving)});
  }
  return KernelBank(std::move(entries));
}

void to_json(nlohmann::json& j, const KernelBank& bank) {
  j = nlohmann::json::array();
  for (const auto& e : bank.entries()) {
    nlohmann::json o;
    if (const auto* m = std::get_if<Matern32Kernel>(&e.kernel)) {
      o["type"] = "matern32";
      o["variance"] = m->variance;
      o["beta"] = m->length_scale;
    } else {
      o["type"] = "bias";
      o["variance"] = std::get<BiasKernel>(e.kernel).variance;
    }
    const auto& W = e.coreg.W();
    o["W_shape"] = {W.rows(), W.cols()};
    std::vector<double> w;
    for (Eigen::Index r = 0; r < W.rows(); ++r)
      for (Eigen::Index c = 0; c < W.cols(); ++c) w.push_back(W(r, c));
    o["W"] = w;
    o["kappa"] = std::vector<double>(e.coreg.kappa().data(), e.coreg.kappa().data() + e.coreg.kappa().size());
    o["sum_preserving"] = e.coreg.sum_preserving();
    j.push_back(std::move(o));
  }
}

void from_json(const nlohmann::json& j, KernelBank& bank) {
  std::vector<KernelBankEntry> entries;
  for (const auto& o : j) {
    const auto type = o.at("type").get<std::string>();
    BaseKernel k;
    if (type == "matern32")
      k = Matern32Kernel(o.at("variance").get<double>(), o.at("beta").get<double>());
    else if (type == "bias")
      k = BiasKernel(o.at("variance").get<double>());
    else
      throw SchemaError("kernel bank: unknown kernel type '" + type + "'");
    const auto shape = o.at("W_shape").get<std::vector<Eigen::Index>>();
    const auto w = o.at("W").get<std::vector<double>>();
    if (shape.size() != 2 || static_cast<Eigen::Index>(w.size()) != shape[0] * shape[1])
      throw SchemaError("kernel bank: W shape does not match data");
    Eigen::MatrixXd W(shape[0], shape[1]);
    for (Eigen::Index r = 0; r < shape[0]; ++r)
      for (Eigen::Index c = 0; c < shape[1]; ++c) W(r, c) = w[static_cast<std::size_t>(r * shape[1] + c)];
    const auto kv = o.at("kappa").get<std::vector<double>>();
    Eigen::VectorXd kappa = Eigen::Map<const Eigen::VectorXd>(kv.data(), static_cast<Eigen::Index>(kv.size()));
    entries.push_back({k, CoregionalizationMatrix(W, kappa, o.value("sum_preserving", false))});
  }
  bank = KernelBank(std::move(entries));
}

Eigen::MatrixXd base_gram(const BaseKernel& k, std::span<const double> xs, std::span<const double> ys) {
  Eigen::MatrixXd K(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j)
      K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = eval_base(k, xs[i], ys[j]);
  return K;
}

Eigen::MatrixXd lmc_covariance(std::span<const double> xs, std::span<const double> ys, const KernelBank& bank) {
  for (double x : xs)
    if (!std::isfinite(x)) throw InputError("lmc_covariance: non-finite level");
  for (double y : ys)
    if (!std::isfinite(y)) throw InputError("lmc_covariance: non-finite level");
  if (bank.size() == 0) throw ConfigError("lmc_covariance: empty kernel bank");

  const Eigen::Index n = static_cast<Eigen::Index>(xs.size());
  const Eigen::Index m = static_cast<Eigen::Index>(ys.size());
  const Eigen::Index d = bank.output_dim();
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(n * d, m * d);
  for (const auto& entry : bank.entries()) {
    if (entry.coreg.output_dim() != d) throw ConfigError("lmc_covariance: bank dimension mismatch");
    const Eigen::MatrixXd K = base_gram(entry.kernel, xs, ys);
    const Eigen::MatrixXd& B = entry.coreg.B();
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b) sigma.block(a * n, b * m, n, m).noalias() += B(a, b) * K;
  }
  return sigma;
}

nlohmann::json covariance_to_json(const Eigen::MatrixXd& cov, int n, int m, int d) {
  if (cov.rows() != static_cast<Eigen::Index>(n) * d || cov.cols() != static_cast<Eigen::Index>(m) * d)
    throw InputError("covariance_to_json: header does not match matrix shape");
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(cov.size()));
  for (Eigen::Index r = 0; r < cov.rows(); ++r)
    for (Eigen::Index c = 0; c < cov.cols(); ++c) data.push_back(cov(r, c));
  return {{"N", n}, {"M", m}, {"D", d}, {"layout", "output-major"}, {"data", data}};
}

Eigen::MatrixXd covariance_from_json(const nlohmann::json& j) {
  const int n = j.at("N").get<int>();
  const int m = j.at("M").get<int>();
  const int d = j.at("D").get<int>();
  const auto data = j.at("data").get<std::vector<double>>();
  const Eigen::Index rows = static_cast<Eigen::Index>(n) * d;
  const Eigen::Index cols = static_cast<Eigen::Index>(m) * d;
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw SchemaError("covariance: data length mismatch");
  Eigen::MatrixXd cov(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) cov(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  return cov;
}

}  // namespace lkgp
