#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "lkgp/error.hpp"
#include "lkgp/kernels.hpp"

using namespace lkgp;

namespace {

KernelBank random_bank(std::mt19937_64& rng, int d, int z, bool sum_preserving) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.05, 2.0);
  std::vector<KernelBankEntry> entries;
  for (int k = 0; k < z; ++k) {
    const int r = 1 + static_cast<int>(rng() % static_cast<unsigned>(d));
    Eigen::MatrixXd W(d, r);
    for (int a = 0; a < d; ++a)
      for (int c = 0; c < r; ++c) W(a, c) = normal(rng);
    Eigen::VectorXd kappa(d);
    for (int a = 0; a < d; ++a) kappa(a) = unit(rng);
    BaseKernel base = (k == 0) ? BaseKernel{BiasKernel(unit(rng))} : BaseKernel{Matern32Kernel(unit(rng), unit(rng))};
    entries.push_back({base, CoregionalizationMatrix(W, kappa, sum_preserving)});
  }
  return KernelBank(std::move(entries));
}

}  // namespace

TEST_CASE("matern32 values") {
  CHECK(matern32_eval(0.0, 1.0, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  // (1 + sqrt3) e^-sqrt3 and 3 (1 + 2 sqrt3) e^(-2 sqrt3), from an independent evaluation
  CHECK(matern32_eval(1.0, 1.0, 1.0) == doctest::Approx(0.4833577245965077).epsilon(1e-14));
  CHECK(matern32_eval(2.0, 3.0, 1.0) == doctest::Approx(0.4191940505769441).epsilon(1e-14));
}

TEST_CASE("matern32 rejects bad parameters") {
  CHECK_THROWS_AS(matern32_eval(1.0, 0.0, 1.0), ParameterError);
  CHECK_THROWS_AS(matern32_eval(1.0, 1.0, -1.0), ParameterError);
  CHECK_THROWS_AS(Matern32Kernel(-2.0, 1.0), ParameterError);
  CHECK_THROWS_AS(matern32_eval(-0.1, 1.0, 1.0), ParameterError);
}

TEST_CASE("matern32 is symmetric, monotone and continuous at zero") {
  const Matern32Kernel k(1.7, 0.6);
  CHECK(k(0.3, 1.9) == k(1.9, 0.3));
  double prev = matern32_eval(0.0, 1.7, 0.6);
  for (int i = 1; i <= 600; ++i) {
    const double v = matern32_eval(i * 0.005, 1.7, 0.6);
    CHECK(v < prev);
    CHECK(v > 0.0);
    prev = v;
  }
  CHECK(std::abs(matern32_eval(1e-12, 1.7, 0.6) - 1.7) < 1e-10);
}

TEST_CASE("bias kernel") {
  CHECK(bias_eval(0.0) == 0.0);
  CHECK(BiasKernel(1.0)(0.2, 7.0) == 1.0);
  CHECK(BiasKernel(2.5)(0.1, 2.9) == 2.5);
  CHECK_THROWS_AS(bias_eval(-1e-3), ParameterError);
}

TEST_CASE("coregionalization B from W and kappa is PSD") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + trial % 6;
    const int r = 1 + trial % 7;
    Eigen::MatrixXd W(d, r);
    for (int a = 0; a < d; ++a)
      for (int c = 0; c < r; ++c) W(a, c) = normal(rng);
    Eigen::VectorXd kappa = Eigen::VectorXd::Zero(d);
    if (trial % 2) kappa = W.col(0).cwiseAbs();
    for (bool pinch : {false, true}) {
      const CoregionalizationMatrix cm(W, kappa, pinch);
      const Eigen::MatrixXd& B = cm.B();
      CHECK((B - B.transpose()).cwiseAbs().maxCoeff() < 1e-12);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B);
      CHECK(es.eigenvalues().minCoeff() >= -1e-9);
      if (pinch) {
        // all-ones is an eigenvector
        const Eigen::VectorXd ones = Eigen::VectorXd::Ones(d);
        const Eigen::VectorXd v = B * ones;
        CHECK((v - v.mean() * ones).cwiseAbs().maxCoeff() < 1e-9);
      }
    }
  }
  CHECK_THROWS_AS(CoregionalizationMatrix(Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(2)), ConfigError);
  CHECK_THROWS_AS(CoregionalizationMatrix(Eigen::MatrixXd::Zero(2, 2), -Eigen::VectorXd::Ones(2)), ParameterError);
}

TEST_CASE("lmc covariance with scalar B is the scaled gram matrix") {
  const std::vector<double> xs{0.0, 0.7, 1.4, 3.0};
  KernelBank bank({{Matern32Kernel(1.3, 0.8),
                    CoregionalizationMatrix(Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Constant(1, 1.5))}});
  const Eigen::MatrixXd S = lmc_covariance(xs, xs, bank);
  REQUIRE(S.rows() == 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(S(i, j) == doctest::Approx(2.5 * matern32_eval(std::abs(xs[i] - xs[j]), 1.3, 0.8)).epsilon(1e-14));
}

TEST_CASE("lmc covariance with identity B is block diagonal") {
  const std::vector<double> xs{0.0, 1.0, 2.0};
  const int d = 3;
  KernelBank bank({{Matern32Kernel(1.0, 0.5), CoregionalizationMatrix::identity(d, 2)}});
  const Eigen::MatrixXd S = lmc_covariance(xs, xs, bank);
  const Eigen::MatrixXd K = base_gram(bank.entries()[0].kernel, xs, xs);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) {
      const Eigen::MatrixXd blk = S.block(a * 3, b * 3, 3, 3);
      if (a == b)
        CHECK((blk - K).cwiseAbs().maxCoeff() < 1e-15);
      else
        CHECK(blk.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("lmc covariance matches per-element latent-function sum") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lv(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2;
    const KernelBank bank = random_bank(rng, d, 2, false);
    const std::vector<double> xs{lv(rng), lv(rng)};
    const std::vector<double> ys{lv(rng), lv(rng)};
    const Eigen::MatrixXd S = lmc_covariance(xs, ys, bank);
    for (int a = 0; a < d; ++a)
      for (int i = 0; i < 2; ++i)
        for (int b = 0; b < d; ++b)
          for (int j = 0; j < 2; ++j) {
            double expect = 0.0;
            for (const auto& e : bank.entries()) {
              // b_{a,b} = sum_r w_{a,r} w_{b,r} + kappa_a [a == b]
              double coef = 0.0;
              for (int r = 0; r < e.coreg.rank(); ++r) coef += e.coreg.W()(a, r) * e.coreg.W()(b, r);
              if (a == b) coef += e.coreg.kappa()(a);
              expect += coef * eval_base(e.kernel, xs[i], ys[j]);
            }
            CHECK(S(a * 2 + i, b * 2 + j) == doctest::Approx(expect).epsilon(1e-12));
          }
  }
}

TEST_CASE("lmc covariance transpose symmetry and factorizability") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> lv(0.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 1 + trial % 5;
    const KernelBank bank = random_bank(rng, d, 1 + trial % 7, trial % 2 == 0);
    std::vector<double> xs(2 + trial % 4), ys(1 + trial % 3);
    for (auto& x : xs) x = lv(rng);
    for (auto& y : ys) y = lv(rng);
    const Eigen::MatrixXd A = lmc_covariance(xs, ys, bank);
    const Eigen::MatrixXd Bt = lmc_covariance(ys, xs, bank);
    CHECK((A - Bt.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::MatrixXd S = lmc_covariance(xs, xs, bank);
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    S.diagonal().array() += 1e-6;
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("bank config round trip and dimension checks") {
  const auto cfg = KernelBankConfig::default_config();
  REQUIRE(cfg.kernels.size() == 7);
  CHECK(cfg.kernels[0].type == KernelSpec::Type::kBias);
  nlohmann::json j = cfg;
  const auto back = j.get<KernelBankConfig>();
  REQUIRE(back.kernels.size() == 7);
  CHECK(*back.kernels[6].beta == 1.5);

  const KernelBank bank = KernelBank::from_config(cfg, 5);
  CHECK(bank.output_dim() == 5);
  CHECK(bank.entries()[1].coreg.rank() == 5);  // min(D, 7)

  CHECK_THROWS_AS(KernelBank({{BiasKernel(1.0), CoregionalizationMatrix::identity(2, 1)},
                              {BiasKernel(1.0), CoregionalizationMatrix::identity(3, 1)}}),
                  ConfigError);
  CHECK_THROWS_AS(nlohmann::json::parse(R"([{"type":"rbf"}])").get<KernelBankConfig>(), ConfigError);

  const std::vector<double> xs{0.0, 1.0};
  const Eigen::MatrixXd S = lmc_covariance(xs, xs, bank);
  const auto dumped = covariance_to_json(S, 2, 2, 5);
  CHECK(dumped["N"] == 2);
  CHECK((covariance_from_json(dumped) - S).cwiseAbs().maxCoeff() == 0.0);
}
