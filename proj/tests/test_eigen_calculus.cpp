#include <gtest/gtest.h>

#include "gcy/eigen_calculus.hpp"
#include "gcy/hermitian_geometry.hpp"
#include "support/random_data.hpp"

using namespace gcy;
using gcy::testing::random_hermitian;
using gcy::testing::random_positive;

namespace {

RVec vec(std::initializer_list<double> v) {
  RVec r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

CMat diag(std::initializer_list<double> v) { return vec(v).cast<cplx>().asDiagonal(); }

/// Random lambda, sorted descending, with p_map(lambda) inside the cone.
RVec random_cone_lambda(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.05, 3.0);
  RVec mu(n);
  for (int k = 0; k < n; ++k) mu(k) = u(rng);
  // Invert p_map: lambda_k = sum(mu) - (n-1) mu_k.
  RVec lam(n);
  for (int k = 0; k < n; ++k) lam(k) = mu.sum() - (n - 1) * mu(k);
  std::sort(lam.data(), lam.data() + n, std::greater<>());
  return lam;
}

}  // namespace

TEST(GeneralizedEigen, Examples) {
  const CMat a = CMat::Identity(3, 3);
  EXPECT_LT((generalized_eigen(a, a, 0).lambda - vec({1, 1, 1})).norm(), 1e-14);
  EXPECT_LT((generalized_eigen(diag({4, 2, 0}), a, 0).lambda - vec({4, 2, 0})).norm(), 1e-14);
}

TEST(GeneralizedEigen, InvariantsOnRandomPairs) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 4;
    const CMat a = random_positive(rng, n), g = random_hermitian(rng, n);
    const EigenPair e = generalized_eigen(g, a, 0);
    EXPECT_LT((e.vectors.adjoint() * a * e.vectors - CMat::Identity(n, n)).norm(), 1e-10);
    const CMat A = a.inverse() * g;
    for (int k = 0; k < n; ++k) EXPECT_LT((A * e.vectors.col(k) - e.lambda(k) * e.vectors.col(k)).norm(), 1e-10);
    EXPECT_NEAR(e.lambda.prod(), real_det(g) / real_det(a), 1e-10 * (1 + std::abs(e.lambda.prod())));
    for (int k = 1; k < n; ++k) EXPECT_GE(e.lambda(k - 1), e.lambda(k));
  }
}

TEST(GeneralizedEigen, SingularAlphaRejected) {
  CMat a = CMat::Identity(2, 2);
  a(1, 1) = 0.0;
  EXPECT_THROW(generalized_eigen(CMat::Identity(2, 2), a, 0), ConeViolation);
}

TEST(PMap, Examples) {
  EXPECT_LT((p_map(vec({1, 1, 1})) - vec({1, 1, 1})).norm(), 1e-15);
  EXPECT_LT((p_map(vec({4, 2, 0})) - vec({1, 2, 3})).norm(), 1e-15);
}

TEST(PMap, CommutesWithTensorForm) {
  std::mt19937_64 rng(12);
  for (int n = 2; n <= 5; ++n) {
    const CMat a = random_positive(rng, n), g = random_hermitian(rng, n);
    RVec mu = p_map(generalized_eigen(g, a, 0).lambda);
    std::sort(mu.data(), mu.data() + n, std::greater<>());
    EXPECT_LT((mu - generalized_eigen(p_alpha(g, a), a, 0).lambda).norm(), 1e-10);
  }
}

TEST(FLog, Examples) {
  EXPECT_NEAR(f_log(vec({1, 1, 1})), 0.0, 1e-15);
  EXPECT_LT((f_log_gradient(vec({1, 1, 1})) - vec({1, 1, 1})).norm(), 1e-15);
  EXPECT_NEAR(f_log(vec({4, 2, 0})), std::log(6.0), 1e-14);
  EXPECT_LT((f_log_gradient(vec({4, 2, 0})) - vec({5.0 / 12, 2.0 / 3, 3.0 / 4})).norm(), 1e-14);
}

TEST(FLog, ConeViolation) {
  EXPECT_THROW(f_log(vec({2, 0, -2})), ConeViolation);
  EXPECT_THROW(f_log_gradient(vec({1, 1, -1})), ConeViolation);
}

TEST(FLog, GradientOrderAndBounds) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 2 + trial % 4;
    const RVec lam = random_cone_lambda(rng, n);
    const RVec f = f_log_gradient(lam);
    for (int k = 0; k < n; ++k) EXPECT_GT(f(k), 0.0);
    for (int k = 1; k < n; ++k) EXPECT_LE(f(k - 1), f(k) * (1 + 1e-12));
    // Comparability of the f_k: ftilde_1 / (n-1) <= f_k <= ftilde_1 with
    // ftilde_1 = 1/mu_1, mu_1 the smallest of the mu.
    const RVec mu = p_map(lam);
    const double ft1 = 1.0 / mu.minCoeff();
    for (int k = 1; k < n; ++k) {
      EXPECT_LE(f(k), ft1 * (1 + 1e-12));
      EXPECT_GE(f(k), ft1 / (n - 1) * (1 - 1e-12));
    }
    // ftilde_i <= (n-1) f_1 for i > 1.
    for (int i = 0; i < n; ++i)
      if (mu(i) != mu.minCoeff()) EXPECT_LE(1.0 / mu(i), (n - 1) * f(0) * (1 + 1e-12));
  }
}

TEST(FLog, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + trial % 4;
    const RVec lam = random_cone_lambda(rng, n);
    const RVec f = f_log_gradient(lam);
    for (int k = 0; k < n; ++k) {
      const double h = 1e-5 * (1 + std::abs(lam(k)));
      RVec lp = lam, lm = lam;
      lp(k) += h;
      lm(k) -= h;
      const double fd = (f_log(lp) - f_log(lm)) / (2 * h);
      EXPECT_NEAR(fd, f(k), 1e-6 * std::abs(f(k)));
    }
  }
}

TEST(FLog, Homogeneity) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 4;
    const RVec lam = random_cone_lambda(rng, n);
    const double t = 0.1 + 0.01 * trial;
    EXPECT_NEAR(f_log(t * lam), f_log(lam) + n * std::log(t), 1e-12 * (1 + std::abs(f_log(lam))));
  }
}

TEST(FLog, Concavity) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ut(0.0, 1.0);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 4;
    const RVec a = random_cone_lambda(rng, n), b = random_cone_lambda(rng, n);
    const double t = ut(rng);
    if (f_log(t * a + (1 - t) * b) < t * f_log(a) + (1 - t) * f_log(b) - 1e-10) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

TEST(FLog, Monotonicity) {
  std::mt19937_64 rng(18);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + trial % 4;
    const RVec lam = random_cone_lambda(rng, n);
    const int i = trial % n;
    double prev = f_log(lam);
    for (double t : {0.01, 0.1, 1.0, 10.0}) {
      RVec l = lam;
      l(i) += t;
      const double v = f_log(l);
      if (!(v > prev)) ++violations;
      prev = v;
    }
  }
  EXPECT_EQ(violations, 0);
}

TEST(FDerivative, Examples) {
  const CMat a = CMat::Identity(3, 3);
  EXPECT_LT((F_first_derivative(a, a) - a).norm(), 1e-14);
  EXPECT_LT((F_first_derivative(diag({4, 2, 0}), a) - diag({5.0 / 12, 2.0 / 3, 3.0 / 4})).norm(), 1e-13);
}

TEST(FDerivative, MatchesLogDetOfP) {
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 4;
    const CMat a = random_positive(rng, n);
    const CMat g = p_alpha_inverse(random_positive(rng, n), a);  // P_alpha(g) > 0
    const CMat dg = random_hermitian(rng, n);
    auto F = [&](const CMat& x) { return std::log(real_det(p_alpha(x, a)) / real_det(a)); };
    const double h = 1e-5;
    const double fd = (F(g + h * dg) - F(g - h * dg)) / (2 * h);
    const double an = trace_product(F_first_derivative(g, a), dg).real();
    EXPECT_NEAR(fd, an, 1e-6 * (1e-3 + std::abs(an)));
  }
}

TEST(FDerivative, TieSafe) {
  const CMat a = CMat::Identity(3, 3);
  const CMat g = diag({2, 2, 1});
  const CMat phi = F_first_derivative(g, a);
  EXPECT_LT((phi - phi.adjoint()).norm(), 1e-15);
  EXPECT_LT((phi - diag({7.0 / 12, 7.0 / 12, 2.0 / 3})).norm(), 1e-14);
}

TEST(Subsolution, Examples) {
  GridSpec g(2, 8);
  const auto alpha = HermitianTensorField::identity(g);
  auto r = c_subsolution_check(alpha, alpha);
  EXPECT_TRUE(r.positive);
  EXPECT_NEAR(r.min_eigenvalue, 1.0, 1e-14);

  GridSpec g3(3, 8);
  const auto a3 = HermitianTensorField::identity(g3);
  const auto gt = p_alpha(HermitianTensorField::generate(g3, [](std::size_t) { return diag({4, 2, 0}); }), a3);
  EXPECT_TRUE(c_subsolution_check(gt, a3).positive);

  const std::size_t spike = 1234;
  const auto bad = HermitianTensorField::generate(g, [&](std::size_t p) -> CMat {
    CMat m = CMat::Identity(2, 2);
    if (p == spike) m -= 2.0 * CMat::Ones(2, 2) / 2.0 * 1.5;
    return m;
  });
  r = c_subsolution_check(bad, alpha);
  EXPECT_FALSE(r.positive);
  EXPECT_EQ(r.worst_point, spike);
  EXPECT_LT(r.min_eigenvalue, 0.0);
}

TEST(Probe, Examples) {
  const RVec ones = vec({1, 1, 1});
  auto r = subsolution_dichotomy_probe(ones, ones, 0.0, 0.1);
  EXPECT_NEAR(r.sum_f, 3.0, 1e-14);
  EXPECT_TRUE(r.sum_f_lower_bound);
  // All f_k equal: case (b) holds for kappa < 1/n.
  r = subsolution_dichotomy_probe(ones, ones, 0.0, 0.3);
  EXPECT_EQ(r.label, ProbeCase::case_b);
  // One large eigenvalue against chi = 2 I.
  const RVec big = vec({10, 0.05, 0.05});
  r = subsolution_dichotomy_probe(big, vec({2, 2, 2}), f_log(big), 0.5);
  EXPECT_EQ(r.label, ProbeCase::case_a);
  EXPECT_TRUE(r.sum_f_lower_bound);
  EXPECT_EQ(subsolution_dichotomy_probe(ones, ones, 0.0, 0.3, 5.0).label, ProbeCase::below_R);
  EXPECT_THROW(subsolution_dichotomy_probe(vec({1, 1, -3}), ones, 0.0, 0.1), ConeViolation);
}
