#include <gtest/gtest.h>

#include "gcy/exterior.hpp"
#include "support/random_data.hpp"

using namespace gcy;
using gcy::testing::random_hermitian;
using gcy::testing::random_positive;

TEST(Form, WedgeIsGradedAntisymmetric) {
  const int n = 3;
  const Form a = Form::dz(n, 0), b = Form::dzbar(n, 2);
  EXPECT_LT((a.wedge(b) + b.wedge(a)).max_abs(), 1e-15);
  EXPECT_LT(a.wedge(a).max_abs(), 1e-15);
}

TEST(Form, FlatVolumeForm) {
  for (int n = 2; n <= 4; ++n) {
    const Form w = Form::one_one(CMat::Identity(n, n));
    EXPECT_NEAR(std::abs(w.power(n).top_coefficient() - factorial(n)), 0.0, 1e-12) << n;
  }
}

TEST(Form, TopPowerIsDeterminant) {
  std::mt19937_64 rng(7);
  for (int n = 2; n <= 4; ++n) {
    const CMat m = random_hermitian(rng, n);
    const cplx top = Form::one_one(m).power(n).top_coefficient();
    EXPECT_NEAR(std::abs(top - factorial(n) * m.determinant()), 0.0, 1e-10 * (1 + std::abs(top)));
  }
}

TEST(Form, OneOneOfHermitianIsReal) {
  std::mt19937_64 rng(8);
  const Form f = Form::one_one(random_hermitian(rng, 3));
  EXPECT_LT((f - f.conj()).max_abs(), 1e-14);
  EXPECT_LT((f.conj().conj() - f).max_abs(), 1e-14);
}

TEST(Form, PairingOfPowerIsAdjugate) {
  std::mt19937_64 rng(9);
  for (int n = 2; n <= 4; ++n) {
    const CMat w = random_positive(rng, n);
    const CMat c = Form::one_one(w).power(n - 1).pairing_matrix();
    const CMat expected = adjugate(w).transpose() * factorial(n - 1);
    EXPECT_LT((c - expected).norm(), 1e-10 * expected.norm()) << n;
  }
}

TEST(HodgeStar, StarOfPowerMatchesEigenvalueFormula) {
  std::mt19937_64 rng(10);
  for (int n = 2; n <= 4; ++n) {
    const CMat a = random_positive(rng, n);
    // alpha^{n-1} / (n-1)! is dual to alpha itself.
    const CMat s = hodge_star_nn(Form::one_one(a).power(n - 1), a) / factorial(n - 1);
    EXPECT_LT((s - a).norm(), 1e-10 * a.norm()) << n;
  }
}
