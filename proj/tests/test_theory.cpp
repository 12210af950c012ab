#include "nulledit/theory.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace nulledit;

namespace {

// c = M e1 and C_pres = [M e2 .. M en, extra]. With N0 = M M^T, the ratio for
// extra = M (a e1 + [0; w]) is a / (1 + |w|^2) by Sherman-Morrison.
struct LambdaCase {
  Matrix w0;
  Vector c, c_star;
  Matrix c_pres;
};

LambdaCase lambda_case(oracle::Gen& g, Index n, Index p, std::optional<Vector> coords) {
  // Bounded conditioning keeps rounding in lambda well under the absolute slack.
  Vector sv(n);
  for (Index j = 0; j < n; ++j) sv(j) = g.uniform(0.5, 2.0);
  const Matrix left = g.orthonormal(n, n), right = g.orthonormal(n, n);
  const Matrix m = left * sv.asDiagonal() * right.transpose();
  LambdaCase lc;
  lc.w0 = g.gaussian(p, n);
  lc.c = m.col(0);
  lc.c_star = g.gaussian(n, 1);
  lc.c_pres.resize(n, coords ? n : n - 1);
  lc.c_pres.leftCols(n - 1) = m.rightCols(n - 1);
  if (coords) lc.c_pres.col(n - 1) = m * *coords;
  return lc;
}

Vector coords_for(Index n, double a, double w_norm) {
  Vector y = Vector::Zero(n);
  y(0) = a;
  y(1) = w_norm;
  return y;
}

}  // namespace

TEST(Perturbation, PreservedEqualToTargetHasLambdaOne) {
  oracle::Gen g(51);
  const LambdaCase lc = lambda_case(g, 5, 4, coords_for(5, 1.0, 0.0));
  const auto cert = certify_perturbation(lc.w0, lc.c, lc.c_star, lc.c_pres);
  EXPECT_NEAR(cert.lambda.back(), 1.0, 1e-10);
  EXPECT_NEAR(cert.delta_p_norm.back(), cert.delta_c_norm, 1e-10 * cert.delta_c_norm);
  EXPECT_TRUE(cert.passed());
}

TEST(Perturbation, ConstructedLambdaZero) {
  oracle::Gen g(52);
  const LambdaCase lc = lambda_case(g, 6, 3, std::nullopt);
  const auto cert = certify_perturbation(lc.w0, lc.c, lc.c_star, lc.c_pres);
  for (double lam : cert.lambda) EXPECT_NEAR(lam, 0.0, 1e-10);
  for (double d : cert.delta_p_norm) EXPECT_LT(d, 1e-10 * cert.delta_c_norm);
  EXPECT_TRUE(cert.passed());
}

TEST(Perturbation, ConstructedLambdaHalf) {
  oracle::Gen g(53);
  const LambdaCase lc = lambda_case(g, 6, 5, coords_for(6, 1.0, 1.0));
  const auto cert = certify_perturbation(lc.w0, lc.c, lc.c_star, lc.c_pres);
  EXPECT_NEAR(cert.lambda.back(), 0.5, 1e-10);
  EXPECT_GE(cert.delta_p_norm.back(), 0.5 * cert.delta_c_norm - 1e-8);
  EXPECT_LT(cert.max_sine, 1e-8);
  EXPECT_TRUE(cert.passed());
}

TEST(Perturbation, RandomLambdaMatchesFormula) {
  oracle::Gen g(54);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = g.range(3, 10);
    const double a = g.uniform(0.05, 1.0), w = g.uniform(0.0, 2.0);
    const LambdaCase lc = lambda_case(g, n, g.range(2, 8), coords_for(n, a, w));
    const auto cert = certify_perturbation(lc.w0, lc.c, lc.c_star, lc.c_pres);
    EXPECT_NEAR(cert.lambda.back(), a / (1.0 + w * w), 1e-9);
    EXPECT_TRUE(cert.passed()) << "trial " << trial;
  }
}

TEST(Perturbation, SingularNIsRejected) {
  oracle::Gen g(55);
  const Matrix w0 = g.gaussian(3, 5);
  const Vector c = g.gaussian(5, 1);
  EXPECT_THROW(certify_perturbation(w0, c, c, Matrix(c)), SingularMatrix);
  EXPECT_THROW(certify_perturbation(w0, c, c, g.gaussian(4, 2)), InvalidInput);
}

TEST(Preservation, DpIsExactUceIsNot) {
  oracle::Gen g(56);
  EditProblem prob;
  // T + m > n: the joint fit is overdetermined, so UCE cannot be exact.
  prob.w0 = g.gaussian(6, 8);
  prob.concepts.c_pres = g.gaussian(8, 6);
  prob.concepts.c_tgt = g.gaussian(8, 3);
  prob.concepts.c_star = g.gaussian(8, 3);
  const auto dp = certify_preservation(dp_edit(prob), prob.concepts.c_pres);
  EXPECT_TRUE(dp.passed());
  EXPECT_EQ(dp.samples, 8);
  const auto uce = certify_preservation(uce_edit(prob), prob.concepts.c_pres);
  EXPECT_FALSE(uce.passed());
  EXPECT_GT(uce.max_column_ratio, 1e-6);
}

TEST(Truncation, KnownSpectrum) {
  oracle::Gen g(57);
  const Index n = 8;
  const Matrix u = g.orthonormal(n, 3), v = g.orthonormal(3, 3);
  const Vector s = (Vector(3) << 10.0, 1.0, 0.1).finished();
  EditProblem prob;
  prob.w0 = g.gaussian(5, n);
  prob.concepts.c_pres = u * s.asDiagonal() * v.transpose();
  prob.concepts.c_tgt = g.gaussian(n, 2);
  prob.concepts.c_star = g.gaussian(n, 2);

  for (Index k = 0; k <= 3; ++k) {
    EditConfig cfg;
    cfg.truncation_k = k;
    const EditResult r = dp_edit(prob, cfg);
    const auto cert = certify_truncation_bounds(prob, r, k, cfg);
    EXPECT_EQ(cert.rank_c_pres, 3);
    EXPECT_NEAR(cert.sigma_k_plus_1, k < 3 ? s(k) : 0.0, 1e-12);
    for (double d : cert.per_preserved_perturbation) EXPECT_LE(d, cert.preservation_bound + 1e-8);
    EXPECT_TRUE(cert.passed()) << "k " << k;
    if (k == 1) {
      EXPECT_NEAR(cert.preservation_bound, cert.z_star_spectral_norm * 1.0, 1e-12);
      EXPECT_GT(cert.preservation_bound, 1e-3);
    }
    if (k == 3) {
      EXPECT_TRUE(cert.degenerate_bound_vanishes());
    }
  }
}

TEST(Truncation, IdentityAndLowerBound) {
  oracle::Gen g(58);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = g.range(6, 16), t = g.range(2, 4), m = g.range(1, n - t - 1);
    EditProblem prob;
    prob.w0 = g.gaussian(g.range(t, 10), n);
    prob.concepts.c_pres = g.gaussian(n, m);
    prob.concepts.c_tgt = g.gaussian(n, t);
    prob.concepts.c_star = g.gaussian(n, t);
    EditConfig cfg;
    cfg.truncation_k = g.range(0, m);
    const EditResult r = dp_edit(prob, cfg);
    const auto cert = certify_truncation_bounds(prob, r, *cfg.truncation_k, cfg);
    EXPECT_LT(cert.identity_residual, 1e-8);
    EXPECT_TRUE(cert.kernel_condition_holds);
    for (std::size_t i = 0; i < cert.targets.size(); ++i)
      EXPECT_GE(cert.target_perturbation[i], cert.erasure_lower_bounds[i] - 1e-8);
    EXPECT_TRUE(cert.passed());
  }
}

TEST(Truncation, DetectsForeignUpdate) {
  oracle::Gen g(59);
  EditProblem prob;
  prob.w0 = g.gaussian(4, 7);
  prob.concepts.c_pres = g.gaussian(7, 3);
  prob.concepts.c_tgt = g.gaussian(7, 2);
  prob.concepts.c_star = g.gaussian(7, 2);
  EditResult r = dp_edit(prob);
  r.delta_w += 1e-3 * g.gaussian(4, 7);
  const auto cert = certify_truncation_bounds(prob, r, 3);
  EXPECT_FALSE(cert.passed());
}

TEST(Stationarity, UcePassesDpDoesNot) {
  oracle::Gen g(60);
  EditProblem prob;
  prob.w0 = g.gaussian(5, 8);
  prob.concepts.c_pres = g.gaussian(8, 6);
  prob.concepts.c_tgt = g.gaussian(8, 3);
  prob.concepts.c_star = g.gaussian(8, 3);
  EXPECT_TRUE(certify_uce_stationarity(prob, uce_edit(prob)).passed());
  EXPECT_FALSE(certify_uce_stationarity(prob, dp_edit(prob)).passed());
}

TEST(GeometryDemo, DpExactUceGrowsWithCorrelation) {
  const auto rep = geometric_least_squares_demo(7, {0.0, 0.5, 0.9});
  ASSERT_EQ(rep.points.size(), 3u);
  EXPECT_TRUE(rep.dp_exact());
  EXPECT_LT(rep.points[0].uce_perturbation, 1e-12);
  EXPECT_GT(rep.points[1].uce_perturbation, 1e-3);
  EXPECT_GT(rep.points[2].uce_perturbation, 1e-3);
  EXPECT_THROW(geometric_least_squares_demo(7, {1.0}), InvalidInput);
}

TEST(GeometryDemo, Deterministic) {
  const auto a = geometric_least_squares_demo(99, {0.3, 0.8});
  const auto b = geometric_least_squares_demo(99, {0.3, 0.8});
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].uce_perturbation, b.points[i].uce_perturbation);
    EXPECT_EQ(a.points[i].dp_perturbation, b.points[i].dp_perturbation);
  }
}
