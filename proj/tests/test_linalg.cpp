#include "nulledit/linalg.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>
#include <lapacke.h>

#include <vector>

using namespace nulledit;

namespace {

struct LapackSvd {
  Vector s;
  Matrix u, vt;
};

LapackSvd lapack_svd(Matrix a) {
  const lapack_int m = static_cast<lapack_int>(a.rows()), n = static_cast<lapack_int>(a.cols());
  const lapack_int q = std::min(m, n);
  LapackSvd out{Vector(q), Matrix(m, q), Matrix(q, n)};
  std::vector<double> superb(static_cast<std::size_t>(std::max(q, 1)));
  const lapack_int info = LAPACKE_dgesvd(LAPACK_COL_MAJOR, 'S', 'S', m, n, a.data(), m,
                                         out.s.data(), out.u.data(), m, out.vt.data(), q,
                                         superb.data());
  EXPECT_EQ(info, 0);
  return out;
}

Matrix six_by_four_dependent() {
  oracle::Gen g(11);
  Matrix a(6, 4);
  a.leftCols(2) = g.gaussian(6, 2);
  a.col(2) = a.col(0);
  a.col(3) = 2.0 * a.col(1) - a.col(0);
  return a;
}

}  // namespace

TEST(ThinSvd, IdentityHasUnitSpectrum) {
  const ThinSvd f = thin_svd(Matrix::Identity(3, 3));
  ASSERT_EQ(f.numerical_rank(), 3);
  EXPECT_TRUE(f.sigma.isApprox(Vector::Ones(3), 1e-15));
  EXPECT_LT((f.reconstruct() - Matrix::Identity(3, 3)).norm(), 1e-14);
}

TEST(ThinSvd, ZeroMatrixHasRankZero) {
  const ThinSvd f = thin_svd(Matrix::Zero(2, 4));
  EXPECT_EQ(f.numerical_rank(), 0);
  EXPECT_EQ(f.u.rows(), 2);
  EXPECT_EQ(f.vt.cols(), 4);
  EXPECT_EQ(pinv(f).rows(), 4);
  EXPECT_EQ(pinv(f).norm(), 0.0);
}

TEST(ThinSvd, DependentColumnsMatchLapack) {
  const Matrix a = six_by_four_dependent();
  const ThinSvd f = thin_svd(a);
  const LapackSvd ref = lapack_svd(a);
  ASSERT_EQ(f.numerical_rank(), 2);
  EXPECT_NEAR(f.sigma(0), ref.s(0), 1e-12 * ref.s(0));
  EXPECT_NEAR(f.sigma(1), ref.s(1), 1e-12 * ref.s(0));
  EXPECT_LT(ref.s(2), f.tolerance);
  // Singular vectors agree up to sign; compare the rank-2 projectors instead.
  const Matrix pu = f.u * f.u.transpose();
  const Matrix pu_ref = ref.u.leftCols(2) * ref.u.leftCols(2).transpose();
  EXPECT_LT((pu - pu_ref).norm(), 1e-12);
  EXPECT_LT((f.reconstruct() - a).norm(), 1e-12 * a.norm());
}

TEST(ThinSvd, RandomMatricesMatchLapack) {
  oracle::Gen g(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = g.gaussian(g.range(1, 12), g.range(1, 12));
    const ThinSvd f = thin_svd(a);
    const LapackSvd ref = lapack_svd(a);
    ASSERT_EQ(f.full_spectrum.size(), ref.s.size());
    EXPECT_LT((f.full_spectrum - ref.s).norm(), 1e-12 * ref.s(0));
  }
}

TEST(ThinSvd, ExplicitToleranceDropsSmallValues) {
  const Matrix d = Vector((Vector(3) << 3.0, 1e-3, 1e-9).finished()).asDiagonal();
  EXPECT_EQ(thin_svd(d).numerical_rank(), 3);
  EXPECT_EQ(thin_svd(d, 1e-6).numerical_rank(), 2);
  EXPECT_EQ(thin_svd(d, 1e-2).numerical_rank(), 1);
  EXPECT_THROW(thin_svd(d, -1.0), InvalidInput);
  EXPECT_THROW(thin_svd(d, 0.0), InvalidInput);
}

TEST(ThinSvd, RejectsNonFinite) {
  Matrix a = Matrix::Ones(2, 2);
  a(1, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(thin_svd(a), InvalidInput);
}

TEST(Pinv, Examples) {
  EXPECT_LT((pinv(Matrix::Identity(4, 4)) - Matrix::Identity(4, 4)).norm(), 1e-15);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  Matrix expect = Matrix::Zero(2, 2);
  expect(0, 0) = 0.5;
  EXPECT_LT((pinv(d) - expect).norm(), 1e-15);
}

TEST(Pinv, FullColumnRankMatchesNormalEquations) {
  oracle::Gen g(3);
  const Matrix a = g.gaussian(5, 3);
  const Matrix ref = (a.transpose() * a).ldlt().solve(a.transpose());
  EXPECT_LT(oracle::rel_diff(pinv(a), ref), 1e-12);
}

TEST(Pinv, PenroseIdentities) {
  oracle::Gen g(4);
  for (int trial = 0; trial < 25; ++trial) {
    const Index r = g.range(1, 4);
    const Matrix a = g.gaussian(g.range(r, 9), r) * g.gaussian(r, g.range(r, 9));
    const Matrix x = pinv(a);
    EXPECT_LT((a * x * a - a).norm(), 1e-10 * a.norm());
    EXPECT_LT((x * a * x - x).norm(), 1e-10 * x.norm());
    EXPECT_LT(((a * x) - (a * x).transpose()).norm(), 1e-10);
    EXPECT_LT(((x * a) - (x * a).transpose()).norm(), 1e-10);
  }
}

TEST(LeftNullspace, SingleVector) {
  Matrix e1 = Matrix::Zero(3, 1);
  e1(0, 0) = 1.0;
  const SubspaceBasis b = left_nullspace_basis(e1);
  ASSERT_EQ(b.subspace_dim(), 2);
  EXPECT_LT((b.basis.transpose() * e1).norm(), 1e-15);
  Matrix expect = Matrix::Identity(3, 3);
  expect(0, 0) = 0.0;
  EXPECT_LT((b.projector() - expect).norm(), 1e-14);
}

TEST(LeftNullspace, FullRankSquareIsEmpty) {
  oracle::Gen g(8);
  const SubspaceBasis b = left_nullspace_basis(g.gaussian(4, 4));
  EXPECT_EQ(b.subspace_dim(), 0);
  EXPECT_EQ(b.ambient_dim(), 4);
}

TEST(LeftNullspace, RankDeficient) {
  oracle::Gen g(9);
  const Matrix a = g.gaussian(4, 2) * g.gaussian(2, 3);
  const SubspaceBasis b = left_nullspace_basis(a);
  ASSERT_EQ(b.subspace_dim(), 2);
  EXPECT_LT((b.basis.transpose() * a).norm(), 1e-12 * a.norm());
  EXPECT_LT((b.basis.transpose() * b.basis - Matrix::Identity(2, 2)).norm(), 1e-14);
}

TEST(ComplementTopK, EdgeValuesOfK) {
  oracle::Gen g(10);
  const Index n = 7;
  const Matrix c = g.gaussian(n, 3);
  const auto full = complement_basis_topk(c, 3);
  EXPECT_EQ(full.subspace_dim(), n - 3);
  EXPECT_LT((full.basis.transpose() * c).norm(), 1e-12 * c.norm());

  const auto everything = complement_basis_topk(c, 0);
  EXPECT_LT((everything.projector() - Matrix::Identity(n, n)).norm(), 1e-13);

  const auto partial = complement_basis_topk(c, 2);
  EXPECT_NEAR(partial.projector().trace(), static_cast<double>(n - 2), 1e-12);
  // Matches the Jacobi-SVD complement as a subspace.
  const Matrix ref = oracle::complement_topk(c, 2);
  EXPECT_LT((partial.projector() - ref * ref.transpose()).norm(), 1e-12);

  EXPECT_THROW(complement_basis_topk(c, 4), InvalidInput);
  EXPECT_THROW(complement_basis_topk(c, -1), InvalidInput);
}

TEST(OrthogonalProject, Examples) {
  Matrix s = Matrix::Zero(3, 1);
  s(0, 0) = 2.0;
  Vector v(3);
  v << 1.0, 2.0, 3.0;
  const Vector pv = orthogonal_project(s, v);
  EXPECT_NEAR(pv(0), 1.0, 1e-15);
  EXPECT_NEAR(pv(1), 0.0, 1e-15);
  EXPECT_NEAR(pv(2), 0.0, 1e-15);

  Matrix plane = Matrix::Zero(3, 2);
  plane(0, 0) = 1.0;
  plane(1, 1) = 1.0;
  const Vector pp = orthogonal_project(plane, v);
  EXPECT_LT((pp - Vector((Vector(3) << 1.0, 2.0, 0.0).finished())).norm(), 1e-15);
}

TEST(OrthogonalProject, DuplicatedColumnsDoNotChangeResult) {
  oracle::Gen g(12);
  const Matrix s = g.gaussian(8, 3);
  Matrix dup(8, 5);
  dup << s, s.col(0), s.col(2) * 3.0;
  const Matrix v = g.gaussian(8, 4);
  // Reference via normal equations on the independent columns.
  const Matrix ref = s * (s.transpose() * s).ldlt().solve(s.transpose() * v);
  EXPECT_LT(oracle::rel_diff(orthogonal_project(s, v), ref), 1e-12);
  EXPECT_LT(oracle::rel_diff(orthogonal_project(dup, v), ref), 1e-12);
}

TEST(OrthogonalProject, ProjectorProperties) {
  oracle::Gen g(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = g.range(2, 10);
    const Matrix s = g.gaussian(n, g.range(1, n));
    const Matrix p = orthogonal_project(s, Matrix::Identity(n, n));
    EXPECT_LT((p * p - p).norm(), 1e-12);
    EXPECT_LT((p - p.transpose()).norm(), 1e-12);
    EXPECT_LT((p * s - s).norm(), 1e-12 * s.norm());
  }
}

TEST(OrthogonalProject, RejectsMismatch) {
  EXPECT_THROW(orthogonal_project(Matrix::Ones(3, 1), Matrix::Ones(4, 1)), InvalidInput);
}

TEST(Norms, SpectralAndSmallest) {
  const Matrix d = Vector((Vector(3) << 5.0, 2.0, 0.5).finished()).asDiagonal();
  EXPECT_NEAR(spectral_norm(d), 5.0, 1e-14);
  EXPECT_NEAR(smallest_singular_value(d), 0.5, 1e-14);
  EXPECT_EQ(spectral_norm(Matrix(0, 0)), 0.0);
}
