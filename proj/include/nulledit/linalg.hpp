#pragma once

// Dense linear-algebra primitives with explicit numerical-rank semantics.
//
// Every rank decision in nulledit goes through `RankTolerance`: either an
// absolute cut supplied by the caller, or the conventional
// eps * max(rows, cols) * sigma_1 cut.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace nulledit {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Raised for malformed inputs: non-finite entries, dimension mismatches,
/// out-of-range parameters.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an operation needs an invertible matrix and the input is
/// numerically singular.
class SingularMatrix : public std::runtime_error {
 public:
  SingularMatrix(const std::string& what, double condition)
      : std::runtime_error(what), condition_(condition) {}
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

/// Absolute singular-value cut. Empty means "use the default convention".
using RankTolerance = std::optional<double>;

inline double default_rank_tolerance(double sigma_max, Index rows, Index cols) {
  return std::numeric_limits<double>::epsilon() *
         static_cast<double>(std::max<Index>({rows, cols, 1})) * sigma_max;
}

inline double resolve_tolerance(const RankTolerance& tol, double sigma_max, Index rows,
                                Index cols) {
  if (tol) {
    if (!(*tol > 0.0) || !std::isfinite(*tol))
      throw InvalidInput("rank tolerance must be a positive finite number");
    return *tol;
  }
  return default_rank_tolerance(sigma_max, rows, cols);
}

inline void require_finite(const Matrix& a, const char* name) {
  if (!a.allFinite())
    throw InvalidInput(std::string(name) + ": matrix contains non-finite entries");
}

/// Rank-revealing thin factorization a ~= u * diag(sigma) * vt, keeping only
/// singular values strictly above `tolerance`.
struct ThinSvd {
  Matrix u;      // rows(a) x q, orthonormal columns
  Vector sigma;  // q values, non-increasing
  Matrix vt;     // q x cols(a), orthonormal rows
  Vector full_spectrum;  // all min(rows, cols) singular values, untruncated
  double tolerance = 0.0;

  Index numerical_rank() const { return sigma.size(); }
  double largest() const { return full_spectrum.size() ? full_spectrum(0) : 0.0; }
  Matrix reconstruct() const { return u * sigma.asDiagonal() * vt; }
};

/// Orthonormal column basis of a subspace of R^n.
struct SubspaceBasis {
  Matrix basis;  // n x d

  Index ambient_dim() const { return basis.rows(); }
  Index subspace_dim() const { return basis.cols(); }
  Matrix projector() const { return basis * basis.transpose(); }
};

namespace detail {

inline Index count_above(const Vector& s, double tol) {
  Index r = 0;
  while (r < s.size() && s(r) > tol) ++r;
  return r;
}

// Full left singular basis together with the spectrum. The first `rank`
// columns of `u` span col(a); the remaining columns span its left nullspace.
struct FullLeftSvd {
  Matrix u;  // n x n
  Vector sigma;
  Index rank = 0;
  double tolerance = 0.0;
};

inline FullLeftSvd full_left_svd(const Matrix& a, const RankTolerance& tol) {
  require_finite(a, "full_left_svd");
  FullLeftSvd out;
  const Index n = a.rows();
  if (a.cols() == 0 || n == 0) {
    out.u = Matrix::Identity(n, n);
    out.sigma = Vector(0);
    out.tolerance = resolve_tolerance(tol, 0.0, a.rows(), a.cols());
    return out;
  }
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeFullU);
  out.sigma = svd.singularValues();
  out.u = svd.matrixU();
  const double smax = out.sigma.size() ? out.sigma(0) : 0.0;
  out.tolerance = resolve_tolerance(tol, smax, a.rows(), a.cols());
  out.rank = count_above(out.sigma, out.tolerance);
  return out;
}

}  // namespace detail

inline ThinSvd thin_svd(const Matrix& a, const RankTolerance& rank_tolerance = {}) {
  require_finite(a, "thin_svd");
  ThinSvd out;
  if (a.size() == 0) {
    out.u = Matrix(a.rows(), 0);
    out.vt = Matrix(0, a.cols());
    out.tolerance = resolve_tolerance(rank_tolerance, 0.0, a.rows(), a.cols());
    return out;
  }
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.full_spectrum = svd.singularValues();
  out.tolerance =
      resolve_tolerance(rank_tolerance, out.full_spectrum(0), a.rows(), a.cols());
  const Index q = detail::count_above(out.full_spectrum, out.tolerance);
  out.sigma = out.full_spectrum.head(q);
  out.u = svd.matrixU().leftCols(q);
  out.vt = svd.matrixV().leftCols(q).transpose();
  return out;
}

/// Moore-Penrose pseudoinverse; singular values at or below the tolerance are
/// treated as zero.
inline Matrix pinv(const ThinSvd& f) {
  return f.vt.transpose() * f.sigma.cwiseInverse().asDiagonal() * f.u.transpose();
}

inline Matrix pinv(const Matrix& a, const RankTolerance& rank_tolerance = {}) {
  return pinv(thin_svd(a, rank_tolerance));
}

/// Orthonormal basis of {u : u^T a = 0}. Full-rank square input gives an
/// empty (n x 0) basis.
inline SubspaceBasis left_nullspace_basis(const Matrix& a,
                                          const RankTolerance& rank_tolerance = {}) {
  auto f = detail::full_left_svd(a, rank_tolerance);
  return {f.u.rightCols(a.rows() - f.rank)};
}

/// Orthonormal complement of the top-k left singular vectors of `c_pres`:
/// the columns [u_{k+1} .. u_r, u_out]. k = 0 yields all of R^n.
inline SubspaceBasis complement_basis_topk(const Matrix& c_pres, Index k,
                                           const RankTolerance& rank_tolerance = {}) {
  auto f = detail::full_left_svd(c_pres, rank_tolerance);
  if (k < 0 || k > f.rank)
    throw InvalidInput("complement_basis_topk: k = " + std::to_string(k) +
                       " outside [0, numerical rank = " + std::to_string(f.rank) + "]");
  return {f.u.rightCols(c_pres.rows() - k)};
}

/// Projects each column of v onto col(s), i.e. s (s^T s)^+ s^T v. Columns of
/// s may be dependent.
inline Matrix orthogonal_project(const Matrix& s, const Matrix& v,
                                 const RankTolerance& rank_tolerance = {}) {
  if (s.rows() != v.rows())
    throw InvalidInput("orthogonal_project: basis has " + std::to_string(s.rows()) +
                       " rows but vectors have " + std::to_string(v.rows()));
  require_finite(v, "orthogonal_project");
  // s (s^T s)^+ s^T == u_r u_r^T for the thin SVD of s; going through s
  // directly avoids squaring the condition number.
  const ThinSvd f = thin_svd(s, rank_tolerance);
  return f.u * (f.u.transpose() * v);
}

/// Spectral norm (largest singular value).
inline double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return Eigen::BDCSVD<Matrix>(a).singularValues()(0);
}

/// Smallest of the min(rows, cols) singular values.
inline double smallest_singular_value(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  const Vector s = Eigen::BDCSVD<Matrix>(a).singularValues();
  return s(s.size() - 1);
}

}  // namespace nulledit
