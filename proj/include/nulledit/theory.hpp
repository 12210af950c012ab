#pragma once

// Numerical certificates for the guarantees of closed-form edits:
//
//   perturbation   UCE moves a preserved vector p by at least lambda times the
//                  movement of the target, lambda = <N^-1/2 c, N^-1/2 p> /
//                  <N^-1/2 c, N^-1/2 c>, N = c c^T + C_pres C_pres^T.
//   preservation   an untruncated DP edit annihilates col(C_pres).
//   truncation     with top-k truncation, ||dW p_i|| <= ||Z*||_2 sigma_{k+1},
//                  dW C_tgt = B V_q V_q^T, and a per-target erasure lower
//                  bound sigma_min(B V_q) ||V_q^T e_i||.

#include "nulledit/erasure.hpp"
#include "nulledit/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace nulledit {

struct TheoryTolerances {
  double slack = 1e-8;   // absolute slack on inequalities, relative on identities
  double exact = 1e-10;  // "exactly zero" threshold for preservation
  double kernel = 1e-8;  // sigma_min(B V_q) must exceed this for the lower bound
};

struct PerturbationCertificate {
  Vector n_matrix_spectrum;  // eigenvalues of N, descending
  double n_condition = 0.0;
  std::vector<double> lambda;        // realized ratio per preserved column
  std::vector<double> delta_p_norm;  // ||dW p_j||
  double delta_c_norm = 0.0;         // ||dW c||
  std::vector<bool> bound_satisfied;
  std::vector<double> collinearity_sine;  // angle of dW p_j against v* - W0 c
  double max_sine = 0.0;

  bool passed(const TheoryTolerances& tol = {}) const {
    for (bool b : bound_satisfied)
      if (!b) return false;
    return max_sine <= tol.slack;
  }
};

namespace detail {

inline double sine_between(const Vector& a, const Vector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  // Residual of projecting a onto b; sqrt(1 - cos^2) bottoms out near 1e-8.
  const Vector bh = b / nb;
  return std::min(1.0, (a - bh * bh.dot(a)).norm() / na);
}

}  // namespace detail

/// Certifies a given single-target UCE update `delta_w`.
inline PerturbationCertificate certify_perturbation(const Matrix& w0, const Vector& c,
                                                         const Vector& c_star,
                                                         const Matrix& c_pres,
                                                         const Matrix& delta_w,
                                                         const TheoryTolerances& tol = {},
                                                         const RankTolerance& rank_tol = {}) {
  const Index n = c.size();
  if (w0.cols() != n || c_star.size() != n || c_pres.rows() != n || delta_w.rows() != w0.rows() ||
      delta_w.cols() != n)
    throw InvalidInput("certify_perturbation: dimension mismatch");

  PerturbationCertificate cert;
  const Matrix big_n = c * c.transpose() + c_pres * c_pres.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(big_n);
  const Vector ev = eig.eigenvalues();  // ascending
  cert.n_matrix_spectrum = ev.reverse();
  const double top = ev(n - 1);
  const double floor = resolve_tolerance(rank_tol, top, n, n);
  cert.n_condition = ev(0) > 0.0 ? top / ev(0) : std::numeric_limits<double>::infinity();
  if (!(ev(0) > floor))
    throw SingularMatrix("N = c c^T + C_pres C_pres^T is numerically singular (condition " +
                             std::to_string(cert.n_condition) + ")",
                         cert.n_condition);

  const Matrix& q = eig.eigenvectors();
  const Matrix inv_sqrt = q * ev.cwiseSqrt().cwiseInverse().asDiagonal() * q.transpose();
  const Vector a = inv_sqrt * c;
  const double aa = a.squaredNorm();
  const Vector residual = w0 * c_star - w0 * c;
  const Vector dc = delta_w * c;
  cert.delta_c_norm = dc.norm();

  const double scale = delta_w.norm();
  for (Index j = 0; j < c_pres.cols(); ++j) {
    const double lam = a.dot(inv_sqrt * c_pres.col(j)) / aa;
    const Vector dp = delta_w * c_pres.col(j);
    const double dpn = dp.norm();
    cert.lambda.push_back(lam);
    cert.delta_p_norm.push_back(dpn);
    cert.bound_satisfied.push_back(lam <= 0.0 || dpn >= lam * cert.delta_c_norm - tol.slack);
    // A vanishing dW p carries no direction.
    const bool negligible = dpn <= tol.exact * scale * c_pres.col(j).norm();
    const double s = negligible ? 0.0 : detail::sine_between(dp, residual);
    cert.collinearity_sine.push_back(s);
    cert.max_sine = std::max(cert.max_sine, s);
  }
  return cert;
}

/// Runs UCE on (c -> c*, preserving C_pres) and certifies the result.
inline PerturbationCertificate certify_perturbation(const Matrix& w0, const Vector& c,
                                                         const Vector& c_star,
                                                         const Matrix& c_pres,
                                                         const TheoryTolerances& tol = {},
                                                         const RankTolerance& rank_tol = {}) {
  EditProblem problem{w0, ConceptSet{Matrix(c), c_pres, Matrix(c_star), std::nullopt}};
  EditConfig cfg;
  cfg.rank_tolerance = rank_tol;
  const EditResult r = uce_edit(problem, cfg);
  return certify_perturbation(w0, c, c_star, c_pres, r.delta_w, tol, rank_tol);
}

struct PreservationCertificate {
  double max_column_ratio = 0.0;  // max_j ||dW p_j|| / (||W0 p_j|| + eps)
  double max_sample_ratio = 0.0;  // max ||dW v|| / (||v|| ||dW||_F), v in col(C_pres)
  int samples = 0;

  bool passed(const TheoryTolerances& tol = {}) const {
    return max_column_ratio <= tol.exact && max_sample_ratio <= tol.exact;
  }
};

inline PreservationCertificate certify_preservation(const EditResult& result,
                                                         const Matrix& c_pres,
                                                         int samples = 8,
                                                         std::uint64_t seed = 0x5eed) {
  PreservationCertificate cert;
  if (c_pres.cols() == 0) return cert;
  const Matrix w0 = result.w_new - result.delta_w;
  const double w0_norm = w0.norm();
  const double d_norm = result.delta_w.norm();
  const Matrix moved = result.delta_w * c_pres;
  const Matrix base = w0 * c_pres;
  for (Index j = 0; j < c_pres.cols(); ++j) {
    const double eps = std::numeric_limits<double>::epsilon() * w0_norm * c_pres.col(j).norm();
    const double ratio = moved.col(j).norm() / (base.col(j).norm() + eps);
    cert.max_column_ratio = std::max(cert.max_column_ratio, std::isnan(ratio) ? 0.0 : ratio);
  }
  if (d_norm == 0.0) return cert;
  Rng rng(seed);
  for (int s = 0; s < samples; ++s) {
    const Vector g = rng.gaussian_matrix(c_pres.cols(), 1);
    const Vector v = c_pres * g;
    const double vn = v.norm();
    if (vn == 0.0) continue;
    cert.max_sample_ratio =
        std::max(cert.max_sample_ratio, (result.delta_w * v).norm() / (vn * d_norm));
    ++cert.samples;
  }
  return cert;
}

struct TruncationCertificate {
  Index k = 0;
  Index rank_c_pres = 0;
  double z_star_spectral_norm = 0.0;
  double sigma_k_plus_1 = 0.0;
  double preservation_bound = 0.0;  // ||Z*||_2 sigma_{k+1}
  std::vector<double> per_preserved_perturbation;
  double topk_residual = 0.0;  // ||dW U_k||_F / ||dW||_F

  std::vector<Index> targets;  // feasible target indices certified below
  Index q = 0;                 // rank of C_perp
  double identity_residual = 0.0;  // ||dW C - B V_q V_q^T||_F / ||B V_q V_q^T||_F
  std::vector<double> target_perturbation;  // ||dW c_i||
  std::vector<double> erasure_lower_bounds;  // sigma_min(B V_q) ||y_i||
  double sigma_min_bv = 0.0;
  bool kernel_condition_holds = false;

  bool preservation_holds(const TheoryTolerances& tol = {}) const {
    for (double v : per_preserved_perturbation)
      if (v > preservation_bound + tol.slack) return false;
    return true;
  }
  bool identity_holds(const TheoryTolerances& tol = {}) const {
    return identity_residual <= tol.slack;
  }
  bool lower_bound_holds(const TheoryTolerances& tol = {}) const {
    if (!kernel_condition_holds) return true;
    for (std::size_t i = 0; i < target_perturbation.size(); ++i)
      if (target_perturbation[i] < erasure_lower_bounds[i] - tol.slack) return false;
    return true;
  }
  // Without truncation the right side of the preservation bound vanishes.
  bool degenerate_bound_vanishes(const TheoryTolerances& tol = {}) const {
    return k == rank_c_pres && preservation_bound <= tol.slack;
  }
  bool passed(const TheoryTolerances& tol = {}) const {
    return preservation_holds(tol) && identity_holds(tol) && lower_bound_holds(tol) &&
           topk_residual <= tol.exact && (k != rank_c_pres || degenerate_bound_vanishes(tol));
  }
};

/// Recomputes the truncated-edit quantities from the concepts and checks them
/// against `result`. `config` must carry the rank tolerance and infeasibility
/// threshold the edit used.
inline TruncationCertificate certify_truncation_bounds(const EditProblem& problem,
                                                       const EditResult& result, Index k,
                                                       const EditConfig& config = {},
                                                       const TheoryTolerances& tol = {}) {
  const ConceptSet& cs = problem.concepts;
  const Matrix c_pres = cs.preserved();
  const PreservedSplit split = split_preserved(c_pres, k, config.rank_tolerance);

  TruncationCertificate cert;
  cert.k = split.k;
  cert.rank_c_pres = split.rank;
  cert.sigma_k_plus_1 = split.sigma_after_k();
  const Matrix& dw = result.delta_w;
  const Matrix z_star = dw * split.u_2k;
  cert.z_star_spectral_norm = spectral_norm(z_star);
  cert.preservation_bound = cert.z_star_spectral_norm * cert.sigma_k_plus_1;
  const double dw_norm = dw.norm();
  cert.topk_residual = (dw_norm > 0.0 && split.k > 0) ? (dw * split.u_k).norm() / dw_norm : 0.0;
  for (Index j = 0; j < c_pres.cols(); ++j)
    cert.per_preserved_perturbation.push_back((dw * c_pres.col(j)).norm());

  cert.targets = feasible_targets(cs.c_tgt, split.u_2k, config.infeasible_threshold);
  const Matrix c_f = select_columns(cs.c_tgt, cert.targets);
  const Matrix b = problem.w0 * (select_columns(result.proxies_used, cert.targets) - c_f);
  const ThinSvd perp = thin_svd(split.u_2k.transpose() * c_f, config.rank_tolerance);
  cert.q = perp.numerical_rank();
  const Matrix v_q = perp.vt.transpose();  // T_f x q
  const Matrix bv = b * v_q;
  const Matrix rhs = bv * v_q.transpose();
  const Matrix lhs = dw * c_f;
  const double den = rhs.norm() > 0.0 ? rhs.norm() : std::max(b.norm(), 1.0);
  cert.identity_residual = (lhs - rhs).norm() / den;

  cert.sigma_min_bv = bv.cols() > bv.rows() ? 0.0 : smallest_singular_value(bv);
  cert.kernel_condition_holds = cert.q > 0 && cert.sigma_min_bv > tol.kernel;
  for (Index i = 0; i < c_f.cols(); ++i) {
    cert.target_perturbation.push_back(lhs.col(i).norm());
    cert.erasure_lower_bounds.push_back(cert.sigma_min_bv * v_q.row(i).norm());
  }
  return cert;
}

/// First-order optimality of a UCE update: the gradient of the joint
/// least-squares objective, dW G - (V* - W0 C_tgt) C_tgt^T, must vanish.
struct StationarityCertificate {
  double gradient_norm = 0.0;
  double scale = 0.0;  // ||dW||_F ||G||_F + ||(V* - W0 C) C^T||_F
  double relative() const { return scale > 0.0 ? gradient_norm / scale : gradient_norm; }
  bool passed(const TheoryTolerances& tol = {}) const { return relative() <= tol.slack; }
};

inline StationarityCertificate certify_uce_stationarity(const EditProblem& problem,
                                                        const EditResult& result) {
  const ConceptSet& cs = problem.concepts;
  const Matrix pres = cs.preserved();
  const Matrix gram = cs.c_tgt * cs.c_tgt.transpose() + pres * pres.transpose();
  const Matrix rhs = problem.w0 * (result.proxies_used - cs.c_tgt) * cs.c_tgt.transpose();
  StationarityCertificate cert;
  cert.gradient_norm = (result.delta_w * gram - rhs).norm();
  cert.scale = result.delta_w.norm() * gram.norm() + rhs.norm();
  return cert;
}

/// One point of the correlated target/preserve comparison.
struct GeometryPoint {
  double cosine = 0.0;
  double uce_perturbation = 0.0;  // max_j ||dW p_j|| / ||W0 p_j||
  double dp_perturbation = 0.0;
};

struct GeometryDemoReport {
  std::vector<GeometryPoint> points;
  bool dp_exact(const TheoryTolerances& tol = {}) const {
    for (const auto& p : points)
      if (p.dp_perturbation > tol.exact) return false;
    return true;
  }
};

/// Two targets and n - 1 preserved vectors in R^n, so the joint least-squares
/// system is overdetermined whenever cosine > 0. Frame q_0..q_{n-1}:
///   preserved  keep = cos q0 + sin q1, then q2 .. q_{n-1}
///   free       d = -sin q0 + cos q1 (the only direction outside col(C_pres))
///   targets    c1 = q0, c2 = cos q2 + sin d
/// Both targets sit at the given cosine to col(C_pres). Anchors are Gaussian.
/// Reports the largest relative drift of a preserved vector under each method.
inline GeometryDemoReport geometric_least_squares_demo(std::uint64_t seed,
                                                       const std::vector<double>& cosines,
                                                       Index n = 16, Index p = 12) {
  if (n < 3) throw InvalidInput("geometric_least_squares_demo: n must be at least 3");
  GeometryDemoReport report;
  for (double cosine : cosines) {
    if (!(cosine >= 0.0 && cosine < 1.0))
      throw InvalidInput("geometric_least_squares_demo: cosine must lie in [0, 1)");
    Rng rng(seed);
    const Matrix w0 = rng.gaussian_matrix(p, n) / std::sqrt(static_cast<double>(n));
    const Matrix q = rng.orthonormal_columns(n, n);
    const Matrix anchors = rng.gaussian_matrix(n, 2);
    const double sn = std::sqrt(1.0 - cosine * cosine);

    Matrix c_pres(n, n - 1);
    c_pres.col(0) = cosine * q.col(0) + sn * q.col(1);
    c_pres.rightCols(n - 2) = q.rightCols(n - 2);
    const Vector free_dir = -sn * q.col(0) + cosine * q.col(1);
    Matrix c_tgt(n, 2);
    c_tgt.col(0) = q.col(0);
    c_tgt.col(1) = cosine * q.col(2) + sn * free_dir;

    const EditProblem prob{w0, ConceptSet{c_tgt, c_pres, anchors, std::nullopt}};
    const auto worst = [](const EditResult& r) {
      const auto& d = r.diagnostics.preservation_drops;
      return *std::max_element(d.begin(), d.end());
    };
    report.points.push_back({cosine, worst(uce_edit(prob)), worst(dp_edit(prob))});
  }
  return report;
}

}  // namespace nulledit
