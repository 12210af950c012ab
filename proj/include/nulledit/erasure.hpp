#pragma once

// Closed-form weight edits that remap target embeddings onto anchor outputs.
//
//   uce : joint least squares over targets and preserved concepts.
//   dp  : proxy projection onto a safe subspace, then a minimum-norm update
//         whose row space is confined to the complement of the (top-k)
//         preserved directions, so that dW * C_pres = 0 without truncation.

#include "nulledit/linalg.hpp"

#include <cstddef>
#include <future>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace nulledit {

enum class Method { uce, dp };

inline const char* to_string(Method m) { return m == Method::uce ? "uce" : "dp"; }

inline Method parse_method(const std::string& s) {
  if (s == "uce") return Method::uce;
  if (s == "dp") return Method::dp;
  throw InvalidInput("unknown method '" + s + "' (expected 'uce' or 'dp')");
}

/// Embedding-side data of an edit. Shared across every weight matrix edited
/// against the same concepts.
struct ConceptSet {
  Matrix c_tgt;                      // n x T, targets as columns
  Matrix c_pres;                     // n x m, m may be 0
  std::optional<Matrix> c_star;      // n x T explicit anchors
  std::optional<Matrix> safe_basis;  // n x k_s, columns need not be independent

  Index dim() const { return c_tgt.rows(); }
  Index num_targets() const { return c_tgt.cols(); }
  Index num_preserved() const { return c_pres.cols(); }

  void validate() const {
    const Index n = c_tgt.rows();
    if (n == 0) throw InvalidInput("c_tgt: embedding dimension must be positive");
    if (c_tgt.cols() == 0) throw InvalidInput("c_tgt: at least one target is required");
    require_finite(c_tgt, "c_tgt");
    for (Index i = 0; i < c_tgt.cols(); ++i)
      if (c_tgt.col(i).squaredNorm() == 0.0)
        throw InvalidInput("c_tgt: target column " + std::to_string(i) + " is zero");
    if (c_pres.rows() != n && c_pres.size() != 0)
      throw InvalidInput("c_pres: expected " + std::to_string(n) + " rows, got " +
                         std::to_string(c_pres.rows()));
    require_finite(c_pres, "c_pres");
    if (c_star) {
      if (c_star->rows() != n || c_star->cols() != c_tgt.cols())
        throw InvalidInput("c_star: expected " + std::to_string(n) + "x" +
                           std::to_string(c_tgt.cols()) + ", got " +
                           std::to_string(c_star->rows()) + "x" +
                           std::to_string(c_star->cols()));
      require_finite(*c_star, "c_star");
    }
    if (safe_basis) {
      if (safe_basis->rows() != n)
        throw InvalidInput("safe_basis: expected " + std::to_string(n) + " rows, got " +
                           std::to_string(safe_basis->rows()));
      require_finite(*safe_basis, "safe_basis");
    }
    if (!c_star && !safe_basis)
      throw InvalidInput("either explicit anchors (c_star) or a safe basis is required");
  }

  // n x 0 when no preserved concepts were given.
  Matrix preserved() const { return c_pres.size() ? c_pres : Matrix(dim(), 0); }
};

struct EditProblem {
  Matrix w0;  // p x n
  ConceptSet concepts;

  void validate() const {
    concepts.validate();
    if (w0.cols() != concepts.dim() || w0.rows() == 0)
      throw InvalidInput("w0: expected p x " + std::to_string(concepts.dim()) + ", got " +
                         std::to_string(w0.rows()) + "x" + std::to_string(w0.cols()));
    require_finite(w0, "w0");
  }
};

struct EditConfig {
  Method method = Method::dp;
  std::optional<Index> truncation_k;  // empty: k = rank(C_pres)
  RankTolerance rank_tolerance;
  bool apply_projection1 = false;
  // A target with ||U_{2,k}^T c|| <= threshold * ||c|| is excluded from the fit.
  double infeasible_threshold = 1e-8;
};

struct InfeasibleTarget {
  Index index = 0;
  double residual_ratio = 0.0;  // ||U_{2,k}^T c|| / ||c||
};

/// Gram matrix G = C_tgt C_tgt^T + C_pres C_pres^T used by UCE.
struct GramReport {
  Index dim = 0;
  Index rank = 0;
  double tolerance = 0.0;
  bool pseudoinverse_fallback = false;
  // Penrose identities of the G^+ actually used, all relative Frobenius.
  double penrose_agA = 0.0;   // ||G G+ G - G|| / ||G||
  double penrose_gag = 0.0;   // ||G+ G G+ - G+|| / ||G+||
  double penrose_sym_ag = 0.0;  // ||G G+ - (G G+)^T|| / ||G G+||
  double penrose_sym_ga = 0.0;
};

struct DiagnosticsReport {
  Method method = Method::dp;
  Index rank_c_pres = 0;
  Index truncation_k = 0;
  double rank_tolerance = 0.0;
  std::vector<InfeasibleTarget> infeasible_targets;
  std::vector<Index> degenerate_anchors;  // proxy collapsed to ~0
  std::optional<GramReport> gram;
  std::vector<double> erasure_residuals;   // ||W c_i - W0 c_i*||
  std::vector<double> preservation_drops;  // ||dW p_j|| / ||W0 p_j||
  double update_frobenius = 0.0;
  double topk_leak = 0.0;  // ||dW U_k||_F / ||dW||_F, dp only
};

struct EditResult {
  Matrix delta_w;
  Matrix w_new;
  Matrix proxies_used;
  DiagnosticsReport diagnostics;
};

/// Projection 1: column i of the result is the orthogonal projection of
/// c_tgt[:, i] onto col(safe_basis).
inline Matrix compute_proxy(const Matrix& c_tgt, const Matrix& safe_basis,
                            const RankTolerance& rank_tolerance = {}) {
  if (safe_basis.cols() == 0 || safe_basis.squaredNorm() == 0.0)
    throw InvalidInput("compute_proxy: safe basis is empty or zero");
  return orthogonal_project(safe_basis, c_tgt, rank_tolerance);
}

/// Top-k split of the preserved column space.
struct PreservedSplit {
  Matrix u_k;    // n x k
  Matrix u_2k;   // n x (n - k), [U_tail, U_out]
  Vector sigma;  // all min(n, m) singular values of C_pres
  Index rank = 0;
  Index k = 0;
  double tolerance = 0.0;

  // sigma_{k+1} in 1-based terms; zero when the spectrum is exhausted.
  double sigma_after_k() const { return k < sigma.size() ? sigma(k) : 0.0; }
};

inline PreservedSplit split_preserved(const Matrix& c_pres, std::optional<Index> k,
                                      const RankTolerance& tol) {
  auto f = detail::full_left_svd(c_pres, tol);
  const Index kk = k.value_or(f.rank);
  if (kk < 0 || kk > f.rank)
    throw InvalidInput("truncation_k = " + std::to_string(kk) +
                       " outside [0, numerical rank of C_pres = " + std::to_string(f.rank) +
                       "]");
  PreservedSplit s;
  s.u_k = f.u.leftCols(kk);
  s.u_2k = f.u.rightCols(f.u.cols() - kk);
  s.sigma = f.sigma;
  s.rank = f.rank;
  s.k = kk;
  s.tolerance = f.tolerance;
  return s;
}

/// Indices of targets with usable component outside span(U_k).
inline std::vector<Index> feasible_targets(const Matrix& c_tgt, const Matrix& u_2k,
                                           double threshold,
                                           std::vector<InfeasibleTarget>* rejected = nullptr) {
  std::vector<Index> keep;
  for (Index i = 0; i < c_tgt.cols(); ++i) {
    const double ratio = (u_2k.transpose() * c_tgt.col(i)).norm() / c_tgt.col(i).norm();
    if (ratio > threshold)
      keep.push_back(i);
    else if (rejected)
      rejected->push_back({i, ratio});
  }
  return keep;
}

inline Matrix select_columns(const Matrix& a, const std::vector<Index>& idx) {
  Matrix out(a.rows(), static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Index>(j)) = a.col(idx[j]);
  return out;
}

/// Precomputes everything that depends only on the concepts, then edits any
/// number of weight matrices with it.
class Editor {
 public:
  Editor(ConceptSet concepts, EditConfig config)
      : concepts_(std::move(concepts)), config_(config) {
    concepts_.validate();
    if (!(config_.infeasible_threshold >= 0.0))
      throw InvalidInput("infeasible_threshold must be non-negative");
    resolve_proxies();
    if (config_.method == Method::dp)
      prepare_dp();
    else
      prepare_uce();
  }

  const ConceptSet& concepts() const { return concepts_; }
  const EditConfig& config() const { return config_; }
  const Matrix& proxies() const { return proxies_; }

  EditResult apply(const Matrix& w0) const {
    if (w0.cols() != concepts_.dim() || w0.rows() == 0)
      throw InvalidInput("w0: expected p x " + std::to_string(concepts_.dim()) + ", got " +
                         std::to_string(w0.rows()) + "x" + std::to_string(w0.cols()));
    require_finite(w0, "w0");

    EditResult r;
    r.proxies_used = proxies_;
    r.diagnostics = base_diag_;
    if (config_.method == Method::dp) {
      // B = W0 (C* - C) over feasible targets; dW = B C_perp^+ U_{2,k}^T.
      const Matrix b = w0 * anchor_gap_feasible_;
      r.delta_w = b * row_map_;
    } else {
      const Matrix resid = w0 * (proxies_ - concepts_.c_tgt);
      r.delta_w = resid * uce_map_;
    }
    r.w_new = w0 + r.delta_w;
    fill_metrics(w0, r);
    return r;
  }

 private:
  void resolve_proxies() {
    const auto& c = concepts_;
    if (c.c_star && !config_.apply_projection1) {
      proxies_ = *c.c_star;
    } else {
      const Matrix& basis = c.safe_basis ? *c.safe_basis : *c.c_star;
      proxies_ = compute_proxy(c.c_tgt, basis, config_.rank_tolerance);
    }
    for (Index i = 0; i < proxies_.cols(); ++i)
      if (proxies_.col(i).norm() <= config_.infeasible_threshold * c.c_tgt.col(i).norm())
        base_diag_.degenerate_anchors.push_back(i);
  }

  void prepare_dp() {
    base_diag_.method = Method::dp;
    const Matrix c_pres = concepts_.preserved();
    split_ = split_preserved(c_pres, config_.truncation_k, config_.rank_tolerance);
    base_diag_.rank_c_pres = split_.rank;
    base_diag_.truncation_k = split_.k;
    base_diag_.rank_tolerance = split_.tolerance;

    feasible_ = feasible_targets(concepts_.c_tgt, split_.u_2k, config_.infeasible_threshold,
                                 &base_diag_.infeasible_targets);
    const Matrix c_f = select_columns(concepts_.c_tgt, feasible_);
    anchor_gap_feasible_ = select_columns(proxies_, feasible_) - c_f;

    // Z* = B C_perp^T (C_perp C_perp^T)^+ = B C_perp^+.
    const Matrix c_perp = split_.u_2k.transpose() * c_f;
    const Matrix c_perp_pinv = pinv(c_perp, config_.rank_tolerance);
    row_map_ = c_perp_pinv * split_.u_2k.transpose();
  }

  void prepare_uce() {
    base_diag_.method = Method::uce;
    const auto& c = concepts_;
    const Index n = c.dim();
    const Index t = c.num_targets();
    const Index m = c.num_preserved();
    if (m > 0) {
      const ThinSvd fp = thin_svd(c.c_pres, config_.rank_tolerance);
      base_diag_.rank_c_pres = fp.numerical_rank();
      base_diag_.truncation_k = fp.numerical_rank();
      base_diag_.rank_tolerance = fp.tolerance;
    }

    // G = C C^T with C = [C_tgt, C_pres]; G's spectrum is sigma(C)^2.
    Matrix stacked(n, t + m);
    stacked << c.c_tgt, c.preserved();
    Eigen::BDCSVD<Matrix> svd(stacked, Eigen::ComputeThinU);
    const Vector g_spec = svd.singularValues().array().square();
    GramReport g;
    g.dim = n;
    g.tolerance = resolve_tolerance(config_.rank_tolerance, g_spec(0), n, n);
    g.rank = detail::count_above(g_spec, g.tolerance);
    g.pseudoinverse_fallback = g.rank < n;

    const Matrix u = svd.matrixU().leftCols(g.rank);
    const Vector inv = g_spec.head(g.rank).cwiseInverse();
    // dW = (V* - W0 C_tgt) C_tgt^T G^+; with G invertible this is exactly
    // W - W0 for the joint least-squares W.
    uce_map_ = (c.c_tgt.transpose() * u) * inv.asDiagonal() * u.transpose();

    if (g.pseudoinverse_fallback) {
      const Matrix gram = stacked * stacked.transpose();
      const Matrix gp = u * inv.asDiagonal() * u.transpose();
      const Matrix ag = gram * gp;
      const Matrix ga = gp * gram;
      g.penrose_agA = (ag * gram - gram).norm() / gram.norm();
      g.penrose_gag = (ga * gp - gp).norm() / std::max(gp.norm(), 1e-300);
      g.penrose_sym_ag = (ag - ag.transpose()).norm() / std::max(ag.norm(), 1e-300);
      g.penrose_sym_ga = (ga - ga.transpose()).norm() / std::max(ga.norm(), 1e-300);
    }
    base_diag_.gram = g;
  }

  void fill_metrics(const Matrix& w0, EditResult& r) const {
    auto& d = r.diagnostics;
    const auto& c = concepts_;
    const Matrix target_gap = r.delta_w * c.c_tgt - w0 * (proxies_ - c.c_tgt);
    d.erasure_residuals.resize(static_cast<std::size_t>(c.num_targets()));
    for (Index i = 0; i < c.num_targets(); ++i)
      d.erasure_residuals[static_cast<std::size_t>(i)] = target_gap.col(i).norm();
    d.preservation_drops.resize(static_cast<std::size_t>(c.num_preserved()));
    if (c.num_preserved() > 0) {
      const Matrix dp = r.delta_w * c.c_pres;
      const Matrix base = w0 * c.c_pres;
      for (Index j = 0; j < c.num_preserved(); ++j) {
        const double den = base.col(j).norm();
        d.preservation_drops[static_cast<std::size_t>(j)] =
            dp.col(j).norm() / (den > 0.0 ? den : 1.0);
      }
    }
    d.update_frobenius = r.delta_w.norm();
    if (config_.method == Method::dp && d.update_frobenius > 0.0 && split_.k > 0)
      d.topk_leak = (r.delta_w * split_.u_k).norm() / d.update_frobenius;
  }

  ConceptSet concepts_;
  EditConfig config_;
  Matrix proxies_;
  DiagnosticsReport base_diag_;
  PreservedSplit split_;
  std::vector<Index> feasible_;
  Matrix anchor_gap_feasible_;
  Matrix row_map_;  // dp: C_perp^+ U_{2,k}^T
  Matrix uce_map_;  // uce: C_tgt^T G^+
};

inline EditResult uce_edit(const EditProblem& problem, EditConfig config = {}) {
  problem.validate();
  config.method = Method::uce;
  return Editor(problem.concepts, config).apply(problem.w0);
}

inline EditResult dp_edit(const EditProblem& problem, EditConfig config = {}) {
  problem.validate();
  config.method = Method::dp;
  return Editor(problem.concepts, config).apply(problem.w0);
}

inline EditResult edit(const EditProblem& problem, const EditConfig& config) {
  problem.validate();
  return Editor(problem.concepts, config).apply(problem.w0);
}

/// Edits several weight matrices (e.g. one per layer) against the same
/// concepts. Each matrix is processed independently, so the output does not
/// depend on `jobs`.
inline std::vector<EditResult> edit_layers(std::span<const Matrix> weights,
                                           const ConceptSet& concepts,
                                           const EditConfig& config, unsigned jobs = 1) {
  const Editor editor(concepts, config);
  std::vector<EditResult> out(weights.size());
  if (jobs <= 1 || weights.size() <= 1) {
    for (std::size_t i = 0; i < weights.size(); ++i) out[i] = editor.apply(weights[i]);
    return out;
  }
  std::vector<std::future<void>> pending;
  const std::size_t stride = std::min<std::size_t>(jobs, weights.size());
  for (std::size_t w = 0; w < stride; ++w)
    pending.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < weights.size(); i += stride) out[i] = editor.apply(weights[i]);
    }));
  for (auto& f : pending) f.get();
  return out;
}

inline double minimum_update_norm(const EditResult& result) { return result.delta_w.norm(); }

}  // namespace nulledit
