#pragma once

// Synthetic edit problems with controlled geometry, and DP-vs-UCE comparison
// runs over them.
//
// The metrics are norm-based stand-ins for classifier accuracies:
//   erasure residual   ||W c_i - W0 c_i*||          (lower: stronger erasure)
//   preservation drop  ||(W - W0) p_j|| / ||W0 p_j|| (lower: better preservation)

#include "nulledit/erasure.hpp"
#include "nulledit/rng.hpp"
#include "nulledit/theory.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <future>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nulledit {

enum class SpectrumKind { flat, geometric };

struct SyntheticSpec {
  Index n = 32;
  Index p = 16;
  // T + m > n by default: with fewer concepts than dimensions the joint
  // least-squares fit is exact and UCE does not drift.
  Index num_targets = 4;
  Index num_preserved = 30;
  double target_preserve_cosine = 0.5;
  Index safe_dim = 1;
  SpectrumKind spectrum = SpectrumKind::flat;
  double decay_ratio = 0.5;  // sigma_j = ratio^j for the geometric profile
  std::uint64_t rng_seed = 0;
  // Leading targets placed exactly inside col(C_pres); infeasible for DP.
  Index degenerate_targets = 0;
};

inline void validate(const SyntheticSpec& s) {
  if (s.n < 1 || s.p < 1) throw InvalidInput("synthetic spec: n and p must be positive");
  if (s.num_targets < 1) throw InvalidInput("synthetic spec: at least one target required");
  if (s.num_preserved < 0) throw InvalidInput("synthetic spec: negative preserved count");
  if (s.safe_dim < 1) throw InvalidInput("synthetic spec: safe_dim must be positive");
  if (!(s.target_preserve_cosine >= 0.0 && s.target_preserve_cosine < 1.0))
    throw InvalidInput("synthetic spec: cosine must lie in [0, 1)");
  if (s.spectrum == SpectrumKind::geometric && !(s.decay_ratio > 0.0 && s.decay_ratio <= 1.0))
    throw InvalidInput("synthetic spec: decay ratio must lie in (0, 1]");
  if (s.degenerate_targets < 0 || s.degenerate_targets > s.num_targets)
    throw InvalidInput("synthetic spec: degenerate_targets outside [0, num_targets]");
  if (s.num_preserved >= s.n)
    throw InvalidInput("synthetic spec: cosine < 1 is unreachable when the preserved set "
                       "spans R^n (need num_preserved < n)");
  if (s.num_preserved == 0 && (s.target_preserve_cosine > 0.0 || s.degenerate_targets > 0))
    throw InvalidInput("synthetic spec: nonzero cosine is unreachable without preserved "
                       "concepts");
}

/// Draw order from the seeded stream: W0 (p x n, scaled by 1/sqrt(n)); an
/// n x m Gaussian whose Householder Q splits R^n into col(C_pres) and its
/// complement; an m x m Gaussian for the right singular vectors; per target
/// one in-span and one out-of-span Gaussian direction; the n x k_s safe basis.
inline EditProblem generate_problem(const SyntheticSpec& spec) {
  validate(spec);
  Rng rng(spec.rng_seed);
  const Index n = spec.n, m = spec.num_preserved;

  EditProblem prob;
  prob.w0 = rng.gaussian_matrix(spec.p, n) / std::sqrt(static_cast<double>(n));

  Matrix frame = Matrix::Identity(n, n);
  if (m > 0) frame = Eigen::HouseholderQR<Matrix>(rng.gaussian_matrix(n, m)).householderQ();
  const Matrix in_span = frame.leftCols(m);
  const Matrix out_span = frame.rightCols(n - m);

  Vector sigma(m);
  for (Index j = 0; j < m; ++j)
    sigma(j) = spec.spectrum == SpectrumKind::flat ? 1.0 : std::pow(spec.decay_ratio, j);
  if (m > 0) {
    const Matrix right = rng.orthonormal_columns(m, m);
    prob.concepts.c_pres = in_span * sigma.asDiagonal() * right.transpose();
  } else {
    prob.concepts.c_pres = Matrix(n, 0);
  }

  const double cs = spec.target_preserve_cosine;
  const double sn = std::sqrt(1.0 - cs * cs);
  prob.concepts.c_tgt.resize(n, spec.num_targets);
  for (Index i = 0; i < spec.num_targets; ++i) {
    Vector inside = Vector::Zero(n);
    if (m > 0) {
      const Vector g = rng.gaussian_matrix(m, 1);
      inside = in_span * (g / g.norm());
    }
    const Vector h = rng.gaussian_matrix(n - m, 1);
    const Vector outside = out_span * (h / h.norm());
    prob.concepts.c_tgt.col(i) = i < spec.degenerate_targets ? inside : Vector(cs * inside + sn * outside);
  }
  prob.concepts.safe_basis = rng.gaussian_matrix(n, spec.safe_dim);
  return prob;
}

struct MethodRun {
  std::string label;
  EditConfig config;
};

inline std::vector<MethodRun> default_runs() {
  EditConfig dp, uce;
  uce.method = Method::uce;
  return {{"dp", dp}, {"uce", uce}};
}

struct WallTime {
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct MethodReport {
  std::string label;
  EditConfig config;
  std::vector<double> erasure_residuals;
  std::vector<double> preservation_drops;
  double update_frobenius = 0.0;
  WallTime wall_time;
  DiagnosticsReport diagnostics;

  std::optional<PreservationCertificate> preservation;  // dp, untruncated
  std::optional<TruncationCertificate> truncation;      // dp
  std::optional<PerturbationCertificate> perturbation;  // uce, single target
  std::optional<StationarityCertificate> stationarity;  // uce
  std::string perturbation_skipped;                     // reason when absent
  bool certificates_pass = true;
};

struct ComparisonReport {
  std::vector<MethodReport> methods;
};

struct BenchOptions {
  int repeats = 5;
  TheoryTolerances tolerances;
};

/// A DP certificate failed. `spec` is filled when the instance came from the
/// synthetic generator, so the failure can be replayed.
class CertificateFailure : public std::runtime_error {
 public:
  CertificateFailure(const std::string& what, std::optional<SyntheticSpec> spec = {})
      : std::runtime_error(what), spec(std::move(spec)) {}
  std::optional<SyntheticSpec> spec;
};

namespace detail {

inline double max_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

inline MethodReport run_method(const EditProblem& problem, const MethodRun& run,
                               const BenchOptions& opt) {
  using clock = std::chrono::steady_clock;
  MethodReport rep;
  rep.label = run.label;
  rep.config = run.config;

  std::vector<double> times;
  EditResult result;
  const int reps = std::max(1, opt.repeats);
  for (int i = 0; i < reps; ++i) {
    const auto t0 = clock::now();
    result = edit(problem, run.config);
    const auto t1 = clock::now();
    times.push_back(std::max(std::chrono::duration<double>(t1 - t0).count(), 1e-9));
  }
  std::sort(times.begin(), times.end());
  const std::size_t mid = times.size() / 2;
  rep.wall_time = {times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]),
                   times.front(), times.back()};

  rep.diagnostics = result.diagnostics;
  rep.erasure_residuals = result.diagnostics.erasure_residuals;
  rep.preservation_drops = result.diagnostics.preservation_drops;
  rep.update_frobenius = result.diagnostics.update_frobenius;

  const auto& cs = problem.concepts;
  const auto& tol = opt.tolerances;
  if (run.config.method == Method::dp) {
    const Index k = result.diagnostics.truncation_k;
    rep.truncation = certify_truncation_bounds(problem, result, k, run.config, tol);
    rep.certificates_pass = rep.truncation->passed(tol);
    if (k == result.diagnostics.rank_c_pres) {
      rep.preservation = certify_preservation(result, cs.preserved());
      rep.certificates_pass = rep.certificates_pass && rep.preservation->passed(tol);
    }
    return rep;
  }
  rep.stationarity = certify_uce_stationarity(problem, result);
  rep.certificates_pass = rep.stationarity->passed(tol);
  if (cs.num_targets() == 1) {
    try {
      rep.perturbation = certify_perturbation(problem.w0, cs.c_tgt.col(0),
                                                   result.proxies_used.col(0), cs.preserved(),
                                                   result.delta_w, tol, run.config.rank_tolerance);
      rep.certificates_pass = rep.certificates_pass && rep.perturbation->passed(tol);
    } catch (const SingularMatrix& e) {
      rep.perturbation_skipped = e.what();
    }
  } else {
    rep.perturbation_skipped = "multiple targets";
  }
  return rep;
}

}  // namespace detail

/// Runs every configured method on `problem`. Throws CertificateFailure when
/// a DP run violates one of its guarantees.
inline ComparisonReport compare_methods(const EditProblem& problem,
                                        const std::vector<MethodRun>& runs,
                                        const BenchOptions& opt = {}) {
  problem.validate();
  ComparisonReport report;
  for (const auto& run : runs) {
    report.methods.push_back(detail::run_method(problem, run, opt));
    const auto& m = report.methods.back();
    if (run.config.method == Method::dp && !m.certificates_pass)
      throw CertificateFailure("certificate failed for method '" + run.label + "'");
  }
  return report;
}

enum class SweepAxis { cosine, truncation_k, safe_dim, m, T };

inline const char* to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::cosine: return "cosine";
    case SweepAxis::truncation_k: return "truncation_k";
    case SweepAxis::safe_dim: return "safe_dim";
    case SweepAxis::m: return "m";
    case SweepAxis::T: return "T";
  }
  return "?";
}

inline SweepAxis parse_axis(const std::string& s) {
  if (s == "cosine") return SweepAxis::cosine;
  if (s == "truncation_k" || s == "k") return SweepAxis::truncation_k;
  if (s == "safe_dim") return SweepAxis::safe_dim;
  if (s == "m" || s == "preserved") return SweepAxis::m;
  if (s == "T" || s == "targets") return SweepAxis::T;
  throw InvalidInput("unknown sweep axis '" + s + "'");
}

struct SweepPoint {
  double value = 0.0;
  SyntheticSpec spec;
  std::optional<ComparisonReport> report;
  std::string error;  // set when the point could not be run
};

inline SweepPoint run_sweep_point(const SyntheticSpec& base, const std::vector<MethodRun>& runs,
                                  SweepAxis axis, double value, const BenchOptions& opt) {
  SweepPoint pt;
  pt.value = value;
  pt.spec = base;
  std::vector<MethodRun> point_runs = runs;
  const auto as_count = [&] {
    if (value < 0.0 || value != std::floor(value))
      throw InvalidInput(std::string("sweep value for ") + to_string(axis) +
                         " must be a non-negative integer");
    return static_cast<Index>(value);
  };
  try {
    switch (axis) {
      case SweepAxis::cosine: pt.spec.target_preserve_cosine = value; break;
      case SweepAxis::safe_dim: pt.spec.safe_dim = as_count(); break;
      case SweepAxis::m: pt.spec.num_preserved = as_count(); break;
      case SweepAxis::T: pt.spec.num_targets = as_count(); break;
      case SweepAxis::truncation_k:
        for (auto& r : point_runs)
          if (r.config.method == Method::dp) r.config.truncation_k = as_count();
        break;
    }
    pt.report = compare_methods(generate_problem(pt.spec), point_runs, opt);
  } catch (const CertificateFailure& e) {
    throw CertificateFailure(e.what(), pt.spec);
  } catch (const std::exception& e) {
    pt.error = e.what();
  }
  return pt;
}

/// One comparison per value, in input order. Invalid points are recorded and
/// skipped; certificate failures abort the sweep.
inline std::vector<SweepPoint> sweep(const SyntheticSpec& base, const std::vector<MethodRun>& runs,
                                     SweepAxis axis, const std::vector<double>& values,
                                     const BenchOptions& opt = {}, unsigned jobs = 1) {
  std::vector<SweepPoint> out;
  if (jobs <= 1) {
    for (double v : values) out.push_back(run_sweep_point(base, runs, axis, v, opt));
    return out;
  }
  out.resize(values.size());
  std::vector<std::future<void>> workers;
  const std::size_t stride = std::min<std::size_t>(jobs, values.size());
  for (std::size_t w = 0; w < stride; ++w)
    workers.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < values.size(); i += stride)
        out[i] = run_sweep_point(base, runs, axis, values[i], opt);
    }));
  for (auto& f : workers) f.get();
  return out;
}

}  // namespace nulledit
