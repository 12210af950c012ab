#pragma once

// Subcommand implementations behind the `nulledit` executable. Each returns
// the process exit status and writes its artifacts atomically.

#include "nulledit/bench.hpp"
#include "nulledit/erasure.hpp"
#include "nulledit/io.hpp"
#include "nulledit/report.hpp"
#include "nulledit/theory.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace nulledit::cli {

namespace fs = std::filesystem;
using report::json;

enum ExitCode : int { kOk = 0, kHardError = 1, kPartial = 2, kVerifyFailed = 3 };

inline constexpr const char* kRankTolEnv = "NULLEDIT_RANK_TOL";

inline int fail(std::ostream& err, const std::string& kind, const std::string& message) {
  json e;
  e["schema"] = report::kSchema;
  e["error"] = {{"kind", kind}, {"message", message}};
  err << e.dump() << '\n';
  return kHardError;
}

inline void write_json(const fs::path& path, const json& j) {
  io::write_atomic(path, j.dump(2) + "\n");
}

/// Rank tolerance from the environment, if set.
inline RankTolerance env_rank_tolerance() {
  const char* v = std::getenv(kRankTolEnv);
  if (!v || !*v) return {};
  char* end = nullptr;
  const double tol = std::strtod(v, &end);
  if (end == v || *end != '\0' || !(tol > 0.0))
    throw InvalidInput(std::string(kRankTolEnv) + " must be a positive number, got '" + v + "'");
  return tol;
}

// ---------------------------------------------------------------- manifest

struct Manifest {
  std::vector<fs::path> w0;
  fs::path c_tgt;
  std::optional<fs::path> c_pres;
  std::optional<fs::path> c_star;
  std::optional<fs::path> safe_basis;
  EditConfig config;
};

inline Manifest load_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw io::IoError("manifest not found: " + path.string());
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw InvalidInput("manifest " + path.string() + ": " + e.what());
  }
  const fs::path dir = path.parent_path();
  const auto resolve = [&](const json& v) {
    if (!v.is_string()) throw InvalidInput("manifest paths must be strings");
    const fs::path p = v.get<std::string>();
    return p.is_absolute() ? p : dir / p;
  };
  const auto opt_path = [&](const char* key) -> std::optional<fs::path> {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return resolve(j.at(key));
  };

  Manifest m;
  if (!j.contains("w0")) throw InvalidInput("manifest: missing 'w0'");
  if (j.at("w0").is_array())
    for (const auto& v : j.at("w0")) m.w0.push_back(resolve(v));
  else
    m.w0.push_back(resolve(j.at("w0")));
  if (m.w0.empty()) throw InvalidInput("manifest: 'w0' lists no matrices");
  if (!j.contains("c_tgt")) throw InvalidInput("manifest: missing 'c_tgt'");
  m.c_tgt = resolve(j.at("c_tgt"));
  m.c_pres = opt_path("c_pres");
  m.c_star = opt_path("c_star");
  m.safe_basis = opt_path("safe_basis");
  if (j.contains("config")) m.config = report::config_from_json(j.at("config"));
  return m;
}

struct LoadedManifest {
  std::vector<Matrix> weights;
  ConceptSet concepts;
};

/// Loads every referenced matrix and cross-checks dimensions.
inline LoadedManifest load_matrices(const Manifest& m) {
  LoadedManifest out;
  out.concepts.c_tgt = io::load_matrix(m.c_tgt);
  const Index n = out.concepts.c_tgt.rows();
  out.concepts.c_pres = m.c_pres ? io::load_matrix(*m.c_pres) : Matrix(n, 0);
  if (m.c_star) out.concepts.c_star = io::load_matrix(*m.c_star);
  if (m.safe_basis) out.concepts.safe_basis = io::load_matrix(*m.safe_basis);
  out.concepts.validate();
  for (const auto& p : m.w0) {
    out.weights.push_back(io::load_matrix(p));
    if (out.weights.back().cols() != n)
      throw InvalidInput(p.string() + ": expected " + std::to_string(n) + " columns, got " +
                         std::to_string(out.weights.back().cols()));
  }
  return out;
}

// ------------------------------------------------------------ certificates

inline json certificates_for(const EditProblem& problem, const EditResult& result,
                             const EditConfig& config, bool& pass,
                             const TheoryTolerances& tol = {}) {
  json c;
  const auto& cs = problem.concepts;
  if (config.method == Method::dp) {
    const Index k = result.diagnostics.truncation_k;
    const auto trunc = certify_truncation_bounds(problem, result, k, config, tol);
    c["truncation"] = report::to_json(trunc, tol);
    pass = pass && trunc.passed(tol);
    if (k == result.diagnostics.rank_c_pres) {
      const auto pres = certify_preservation(result, cs.preserved());
      c["preservation"] = report::to_json(pres, tol);
      pass = pass && pres.passed(tol);
    }
    return c;
  }
  const auto stat = certify_uce_stationarity(problem, result);
  c["stationarity"] = report::to_json(stat, tol);
  pass = pass && stat.passed(tol);
  if (cs.num_targets() == 1) {
    try {
      const auto pert = certify_perturbation(problem.w0, cs.c_tgt.col(0),
                                                  result.proxies_used.col(0), cs.preserved(),
                                                  result.delta_w, tol, config.rank_tolerance);
      c["perturbation"] = report::to_json(pert, tol);
      pass = pass && pert.passed(tol);
    } catch (const SingularMatrix& e) {
      c["perturbation_skipped"] = e.what();
    }
  } else {
    c["perturbation_skipped"] = "multiple targets";
  }
  return c;
}

inline std::string layer_file(const char* stem, std::size_t i) {
  return std::string(stem) + "_" + std::to_string(i) + ".npy";
}

// -------------------------------------------------------------------- edit

struct EditOptions {
  fs::path manifest;
  fs::path out_dir;
  std::optional<std::string> method;
  std::optional<Index> truncation_k;
  std::optional<double> rank_tolerance;
  bool apply_projection1 = false;
  unsigned jobs = 1;
};

inline int cmd_edit(const EditOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    Manifest man = load_manifest(opt.manifest);
    EditConfig& cfg = man.config;
    if (opt.method) cfg.method = parse_method(*opt.method);
    if (opt.truncation_k) cfg.truncation_k = *opt.truncation_k;
    if (opt.rank_tolerance)
      cfg.rank_tolerance = *opt.rank_tolerance;
    else if (!cfg.rank_tolerance)
      cfg.rank_tolerance = env_rank_tolerance();
    if (opt.apply_projection1) cfg.apply_projection1 = true;

    const LoadedManifest data = load_matrices(man);
    const auto results = edit_layers(data.weights, data.concepts, cfg, opt.jobs);

    fs::create_directories(opt.out_dir);
    io::save_matrix(opt.out_dir / "c_tgt.npy", data.concepts.c_tgt);
    io::save_matrix(opt.out_dir / "c_pres.npy", data.concepts.preserved());
    io::save_matrix(opt.out_dir / "proxies.npy", results.front().proxies_used);

    bool pass = true;
    json layers = json::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      io::save_matrix(opt.out_dir / layer_file("w0", i), data.weights[i]);
      io::save_matrix(opt.out_dir / layer_file("delta_w", i), r.delta_w);
      io::save_matrix(opt.out_dir / layer_file("w_new", i), r.w_new);
      const EditProblem problem{data.weights[i], data.concepts};
      json lj;
      lj["index"] = i;
      lj["source"] = man.w0[i].filename().string();
      lj["w0"] = layer_file("w0", i);
      lj["delta_w"] = layer_file("delta_w", i);
      lj["w_new"] = layer_file("w_new", i);
      lj["p"] = data.weights[i].rows();
      lj["diagnostics"] = report::to_json(r.diagnostics);
      lj["certificates"] = certificates_for(problem, r, cfg, pass);
      layers.push_back(lj);
    }

    const auto& diag = results.front().diagnostics;
    const int status = diag.infeasible_targets.empty() ? kOk : kPartial;
    json doc;
    doc["schema"] = report::kSchema;
    doc["kind"] = "edit";
    doc["config"] = report::to_json(cfg);
    doc["dims"] = {{"n", data.concepts.dim()},
                   {"T", data.concepts.num_targets()},
                   {"m", data.concepts.num_preserved()},
                   {"layers", results.size()}};
    doc["matrices"] = {{"c_tgt", "c_tgt.npy"}, {"c_pres", "c_pres.npy"}, {"proxies", "proxies.npy"}};
    doc["infeasible_targets"] = report::to_json(diag)["infeasible_targets"];
    doc["layers"] = layers;
    doc["certificates_pass"] = pass;
    doc["exit_status"] = status;
    write_json(opt.out_dir / "diagnostics.json", doc);

    out << "edited " << results.size() << " matrix(es) with " << to_string(cfg.method)
        << "; certificates " << (pass ? "pass" : "FAIL") << '\n';
    for (const auto& t : diag.infeasible_targets)
      out << "skipped target " << t.index << " (inside preserved span, ratio "
          << t.residual_ratio << ")\n";
    return status;
  } catch (const io::IoError& e) {
    return fail(err, "io", e.what());
  } catch (const InvalidInput& e) {
    return fail(err, "invalid_input", e.what());
  } catch (const json::exception& e) {
    return fail(err, "invalid_input", e.what());
  } catch (const std::exception& e) {
    return fail(err, "internal", e.what());
  }
}

// ------------------------------------------------------------------ verify

inline int cmd_verify(const fs::path& dir, std::ostream& out, std::ostream& err) {
  try {
    const fs::path diag_path = dir / "diagnostics.json";
    if (!fs::exists(diag_path)) throw io::IoError("missing " + diag_path.string());
    const json doc = json::parse(io::read_file(diag_path));
    const EditConfig cfg = report::config_from_json(doc.at("config"));

    ConceptSet cs;
    cs.c_tgt = io::load_matrix(dir / "c_tgt.npy");
    cs.c_pres = io::load_matrix(dir / "c_pres.npy");
    cs.c_star = io::load_matrix(dir / "proxies.npy");
    cs.validate();

    bool pass = true;
    json layers = json::array();
    for (const auto& lj : doc.at("layers")) {
      const Matrix w0 = io::load_matrix(dir / lj.at("w0").get<std::string>());
      const Matrix dw = io::load_matrix(dir / lj.at("delta_w").get<std::string>());
      const Matrix wn = io::load_matrix(dir / lj.at("w_new").get<std::string>());
      if (dw.rows() != w0.rows() || dw.cols() != w0.cols() || wn.rows() != w0.rows() ||
          wn.cols() != w0.cols())
        throw InvalidInput("layer " + lj.at("index").dump() + ": matrix shapes disagree");

      EditResult r;
      r.delta_w = dw;
      r.w_new = wn;
      r.proxies_used = *cs.c_star;
      const EditProblem problem{w0, cs};
      // The stored k is authoritative; the rank is recomputed below.
      r.diagnostics.truncation_k = lj.at("diagnostics").at("truncation_k").get<Index>();
      r.diagnostics.rank_c_pres =
          split_preserved(cs.preserved(), std::nullopt, cfg.rank_tolerance).rank;

      json vj;
      vj["index"] = lj.at("index");
      const bool consistent = (w0 + dw).cwiseEqual(wn).all();
      vj["w_new_equals_w0_plus_delta"] = consistent;
      bool layer_pass = consistent;
      vj["certificates"] = certificates_for(problem, r, cfg, layer_pass);
      vj["passed"] = layer_pass;
      pass = pass && layer_pass;
      layers.push_back(vj);
    }

    json summary;
    summary["schema"] = report::kSchema;
    summary["kind"] = "verify";
    summary["layers"] = layers;
    summary["passed"] = pass;
    out << summary.dump(2) << '\n';
    return pass ? kOk : kVerifyFailed;
  } catch (const io::IoError& e) {
    return fail(err, "io", e.what());
  } catch (const InvalidInput& e) {
    return fail(err, "invalid_input", e.what());
  } catch (const json::exception& e) {
    return fail(err, "invalid_input", e.what());
  } catch (const std::exception& e) {
    return fail(err, "internal", e.what());
  }
}

// --------------------------------------------------------------------- gen

struct GenOptions {
  SyntheticSpec spec;
  Index layers = 1;
  fs::path out_dir;
};

inline int cmd_gen(const GenOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    if (opt.layers < 1) throw InvalidInput("--layers must be at least 1");
    const EditProblem prob = generate_problem(opt.spec);
    fs::create_directories(opt.out_dir);

    json w0_files = json::array();
    for (Index l = 0; l < opt.layers; ++l) {
      Matrix w = prob.w0;
      if (l > 0) {
        // Extra layers draw from independent seeded streams.
        Rng rng(opt.spec.rng_seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(l)));
        w = rng.gaussian_matrix(opt.spec.p, opt.spec.n) /
            std::sqrt(static_cast<double>(opt.spec.n));
      }
      const std::string name = opt.layers == 1 ? "w0.npy" : layer_file("w0", static_cast<std::size_t>(l));
      io::save_matrix(opt.out_dir / name, w);
      w0_files.push_back(name);
    }
    io::save_matrix(opt.out_dir / "c_tgt.npy", prob.concepts.c_tgt);
    io::save_matrix(opt.out_dir / "c_pres.npy", prob.concepts.c_pres);
    io::save_matrix(opt.out_dir / "safe_basis.npy", *prob.concepts.safe_basis);

    json man;
    man["schema"] = report::kSchema;
    man["kind"] = "manifest";
    man["w0"] = w0_files;
    man["c_tgt"] = "c_tgt.npy";
    man["c_pres"] = "c_pres.npy";
    man["safe_basis"] = "safe_basis.npy";
    man["config"] = report::to_json(EditConfig{});
    man["generator"] = report::to_json(opt.spec);
    write_json(opt.out_dir / "manifest.json", man);
    out << "wrote " << (opt.out_dir / "manifest.json").string() << '\n';
    return kOk;
  } catch (const std::exception& e) {
    return fail(err, "invalid_input", e.what());
  }
}

// ------------------------------------------------------------------- bench

struct BenchCliOptions {
  SyntheticSpec spec;
  std::optional<fs::path> spec_path;
  std::optional<std::string> sweep_axis;
  std::vector<double> sweep_values;
  std::optional<Index> truncation_k;
  std::vector<std::string> methods{"dp", "uce"};
  int repeats = 5;
  unsigned jobs = 1;
  fs::path out_dir = ".";
};

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

/// Flat projection of the bench report: one row per sweep point, one column
/// group per method. Columns ending in _wall_* hold timings.
inline std::string bench_csv(const std::string& axis, const std::vector<SweepPoint>& points,
                             const std::vector<MethodRun>& runs) {
  std::ostringstream os;
  os << "axis,value,status";
  for (const auto& r : runs)
    for (const char* col : {"erasure_max", "erasure_mean", "preservation_max",
                            "preservation_mean", "update_frobenius", "infeasible",
                            "certificates", "wall_median", "wall_min", "wall_max"})
      os << ',' << r.label << '_' << col;
  os << '\n';
  for (const auto& p : points) {
    os << axis << ',' << detail::fmt(p.value) << ',' << (p.report ? "ok" : "error");
    for (std::size_t i = 0; i < runs.size(); ++i) {
      if (!p.report) {
        os << ",,,,,,,,,,";
        continue;
      }
      const auto& m = p.report->methods[i];
      os << ',' << detail::fmt(nulledit::detail::max_of(m.erasure_residuals)) << ','
         << detail::fmt(detail::mean_of(m.erasure_residuals)) << ','
         << detail::fmt(nulledit::detail::max_of(m.preservation_drops)) << ','
         << detail::fmt(detail::mean_of(m.preservation_drops)) << ','
         << detail::fmt(m.update_frobenius) << ',' << m.diagnostics.infeasible_targets.size()
         << ',' << (m.certificates_pass ? "pass" : "fail") << ','
         << detail::fmt(m.wall_time.median) << ',' << detail::fmt(m.wall_time.min) << ','
         << detail::fmt(m.wall_time.max);
    }
    os << '\n';
  }
  return os.str();
}

/// Two-block summary: erasure residuals on the left, preservation drops on
/// the right, one column per method in each block.
inline std::string bench_table(const std::string& axis, const std::vector<SweepPoint>& points,
                               const std::vector<MethodRun>& runs) {
  std::ostringstream os;
  const int w = 12;
  const int block = w * static_cast<int>(runs.size());
  os << std::left << std::setw(14) << "" << "| " << std::setw(block) << "Erasure residual (max)"
     << "| " << std::setw(block) << "Preservation drop (max)" << "| median time [s]\n";
  os << std::setw(14) << axis << "| ";
  for (int b = 0; b < 2; ++b) {
    for (const auto& r : runs) os << std::setw(w) << r.label;
    os << "| ";
  }
  os << '\n' << std::string(14 + 2 * (block + 2) + 16, '-') << '\n';
  char buf[32];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%g", p.value);
    os << std::setw(14) << buf << "| ";
    if (!p.report) {
      os << "error: " << p.error << '\n';
      continue;
    }
    for (const auto& m : p.report->methods) {
      std::snprintf(buf, sizeof buf, "%.3e", nulledit::detail::max_of(m.erasure_residuals));
      os << std::setw(w) << buf;
    }
    os << "| ";
    for (const auto& m : p.report->methods) {
      std::snprintf(buf, sizeof buf, "%.3e", nulledit::detail::max_of(m.preservation_drops));
      os << std::setw(w) << buf;
    }
    os << "| ";
    for (std::size_t i = 0; i < p.report->methods.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.2e", p.report->methods[i].wall_time.median);
      os << (i ? "/" : "") << buf;
    }
    os << '\n';
  }
  return os.str();
}

inline int cmd_bench(const BenchCliOptions& opt, std::ostream& out, std::ostream& err) {
  try {
    SyntheticSpec spec = opt.spec;
    if (opt.spec_path) {
      if (!fs::exists(*opt.spec_path)) throw io::IoError("missing spec " + opt.spec_path->string());
      spec = report::spec_from_json(json::parse(io::read_file(*opt.spec_path)), spec);
    }
    validate(spec);

    std::vector<MethodRun> runs;
    const RankTolerance env_tol = env_rank_tolerance();
    for (const auto& name : opt.methods) {
      EditConfig cfg;
      cfg.method = parse_method(name);
      cfg.rank_tolerance = env_tol;
      if (cfg.method == Method::dp) cfg.truncation_k = opt.truncation_k;
      runs.push_back({name, cfg});
    }
    if (runs.empty()) throw InvalidInput("no methods selected");

    BenchOptions bo;
    bo.repeats = opt.repeats;
    std::string axis_name = "none";
    std::vector<SweepPoint> points;
    fs::create_directories(opt.out_dir);
    try {
      if (opt.sweep_axis) {
        const SweepAxis axis = parse_axis(*opt.sweep_axis);
        axis_name = to_string(axis);
        if (opt.sweep_values.empty()) throw InvalidInput("--sweep needs at least one value");
        points = sweep(spec, runs, axis, opt.sweep_values, bo, opt.jobs);
      } else {
        SweepPoint pt;
        pt.spec = spec;
        try {
          pt.report = compare_methods(generate_problem(spec), runs, bo);
        } catch (const CertificateFailure& e) {
          throw CertificateFailure(e.what(), spec);
        }
        points.push_back(std::move(pt));
      }
    } catch (const CertificateFailure& e) {
      json replay;
      replay["schema"] = report::kSchema;
      replay["kind"] = "replay";
      replay["message"] = e.what();
      replay["spec"] = e.spec ? report::to_json(*e.spec) : json(nullptr);
      write_json(opt.out_dir / "replay.json", replay);
      fail(err, "certificate_failure", std::string(e.what()) + " (instance written to replay.json)");
      return kVerifyFailed;
    }

    write_json(opt.out_dir / "report.json", report::bench_to_json(spec, axis_name, points));
    io::write_atomic(opt.out_dir / "report.csv", bench_csv(axis_name, points, runs));
    out << bench_table(axis_name, points, runs);
    return kOk;
  } catch (const io::IoError& e) {
    return fail(err, "io", e.what());
  } catch (const InvalidInput& e) {
    return fail(err, "invalid_input", e.what());
  } catch (const json::exception& e) {
    return fail(err, "invalid_input", e.what());
  } catch (const std::exception& e) {
    return fail(err, "internal", e.what());
  }
}

}  // namespace nulledit::cli
