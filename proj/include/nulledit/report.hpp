#pragma once

// JSON encodings of configs, diagnostics, certificates and bench reports.
// Every document carries "schema": "nulledit/1".

#include "nulledit/bench.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace nulledit::report {

using json = nlohmann::ordered_json;

inline constexpr const char* kSchema = "nulledit/1";

inline json vec(const std::vector<double>& v) { return json(v); }

inline json vec(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline json indices(const std::vector<Index>& v) {
  json out = json::array();
  for (Index i : v) out.push_back(i);
  return out;
}

inline json to_json(const EditConfig& c) {
  json j;
  j["method"] = to_string(c.method);
  j["truncation_k"] = c.truncation_k ? json(*c.truncation_k) : json(nullptr);
  j["rank_tolerance"] = c.rank_tolerance ? json(*c.rank_tolerance) : json(nullptr);
  j["apply_projection1"] = c.apply_projection1;
  j["infeasible_threshold"] = c.infeasible_threshold;
  return j;
}

/// Missing keys keep the defaults of `base`.
inline EditConfig config_from_json(const json& j, EditConfig base = {}) {
  if (!j.is_object()) throw InvalidInput("config must be a JSON object");
  if (j.contains("method")) base.method = parse_method(j.at("method").get<std::string>());
  if (j.contains("truncation_k")) {
    const auto& v = j.at("truncation_k");
    if (v.is_null())
      base.truncation_k.reset();
    else if (v.is_number_integer() && v.get<long long>() >= 0)
      base.truncation_k = v.get<Index>();
    else
      throw InvalidInput("config.truncation_k must be a non-negative integer or null");
  }
  if (j.contains("rank_tolerance")) {
    const auto& v = j.at("rank_tolerance");
    if (v.is_null())
      base.rank_tolerance.reset();
    else
      base.rank_tolerance = v.get<double>();
  }
  if (j.contains("apply_projection1")) base.apply_projection1 = j.at("apply_projection1").get<bool>();
  if (j.contains("infeasible_threshold"))
    base.infeasible_threshold = j.at("infeasible_threshold").get<double>();
  return base;
}

inline json to_json(const GramReport& g) {
  return {{"dim", g.dim},
          {"rank", g.rank},
          {"tolerance", g.tolerance},
          {"pseudoinverse_fallback", g.pseudoinverse_fallback},
          {"penrose",
           {{"gram_pinv_gram", g.penrose_agA},
            {"pinv_gram_pinv", g.penrose_gag},
            {"gram_pinv_symmetry", g.penrose_sym_ag},
            {"pinv_gram_symmetry", g.penrose_sym_ga}}}};
}

inline json to_json(const DiagnosticsReport& d) {
  json j;
  j["method"] = to_string(d.method);
  j["rank_c_pres"] = d.rank_c_pres;
  j["truncation_k"] = d.truncation_k;
  j["rank_tolerance"] = d.rank_tolerance;
  json skipped = json::array();
  for (const auto& t : d.infeasible_targets)
    skipped.push_back({{"index", t.index},
                       {"residual_ratio", t.residual_ratio},
                       {"reason", "target lies inside the protected preserved subspace"}});
  j["infeasible_targets"] = skipped;
  j["degenerate_anchors"] = indices(d.degenerate_anchors);
  j["gram"] = d.gram ? to_json(*d.gram) : json(nullptr);
  j["erasure_residuals"] = vec(d.erasure_residuals);
  j["preservation_drops"] = vec(d.preservation_drops);
  j["update_frobenius"] = d.update_frobenius;
  j["topk_leak"] = d.topk_leak;
  return j;
}

inline json to_json(const PerturbationCertificate& c, const TheoryTolerances& tol = {}) {
  json bounds = json::array();
  for (bool b : c.bound_satisfied) bounds.push_back(b);
  return {{"n_matrix_spectrum", vec(c.n_matrix_spectrum)},
          {"n_condition", c.n_condition},
          {"lambda", vec(c.lambda)},
          {"delta_p_norm", vec(c.delta_p_norm)},
          {"delta_c_norm", c.delta_c_norm},
          {"bound_satisfied", bounds},
          {"collinearity_sine", vec(c.collinearity_sine)},
          {"max_sine", c.max_sine},
          {"passed", c.passed(tol)}};
}

inline json to_json(const PreservationCertificate& c, const TheoryTolerances& tol = {}) {
  return {{"max_column_ratio", c.max_column_ratio},
          {"max_sample_ratio", c.max_sample_ratio},
          {"samples", c.samples},
          {"passed", c.passed(tol)}};
}

inline json to_json(const TruncationCertificate& c, const TheoryTolerances& tol = {}) {
  return {{"k", c.k},
          {"rank_c_pres", c.rank_c_pres},
          {"z_star_spectral_norm", c.z_star_spectral_norm},
          {"sigma_k_plus_1", c.sigma_k_plus_1},
          {"preservation_bound", c.preservation_bound},
          {"per_preserved_perturbation", vec(c.per_preserved_perturbation)},
          {"topk_residual", c.topk_residual},
          {"targets", indices(c.targets)},
          {"q", c.q},
          {"identity_residual", c.identity_residual},
          {"target_perturbation", vec(c.target_perturbation)},
          {"erasure_lower_bounds", vec(c.erasure_lower_bounds)},
          {"sigma_min_bv", c.sigma_min_bv},
          {"kernel_condition_holds", c.kernel_condition_holds},
          {"preservation_holds", c.preservation_holds(tol)},
          {"identity_holds", c.identity_holds(tol)},
          {"lower_bound_holds", c.lower_bound_holds(tol)},
          {"degenerate_bound_vanishes", c.degenerate_bound_vanishes(tol)},
          {"passed", c.passed(tol)}};
}

inline json to_json(const StationarityCertificate& c, const TheoryTolerances& tol = {}) {
  return {{"gradient_norm", c.gradient_norm},
          {"relative", c.relative()},
          {"passed", c.passed(tol)}};
}

inline const char* to_string(SpectrumKind s) { return s == SpectrumKind::flat ? "flat" : "geometric"; }

inline json to_json(const SyntheticSpec& s) {
  return {{"n", s.n},
          {"p", s.p},
          {"num_targets", s.num_targets},
          {"num_preserved", s.num_preserved},
          {"target_preserve_cosine", s.target_preserve_cosine},
          {"safe_dim", s.safe_dim},
          {"spectrum", to_string(s.spectrum)},
          {"decay_ratio", s.decay_ratio},
          {"rng_seed", s.rng_seed},
          {"degenerate_targets", s.degenerate_targets}};
}

inline SyntheticSpec spec_from_json(const json& j, SyntheticSpec s = {}) {
  if (!j.is_object()) throw InvalidInput("synthetic spec must be a JSON object");
  auto get_count = [&](const char* key, Index& out) {
    if (j.contains(key)) out = j.at(key).get<Index>();
  };
  get_count("n", s.n);
  get_count("p", s.p);
  get_count("num_targets", s.num_targets);
  get_count("num_preserved", s.num_preserved);
  get_count("safe_dim", s.safe_dim);
  get_count("degenerate_targets", s.degenerate_targets);
  if (j.contains("target_preserve_cosine"))
    s.target_preserve_cosine = j.at("target_preserve_cosine").get<double>();
  if (j.contains("decay_ratio")) s.decay_ratio = j.at("decay_ratio").get<double>();
  if (j.contains("rng_seed")) s.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  if (j.contains("spectrum")) {
    const auto v = j.at("spectrum").get<std::string>();
    if (v == "flat")
      s.spectrum = SpectrumKind::flat;
    else if (v == "geometric")
      s.spectrum = SpectrumKind::geometric;
    else
      throw InvalidInput("spectrum must be 'flat' or 'geometric'");
  }
  return s;
}

inline json to_json(const MethodReport& m, const TheoryTolerances& tol = {}) {
  json j;
  j["label"] = m.label;
  j["config"] = to_json(m.config);
  j["erasure_residuals"] = vec(m.erasure_residuals);
  j["preservation_drops"] = vec(m.preservation_drops);
  j["update_frobenius"] = m.update_frobenius;
  j["wall_time"] = {{"median", m.wall_time.median}, {"min", m.wall_time.min}, {"max", m.wall_time.max}};
  j["diagnostics"] = to_json(m.diagnostics);
  json certs;
  certs["preservation"] = m.preservation ? to_json(*m.preservation, tol) : json(nullptr);
  certs["truncation"] = m.truncation ? to_json(*m.truncation, tol) : json(nullptr);
  certs["perturbation"] = m.perturbation ? to_json(*m.perturbation, tol) : json(nullptr);
  certs["stationarity"] = m.stationarity ? to_json(*m.stationarity, tol) : json(nullptr);
  if (!m.perturbation_skipped.empty()) certs["perturbation_skipped"] = m.perturbation_skipped;
  certs["all_passed"] = m.certificates_pass;
  j["certificates"] = certs;
  return j;
}

inline const char* kMetricNote =
    "Norm-based metrics on synthetic geometry: erasure_residual = ||W c_i - W0 c_i*||_2, "
    "preservation_drop = ||(W - W0) p_j||_2 / ||W0 p_j||_2. Targets are mixed from in-span "
    "and out-of-span components of col(C_pres) at a chosen cosine; this construction is "
    "synthetic and not a model-scale measurement.";

inline json bench_to_json(const SyntheticSpec& base, const std::string& axis,
                          const std::vector<SweepPoint>& points, const TheoryTolerances& tol = {}) {
  json j;
  j["schema"] = kSchema;
  j["kind"] = "bench";
  j["note"] = kMetricNote;
  j["base_spec"] = to_json(base);
  j["axis"] = axis;
  json pts = json::array();
  for (const auto& p : points) {
    json pj;
    pj["value"] = p.value;
    pj["spec"] = to_json(p.spec);
    pj["status"] = p.report ? "ok" : "error";
    if (!p.error.empty()) pj["error"] = p.error;
    json ms = json::array();
    if (p.report)
      for (const auto& m : p.report->methods) ms.push_back(to_json(m, tol));
    pj["methods"] = ms;
    pts.push_back(pj);
  }
  j["points"] = pts;
  return j;
}

/// Removes every "wall_time" member, recursively.
inline json strip_timing(json j) {
  if (j.is_object()) {
    j.erase("wall_time");
    for (auto& [k, v] : j.items()) v = strip_timing(v);
  } else if (j.is_array()) {
    for (auto& v : j) v = strip_timing(v);
  }
  return j;
}

}  // namespace nulledit::report
