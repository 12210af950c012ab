// nulledit: closed-form concept erasure on linear weight matrices.
//
//   nulledit gen    --out DIR [geometry flags]
//   nulledit edit   MANIFEST --out DIR [--method dp|uce] [--truncation-k K]
//   nulledit verify DIR
//   nulledit bench  [--spec FILE | geometry flags] [--sweep AXIS V1,V2,...] --out DIR

#include "nulledit/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

void add_geometry_flags(CLI::App* app, nulledit::SyntheticSpec& spec, std::string& spectrum) {
  app->add_option("--n", spec.n, "embedding dimension")->capture_default_str();
  app->add_option("--p", spec.p, "output dimension of W0")->capture_default_str();
  app->add_option("--targets", spec.num_targets, "number of target concepts")->capture_default_str();
  app->add_option("--preserved", spec.num_preserved, "number of preserved concepts")
      ->capture_default_str();
  app->add_option("--cosine", spec.target_preserve_cosine,
                  "cosine between each target and the preserved span, in [0, 1)")
      ->capture_default_str();
  app->add_option("--safe-dim", spec.safe_dim, "columns of the safe basis")->capture_default_str();
  app->add_option("--spectrum", spectrum, "preserved singular spectrum: flat or geometric")
      ->check(CLI::IsMember({"flat", "geometric"}))
      ->capture_default_str();
  app->add_option("--ratio", spec.decay_ratio, "geometric decay ratio")->capture_default_str();
  app->add_option("--seed", spec.rng_seed, "RNG seed")->capture_default_str();
  app->add_option("--degenerate-targets", spec.degenerate_targets,
                  "leading targets placed inside the preserved span");
}

nulledit::SpectrumKind parse_spectrum(const std::string& s) {
  return s == "geometric" ? nulledit::SpectrumKind::geometric : nulledit::SpectrumKind::flat;
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = nulledit::cli;
  CLI::App app{"Closed-form concept erasure for linear weight matrices"};
  app.require_subcommand(1);

  // edit
  cli::EditOptions edit_opt;
  std::string method;
  long long trunc_k = -1;
  double rank_tol = 0.0;
  auto* edit = app.add_subcommand("edit", "apply an edit described by a manifest");
  edit->add_option("manifest", edit_opt.manifest, "manifest JSON")->required();
  edit->add_option("--out,-o", edit_opt.out_dir, "output directory")->required();
  edit->add_option("--method", method, "override the manifest method")
      ->check(CLI::IsMember({"dp", "uce"}));
  edit->add_option("--truncation-k", trunc_k, "keep only the top-k preserved directions exact");
  edit->add_option("--rank-tol", rank_tol, "absolute singular-value cut for rank decisions");
  edit->add_flag("--apply-projection1", edit_opt.apply_projection1,
                 "project explicit anchors through the safe subspace");
  edit->add_option("--jobs", edit_opt.jobs, "parallel layers");

  // verify
  std::filesystem::path verify_dir;
  auto* verify = app.add_subcommand("verify", "recompute certificates for an edit directory");
  verify->add_option("dir", verify_dir, "directory written by 'edit'")->required();

  // gen
  cli::GenOptions gen_opt;
  std::string gen_spectrum = "flat";
  auto* gen = app.add_subcommand("gen", "write a synthetic problem and manifest");
  add_geometry_flags(gen, gen_opt.spec, gen_spectrum);
  gen->add_option("--layers", gen_opt.layers, "number of weight matrices")->capture_default_str();
  gen->add_option("--out,-o", gen_opt.out_dir, "output directory")->required();

  // bench
  cli::BenchCliOptions bench_opt;
  std::string bench_spectrum = "flat";
  std::vector<std::string> sweep_args;
  std::string methods = "dp,uce";
  auto* bench = app.add_subcommand("bench", "compare DP and UCE on synthetic problems");
  add_geometry_flags(bench, bench_opt.spec, bench_spectrum);
  bench->add_option("--spec", bench_opt.spec_path, "synthetic spec JSON (overrides flags)");
  bench->add_option("--sweep", sweep_args, "AXIS VALUES, e.g. --sweep cosine 0,0.5,0.9")
      ->expected(2);
  bench->add_option("--truncation-k", trunc_k, "truncation for DP runs");
  bench->add_option("--methods", methods, "comma-separated methods")->capture_default_str();
  bench->add_option("--repeats", bench_opt.repeats, "timing repetitions")->capture_default_str();
  bench->add_option("--jobs", bench_opt.jobs, "parallel sweep points");
  bench->add_option("--out,-o", bench_opt.out_dir, "output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  if (*edit) {
    if (!method.empty()) edit_opt.method = method;
    if (edit->count("--truncation-k")) edit_opt.truncation_k = trunc_k;
    if (edit->count("--rank-tol")) edit_opt.rank_tolerance = rank_tol;
    return cli::cmd_edit(edit_opt, std::cout, std::cerr);
  }
  if (*verify) return cli::cmd_verify(verify_dir, std::cout, std::cerr);
  if (*gen) {
    gen_opt.spec.spectrum = parse_spectrum(gen_spectrum);
    return cli::cmd_gen(gen_opt, std::cout, std::cerr);
  }
  bench_opt.spec.spectrum = parse_spectrum(bench_spectrum);
  if (bench->count("--truncation-k")) bench_opt.truncation_k = trunc_k;
  bench_opt.methods.clear();
  for (const auto& m : CLI::detail::split(methods, ','))
    if (!m.empty()) bench_opt.methods.push_back(m);
  if (!sweep_args.empty()) {
    bench_opt.sweep_axis = sweep_args[0];
    for (const auto& v : CLI::detail::split(sweep_args[1], ',')) {
      try {
        bench_opt.sweep_values.push_back(std::stod(v));
      } catch (const std::exception&) {
        return cli::fail(std::cerr, "invalid_input", "bad sweep value '" + v + "'");
      }
    }
  }
  return cli::cmd_bench(bench_opt, std::cout, std::cerr);
}
