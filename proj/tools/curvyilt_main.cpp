// Batch CLI for curvilinear mask optimization: forward simulation, design
// retargeting, full optimization runs, metric evaluation and benchmarking.
#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "curvyilt/commands.hpp"

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitDivergence = 3;

void add_overrides(CLI::App* app, std::vector<std::string>& overrides) {
  // one value per occurrence, so positional arguments after it survive
  app->add_option("--set", overrides, "Override a config value, section.key=value")
      ->type_name("KEY=VALUE")
      ->type_size(1)
      ->allow_extra_args(false);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curvyilt - curvilinear inverse lithography toolkit"};
  app.require_subcommand(1);

  curvyilt::SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Forward litho simulation of a mask");
  c_sim->add_option("--config", sim.config_path, "Run configuration file")->required();
  c_sim->add_option("--mask", sim.mask_path, "Mask image (.png or .pgm)")->required();
  c_sim->add_option("--target", sim.target_path, "Target layout or image for metrics");
  add_overrides(c_sim, sim.overrides);

  curvyilt::RetargetArgs ret;
  auto* c_ret = app.add_subcommand("retarget", "Corner-rounding design retargeting");
  c_ret->add_option("--config", ret.config_path, "Run configuration file")->required();
  c_ret->add_option("--target", ret.target_path, "Target layout or image")->required();
  add_overrides(c_ret, ret.overrides);

  curvyilt::OptimizeArgs opt;
  auto* c_opt = app.add_subcommand("optimize", "Run mask optimization on one clip");
  c_opt->add_option("--config", opt.config_path, "Run configuration file")->required();
  c_opt->add_option("--target", opt.target_path, "Target layout or image")->required();
  c_opt->add_option("--case", opt.case_name, "Case name for reports");
  c_opt->add_flag_callback(
      "--skip-cdr", [&] { opt.overrides.push_back("opt.cdr=false"); },
      "Disable design retargeting");
  c_opt->add_flag_callback(
      "--skip-inloop-morph", [&] { opt.overrides.push_back("opt.inloop_morph=false"); },
      "Disable in-loop morphological cleanup");
  c_opt->add_flag_callback(
      "--skip-morph", [&] { opt.overrides.push_back("opt.postproc_morph=false"); },
      "Disable post-processing morphological cleanup");
  add_overrides(c_opt, opt.overrides);

  curvyilt::EvaluateArgs eval;
  auto* c_eval = app.add_subcommand("evaluate", "Metrics for an existing mask");
  c_eval->add_option("--config", eval.config_path, "Run configuration file")->required();
  c_eval->add_option("--mask", eval.mask_path, "Mask image (.png or .pgm)")->required();
  c_eval->add_option("--target", eval.target_path, "Target layout or image")->required();
  add_overrides(c_eval, eval.overrides);

  curvyilt::BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Optimize and report a batch of clips");
  c_bench->add_option("--config", bench.config_path, "Run configuration file")->required();
  c_bench->add_option("clips", bench.clip_paths, "Clip layout files");
  add_overrides(c_bench, bench.overrides);

  curvyilt::KernelGenArgs kgen;
  auto* c_kgen = app.add_subcommand("kernel-gen", "Write synthetic Gaussian kernel files");
  c_kgen->add_option("--freq-dim", kgen.freq_dim, "Odd frequency-window side");
  c_kgen->add_option("--sigma", kgen.sigma_freq, "Gaussian sigma in frequency bins");
  c_kgen->add_option("--defocus-blur", kgen.defocus_blur, "Passband narrowing factor >= 1");
  c_kgen->add_option("--out-prefix", kgen.out_prefix, "Output path prefix");

  curvyilt::KernelImportArgs kimp;
  auto* c_kimp = app.add_subcommand("kernel-import", "Convert text kernels to a container");
  c_kimp->add_option("--text", kimp.text_path, "Kernel text file")->required();
  c_kimp->add_option("--out", kimp.out_path, "Output container path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);  // prints help/usage text
    return code == 0 ? 0 : kExitConfigError;
  }

  try {
    if (*c_sim) return curvyilt::cmd_simulate(sim);
    if (*c_ret) return curvyilt::cmd_retarget(ret);
    if (*c_opt) return curvyilt::cmd_optimize(opt);
    if (*c_eval) return curvyilt::cmd_evaluate(eval);
    if (*c_bench) return curvyilt::cmd_bench(bench);
    if (*c_kgen) return curvyilt::cmd_kernel_gen(kgen);
    if (*c_kimp) return curvyilt::cmd_kernel_import(kimp);
  } catch (const curvyilt::DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  return 0;
}
