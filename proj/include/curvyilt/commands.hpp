#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "curvyilt/config.hpp"
#include "curvyilt/image_io.hpp"
#include "curvyilt/layout.hpp"
#include "curvyilt/objective.hpp"

namespace curvyilt {

namespace detail {

inline bool has_extension(const std::string& path, const char* ext) {
  return std::filesystem::path(path).extension() == ext;
}

// Target inputs are either polygon layouts (text) or raster images.
struct TargetInput {
  BinaryImage image;
  PolygonLayout layout;  // empty when the input was raster
  bool has_layout = false;
};

inline TargetInput load_target(const std::string& path, const GridSpec& grid) {
  TargetInput t;
  if (has_extension(path, ".png")) {
    t.image = read_png_binary(path, grid.nm_per_px);
  } else if (has_extension(path, ".pgm")) {
    t.image = binarize(read_pgm16(path), 0.5);
  } else {
    t.layout = load_layout(path);
    t.image = rasterize(t.layout, grid);
    t.has_layout = true;
  }
  return t;
}

inline GrayImage load_mask_gray(const std::string& path, double nm_per_px) {
  if (has_extension(path, ".pgm")) return read_pgm16(path);
  return read_png_gray8(path, nm_per_px);
}

inline double peak_rss_mb() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream ls(line.substr(6));
      double kb = 0;
      ls >> kb;
      return kb / 1024.0;
    }
  }
  return 0.0;
}

inline nlohmann::json metrics_to_json(const std::string& name, const MetricBundle& m) {
  nlohmann::json j;
  j["case"] = name;
  j["mse"] = m.mse;
  j["pv"] = m.pvb_nm2;
  if (m.epev)
    j["epe"] = *m.epev;
  else
    j["epe"] = nullptr;
  if (std::isfinite(m.msa_nm2))
    j["msa"] = m.msa_nm2;
  else
    j["msa"] = nullptr;
  if (std::isfinite(m.msd_nm))
    j["msd"] = m.msd_nm;
  else
    j["msd"] = nullptr;
  return j;
}

inline void write_metrics_json(const std::filesystem::path& path, const std::string& name,
                               const MetricBundle& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << metrics_to_json(name, m).dump(2) << '\n';
}

inline std::string csv_num(double v) {
  if (!std::isfinite(v)) return "n/a";
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

inline RunConfig load_config_with_overrides(const std::string& config_path,
                                            const std::vector<std::string>& overrides) {
  RunConfig rc = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  for (const auto& o : overrides) apply_config_override(rc, o);
  return rc;
}

}  // namespace detail

struct SimulateArgs {
  std::string config_path;
  std::string mask_path;
  std::string target_path;  // optional
  std::vector<std::string> overrides;
};

inline int cmd_simulate(const SimulateArgs& args) {
  RunConfig rc = detail::load_config_with_overrides(args.config_path, args.overrides);
  const LithoConfig litho = make_litho_config(rc);
  const std::filesystem::path out_dir(rc.output_dir);
  std::filesystem::create_directories(out_dir);

  const GrayImage mask = detail::load_mask_gray(args.mask_path, rc.grid.nm_per_px);
  const GrayImage aerial =
      aerial_image(mask, litho.corners.nominal.kernels, litho.corners.nominal.dose);
  write_pgm16((out_dir / "aerial_nominal.pgm").string(), aerial);
  write_png_gray8((out_dir / "aerial_nominal.png").string(), aerial);

  const BinaryImage z_nom = resist_hard(aerial, litho.d_th);
  const BinaryImage z_outer = hard_print(mask, litho.corners.outer, litho.d_th);
  const BinaryImage z_inner = hard_print(mask, litho.corners.inner, litho.d_th);
  write_png_binary((out_dir / "resist_nominal.png").string(), z_nom);
  write_png_binary((out_dir / "resist_outer.png").string(), z_outer);
  write_png_binary((out_dir / "resist_inner.png").string(), z_inner);

  if (!args.target_path.empty()) {
    GridSpec grid = mask.spec;
    const detail::TargetInput target = detail::load_target(args.target_path, grid);
    require_same_grid(mask.spec, target.image.spec, "simulate");
    MetricBundle m;
    m.mse = mse(z_nom, target.image);
    m.pvb_nm2 = pvband(z_outer, z_inner);
    m.msa_nm2 = msa(binarize(mask, 0.5));
    m.msd_nm = msd(binarize(mask, 0.5));
    if (target.has_layout) m.epev = epe_violations(z_nom, target.layout, rc.epe);
    detail::write_metrics_json(out_dir / "metrics.json", args.mask_path, m);
  }
  return 0;
}

struct RetargetArgs {
  std::string config_path;
  std::string target_path;
  std::vector<std::string> overrides;
};

inline int cmd_retarget(const RetargetArgs& args) {
  RunConfig rc = detail::load_config_with_overrides(args.config_path, args.overrides);
  rc.grid.validate();
  rc.opt.validate();
  const std::filesystem::path out_dir(rc.output_dir);
  std::filesystem::create_directories(out_dir);

  const detail::TargetInput target = detail::load_target(args.target_path, rc.grid);
  const BinaryImage retargeted = cdr(target.image, rc.opt.k_cvx, rc.opt.k_ccv);
  BinaryImage diff(target.image.spec);
  for (std::size_t i = 0; i < diff.data.size(); ++i)
    diff.data[i] = target.image.data[i] != retargeted.data[i];

  write_png_binary((out_dir / "target.png").string(), target.image);
  write_png_binary((out_dir / "retargeted.png").string(), retargeted);
  write_png_binary((out_dir / "retarget_diff.png").string(), diff);
  return 0;
}

struct OptimizeArgs {
  std::string config_path;
  std::string target_path;
  std::string case_name;  // defaults to the target stem
  std::vector<std::string> overrides;
};

struct OptimizeOutcome {
  MetricBundle metrics;
  double seconds = 0;
  double baseline_mse = 0;
};

inline OptimizeOutcome run_optimize(RunConfig& rc, const LithoConfig& litho,
                                    const std::string& target_path,
                                    const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const detail::TargetInput target = detail::load_target(target_path, rc.grid);

  if (rc.opt.enable_cdr)
    write_png_binary((out_dir / "cdr_target.png").string(),
                     cdr(target.image, rc.opt.k_cvx, rc.opt.k_ccv));

  GrayImage last_mask_c;
  const SnapshotFn snapshot = [&](int epoch, const GrayImage& mask_c, const GrayImage& z_nom,
                                  const GrayImage& z_max, const GrayImage& z_min) {
    last_mask_c = mask_c;
    if (epoch % rc.snapshot_every != 0) return;
    const std::string tag = "snap_e" + std::to_string(epoch);
    write_png_gray8((out_dir / (tag + "_mask.png")).string(), mask_c);
    write_png_gray8((out_dir / (tag + "_nominal.png")).string(), z_nom);
    write_png_gray8((out_dir / (tag + "_outer.png")).string(), z_max);
    write_png_gray8((out_dir / (tag + "_inner.png")).string(), z_min);
  };

  const auto start = std::chrono::steady_clock::now();
  OptResult result;
  try {
    result = curvy_ilt(target.image, rc.opt, litho,
                       target.has_layout ? &target.layout : nullptr, &rc.epe, snapshot);
  } catch (DivergenceError& e) {
    std::ofstream trace_out(out_dir / "trace.csv");
    write_trace_csv(e.trace, trace_out);
    throw;
  }
  const auto stop = std::chrono::steady_clock::now();

  std::ofstream trace_out(out_dir / "trace.csv");
  write_trace_csv(result.trace, trace_out);
  write_png_binary((out_dir / "final_mask.png").string(), result.final_mask);
  if (!last_mask_c.data.empty())
    write_pgm16((out_dir / "mask_continuous.pgm").string(), last_mask_c);

  OptimizeOutcome outcome;
  outcome.metrics = result.metrics;
  outcome.baseline_mse = result.baseline_mse;
  outcome.seconds = std::chrono::duration<double>(stop - start).count();
  return outcome;
}

inline int cmd_optimize(const OptimizeArgs& args) {
  RunConfig rc = detail::load_config_with_overrides(args.config_path, args.overrides);
  const LithoConfig litho = make_litho_config(rc);
  const std::string name = args.case_name.empty()
                               ? std::filesystem::path(args.target_path).stem().string()
                               : args.case_name;
  const OptimizeOutcome outcome =
      run_optimize(rc, litho, args.target_path, rc.output_dir);
  detail::write_metrics_json(std::filesystem::path(rc.output_dir) / "metrics.json", name,
                             outcome.metrics);
  std::cout << detail::metrics_to_json(name, outcome.metrics).dump() << '\n';
  return 0;
}

struct EvaluateArgs {
  std::string config_path;
  std::string mask_path;
  std::string target_path;
  std::vector<std::string> overrides;
};

inline int cmd_evaluate(const EvaluateArgs& args) {
  RunConfig rc = detail::load_config_with_overrides(args.config_path, args.overrides);
  const LithoConfig litho = make_litho_config(rc);
  const std::filesystem::path out_dir(rc.output_dir);
  std::filesystem::create_directories(out_dir);

  const BinaryImage mask = binarize(detail::load_mask_gray(args.mask_path, rc.grid.nm_per_px), 0.5);
  const detail::TargetInput target = detail::load_target(args.target_path, mask.spec);
  require_same_grid(mask.spec, target.image.spec, "evaluate");
  const MetricBundle m =
      evaluate_mask(mask, target.image, litho,
                    target.has_layout ? &target.layout : nullptr, &rc.epe);
  detail::write_metrics_json(out_dir / "metrics.json", args.mask_path, m);
  std::cout << detail::metrics_to_json(args.mask_path, m).dump() << '\n';
  return 0;
}

struct BenchArgs {
  std::string config_path;
  std::vector<std::string> clip_paths;
  std::vector<std::string> overrides;
};

// Optimizes every clip (workers in parallel, each clip sequential inside) and
// writes a per-case report with an arithmetic-mean row plus runtime and an
// approximate peak-memory figure.
inline int cmd_bench(const BenchArgs& args) {
  RunConfig base = detail::load_config_with_overrides(args.config_path, args.overrides);
  if (args.clip_paths.empty()) throw ValidationError("bench: no input clips");
  const LithoConfig litho = make_litho_config(base);
  const std::filesystem::path out_root(base.output_dir);
  std::filesystem::create_directories(out_root);

  struct Row {
    std::string name;
    MetricBundle metrics;
    double seconds = 0;
    bool failed = false;
    std::string error;
  };
  std::vector<Row> rows(args.clip_paths.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= args.clip_paths.size()) return;
      Row& row = rows[i];
      row.name = std::filesystem::path(args.clip_paths[i]).stem().string();
      try {
        RunConfig rc = base;  // per-clip copy, workers share nothing mutable
        const OptimizeOutcome outcome =
            run_optimize(rc, litho, args.clip_paths[i], out_root / row.name);
        row.metrics = outcome.metrics;
        row.seconds = outcome.seconds;
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
      }
    }
  };
  const int nworkers = std::max(1, std::min<int>(base.workers,
                                                 static_cast<int>(args.clip_paths.size())));
  if (nworkers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < nworkers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  std::ofstream report(out_root / "report.csv");
  report << "case,mse,pv,epe,msa,msd,seconds\n";
  report.precision(12);
  double sum_mse = 0, sum_pv = 0, sum_epe = 0, sum_msa = 0, sum_msd = 0, sum_sec = 0;
  int ok = 0;
  bool any_failed = false;
  for (const Row& row : rows) {
    if (row.failed) {
      any_failed = true;
      report << row.name << ",error,,,,," << '\n';
      std::cerr << "bench: " << row.name << " failed: " << row.error << '\n';
      continue;
    }
    ++ok;
    sum_mse += row.metrics.mse;
    sum_pv += row.metrics.pvb_nm2;
    sum_epe += row.metrics.epev.value_or(0);
    sum_msa += row.metrics.msa_nm2;
    sum_msd += row.metrics.msd_nm;
    sum_sec += row.seconds;
    report << row.name << ',' << detail::csv_num(row.metrics.mse) << ','
           << detail::csv_num(row.metrics.pvb_nm2) << ','
           << (row.metrics.epev ? std::to_string(*row.metrics.epev) : std::string("n/a"))
           << ',' << detail::csv_num(row.metrics.msa_nm2) << ','
           << detail::csv_num(row.metrics.msd_nm) << ',' << detail::csv_num(row.seconds)
           << '\n';
    detail::write_metrics_json(out_root / row.name / "metrics.json", row.name, row.metrics);
  }
  if (ok > 0) {
    report << "average," << detail::csv_num(sum_mse / ok) << ','
           << detail::csv_num(sum_pv / ok) << ',' << detail::csv_num(sum_epe / ok) << ','
           << detail::csv_num(sum_msa / ok) << ',' << detail::csv_num(sum_msd / ok) << ','
           << detail::csv_num(sum_sec / ok) << '\n';
  }
  report << "# peak_rss_mb_approx," << detail::csv_num(detail::peak_rss_mb()) << '\n';
  return any_failed ? 4 : 0;
}

struct KernelGenArgs {
  int freq_dim = 35;
  double sigma_freq = 8.0;
  double defocus_blur = 1.4;
  std::string out_prefix = "kernels";
};

inline int cmd_kernel_gen(const KernelGenArgs& args) {
  const ProcessCorners pc =
      synth_gaussian_kernels(args.freq_dim, args.sigma_freq, args.defocus_blur);
  save_kernel_set(pc.nominal.kernels, args.out_prefix + "_nominal.iltk");
  save_kernel_set(pc.outer.kernels, args.out_prefix + "_defocus.iltk");
  std::cout << "wrote " << args.out_prefix << "_nominal.iltk and " << args.out_prefix
            << "_defocus.iltk\n";
  return 0;
}

struct KernelImportArgs {
  std::string text_path;
  std::string out_path;
};

inline int cmd_kernel_import(const KernelImportArgs& args) {
  save_kernel_set(import_kernel_text_file(args.text_path), args.out_path);
  std::cout << "wrote " << args.out_path << '\n';
  return 0;
}

}  // namespace curvyilt
