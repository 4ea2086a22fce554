#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "curvyilt/litho.hpp"
#include "curvyilt/metrics.hpp"
#include "curvyilt/objective.hpp"

namespace curvyilt {

// Batch-run configuration: kernel files, process window, every optimizer
// knob, the EPE policy and output layout. Lives in one sectioned key=value
// file; command-line --set overrides win over file values.
struct RunConfig {
  std::string kernel_nominal_path;
  std::string kernel_defocus_path;
  double dose_nominal = 1.0;
  double dose_outer = 1.02;
  double dose_inner = 0.98;
  double d_th = 0.225;
  GridSpec grid{2048, 2048, 1.0};
  OptConfig opt;
  EpeSpec epe;
  std::string output_dir = "out";
  int workers = 1;
  int snapshot_every = 10;
  bool k_freq_explicit = false;  // when false, k_freq follows the kernel freq_dim

  void validate() const {
    grid.validate();
    opt.validate();
    epe.validate();
    if (workers < 1) throw ValidationError("RunConfig: workers must be >= 1");
    if (snapshot_every < 1) throw ValidationError("RunConfig: snapshot_every must be >= 1");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw FormatError("config: bad boolean for " + key + ": " + v);
}

inline double parse_double(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw FormatError("config: bad number for " + key + ": " + v);
  }
}

inline int parse_int(const std::string& v, const std::string& key) {
  try {
    std::size_t pos = 0;
    const int i = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::logic_error&) {
    throw FormatError("config: bad integer for " + key + ": " + v);
  }
}

}  // namespace detail

// Applies one "section.key=value" assignment; unknown keys are rejected so
// typos fail before any computation starts.
inline void apply_config_entry(RunConfig& rc, const std::string& section,
                               const std::string& key, const std::string& value,
                               const std::filesystem::path& base_dir = {}) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  const std::string full = section + "." + key;

  auto resolve = [&base_dir](const std::string& p) {
    const std::filesystem::path fp(p);
    if (fp.is_absolute() || base_dir.empty()) return p;
    return (base_dir / fp).string();
  };

  if (section == "run") {
    if (key == "output_dir") rc.output_dir = resolve(value);
    else if (key == "workers") rc.workers = parse_int(value, full);
    else if (key == "snapshot_every") rc.snapshot_every = parse_int(value, full);
    else throw FormatError("config: unknown key " + full);
  } else if (section == "grid") {
    if (key == "width_px") rc.grid.width_px = parse_int(value, full);
    else if (key == "height_px") rc.grid.height_px = parse_int(value, full);
    else if (key == "nm_per_px") rc.grid.nm_per_px = parse_double(value, full);
    else throw FormatError("config: unknown key " + full);
  } else if (section == "litho") {
    if (key == "kernel_nominal") rc.kernel_nominal_path = resolve(value);
    else if (key == "kernel_defocus") rc.kernel_defocus_path = resolve(value);
    else if (key == "dose_nominal") rc.dose_nominal = parse_double(value, full);
    else if (key == "dose_outer") rc.dose_outer = parse_double(value, full);
    else if (key == "dose_inner") rc.dose_inner = parse_double(value, full);
    else if (key == "d_th") rc.d_th = parse_double(value, full);
    else if (key == "beta2") rc.opt.beta2 = parse_double(value, full);
    else throw FormatError("config: unknown key " + full);
  } else if (section == "opt") {
    if (key == "T") rc.opt.max_steps = parse_int(value, full);
    else if (key == "beta1") rc.opt.beta1 = parse_double(value, full);
    else if (key == "beta3") rc.opt.beta3 = parse_double(value, full);
    else if (key == "learning_rate") rc.opt.learning_rate = parse_double(value, full);
    else if (key == "scale") rc.opt.scale = parse_int(value, full);
    else if (key == "k_cvx") rc.opt.k_cvx = parse_int(value, full);
    else if (key == "k_ccv") rc.opt.k_ccv = parse_int(value, full);
    else if (key == "k_morph") rc.opt.k_morph = parse_int(value, full);
    else if (key == "mask_threshold") rc.opt.mask_threshold = parse_double(value, full);
    else if (key == "t_morph") rc.opt.t_morph = parse_int(value, full);
    else if (key == "t_morph_step") rc.opt.t_morph_step = parse_int(value, full);
    else if (key == "k_freq") {
      rc.opt.k_freq = parse_int(value, full);
      rc.k_freq_explicit = true;
    } else if (key == "adam_b1") rc.opt.adam.b1 = parse_double(value, full);
    else if (key == "adam_b2") rc.opt.adam.b2 = parse_double(value, full);
    else if (key == "adam_eps") rc.opt.adam.eps = parse_double(value, full);
    else if (key == "corner_share_radius")
      rc.opt.corner_share_radius = parse_int(value, full);
    else if (key == "cdr") rc.opt.enable_cdr = parse_bool(value, full);
    else if (key == "inloop_morph") rc.opt.enable_inloop_morph = parse_bool(value, full);
    else if (key == "postproc_morph") rc.opt.enable_postproc_morph = parse_bool(value, full);
    else throw FormatError("config: unknown key " + full);
  } else if (section == "epe") {
    if (key == "sample_spacing_nm") rc.epe.sample_spacing_nm = parse_double(value, full);
    else if (key == "threshold_nm") rc.epe.threshold_nm = parse_double(value, full);
    else if (key == "corner_exclusion_nm")
      rc.epe.corner_exclusion_nm = parse_double(value, full);
    else if (key == "search_limit_nm") rc.epe.search_limit_nm = parse_double(value, full);
    else throw FormatError("config: unknown key " + full);
  } else {
    throw FormatError("config: unknown section [" + section + "]");
  }
}

inline RunConfig parse_run_config(std::istream& in,
                                  const std::filesystem::path& base_dir = {}) {
  RunConfig rc;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw FormatError("config line " + std::to_string(lineno) + ": unterminated section");
      section = detail::trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      throw FormatError("config line " + std::to_string(lineno) + ": key outside a section");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string value = detail::trim(t.substr(eq + 1));
    try {
      apply_config_entry(rc, section, key, value, base_dir);
    } catch (const FormatError& e) {
      throw FormatError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rc;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  return parse_run_config(in, std::filesystem::path(path).parent_path());
}

// "--set section.key=value" override.
inline void apply_config_override(RunConfig& rc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw FormatError("override must look like section.key=value: " + assignment);
  apply_config_entry(rc, detail::trim(assignment.substr(0, dot)),
                     detail::trim(assignment.substr(dot + 1, eq - dot - 1)),
                     detail::trim(assignment.substr(eq + 1)));
}

// Loads the kernel files and assembles the process-corner model; with no
// explicit k_freq the penalty window follows the kernel freq_dim.
inline LithoConfig make_litho_config(RunConfig& rc) {
  if (rc.kernel_nominal_path.empty() || rc.kernel_defocus_path.empty())
    throw ValidationError("config: litho.kernel_nominal and litho.kernel_defocus are required");
  LithoConfig litho;
  litho.d_th = rc.d_th;
  litho.beta2 = rc.opt.beta2;
  litho.corners.nominal = {load_kernel_set(rc.kernel_nominal_path), rc.dose_nominal};
  const KernelSet defocus = load_kernel_set(rc.kernel_defocus_path);
  litho.corners.outer = {defocus, rc.dose_outer};
  litho.corners.inner = {defocus, rc.dose_inner};
  litho.validate();
  if (!rc.k_freq_explicit) rc.opt.k_freq = litho.corners.nominal.kernels.freq_dim;
  rc.validate();
  return litho;
}

}  // namespace curvyilt
