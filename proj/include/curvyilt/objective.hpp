#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "curvyilt/fft.hpp"
#include "curvyilt/grid.hpp"
#include "curvyilt/litho.hpp"
#include "curvyilt/metrics.hpp"
#include "curvyilt/morph.hpp"
#include "curvyilt/raster.hpp"

namespace curvyilt {

struct AdamParams {
  double b1 = 0.9;
  double b2 = 0.999;
  double eps = 1e-8;
};

// Every knob of the optimization loop. Defaults target 2048x2048 clips at
// 1 nm/px optimized on a 4x coarser grid.
struct OptConfig {
  int max_steps = 200;          // T
  double beta1 = 4.0;           // mask sigmoid steepness
  double beta2 = 50.0;          // resist sigmoid steepness
  double beta3 = 1e-3;          // high-frequency penalty weight
  double learning_rate = 1.0;   // lambda
  int scale = 4;                // s, optimization-grid downsample factor
  int k_cvx = 39;               // convex-corner retarget disc
  int k_ccv = 39;               // concave-corner retarget disc
  int k_morph = 11;             // in-loop cleanup disc, optimization resolution
  double mask_threshold = 0.5;  // M_s, sigmoid shift and binarization threshold
  int t_morph = 30;             // first epoch eligible for in-loop cleanup
  int t_morph_step = 10;        // cleanup period
  int k_freq = 35;              // retained low-frequency window of the penalty
  AdamParams adam;
  bool enable_cdr = true;
  bool enable_inloop_morph = true;
  bool enable_postproc_morph = true;
  int corner_share_radius = 2;  // Chebyshev radius of the corner diagnostic

  void validate() const {
    if (max_steps < 1) throw ValidationError("OptConfig: max_steps must be >= 1");
    if (scale < 1) throw ValidationError("OptConfig: scale must be >= 1");
    for (int k : {k_cvx, k_ccv, k_morph})
      if (k < 1 || k % 2 == 0)
        throw ValidationError("OptConfig: structuring element sizes must be odd");
    if (!(mask_threshold > 0.0 && mask_threshold < 1.0))
      throw ValidationError("OptConfig: mask_threshold must lie in (0,1)");
    if (t_morph_step < 1) throw ValidationError("OptConfig: t_morph_step must be >= 1");
    if (k_freq < 1) throw ValidationError("OptConfig: k_freq must be >= 1");
    if (!(beta1 > 0.0) || !(beta2 > 0.0) || beta3 < 0.0)
      throw ValidationError("OptConfig: steepness/weight parameters out of range");
    if (!(learning_rate >= 0.0)) throw ValidationError("OptConfig: negative learning rate");
    if (corner_share_radius < 1)
      throw ValidationError("OptConfig: corner_share_radius must be >= 1");
  }
};

struct AdamState {
  std::vector<double> m, v;
  std::int64_t t = 0;
};

// One bias-corrected Adam step. The returned update is what the caller
// subtracts from the variable.
inline GrayImage adam_step(AdamState& st, const GrayImage& grad, double lr,
                           const AdamParams& p = {}) {
  const std::size_t n = grad.data.size();
  if (st.m.empty()) {
    st.m.assign(n, 0.0);
    st.v.assign(n, 0.0);
  }
  if (st.m.size() != n) throw DimensionError("adam_step: state/gradient shape mismatch");
  ++st.t;
  const double c1 = 1.0 - std::pow(p.b1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(p.b2, static_cast<double>(st.t));
  GrayImage update(grad.spec);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad.data[i];
    st.m[i] = p.b1 * st.m[i] + (1.0 - p.b1) * g;
    st.v[i] = p.b2 * st.v[i] + (1.0 - p.b2) * g * g;
    const double mhat = st.m[i] / c1;
    const double vhat = st.v[i] / c2;
    update.data[i] = lr * mhat / (std::sqrt(vhat) + p.eps);
  }
  return update;
}

// Spectral energy outside the centered k_freq x k_freq window, plus its
// gradient. Penalizes exactly the modes the low-pass process cannot print.
inline std::pair<double, GrayImage> highfreq_penalty(const GrayImage& img, int k_freq) {
  const int h = img.height(), w = img.width();
  if (k_freq < 1 || k_freq > std::min(h, w))
    throw DomainError("highfreq_penalty: k_freq out of range");

  const std::size_t n = img.spec.pixel_count();
  Fft2D& fft = fft_plan(h, w);
  std::vector<std::complex<double>> buf(n), spec(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = img.data[i];
  fft.forward(buf.data(), spec.data());

  const int lo = -(k_freq / 2), hi = (k_freq - 1) / 2;
  // wrapped offset in [-m/2, (m-1)/2], Nyquist counted as negative
  auto centered = [](int idx, int m) { return idx <= (m - 1) / 2 ? idx : idx - m; };
  double value = 0.0;
  for (int y = 0; y < h; ++y) {
    const int du = centered(y, h);
    const bool row_in = du >= lo && du <= hi;
    for (int x = 0; x < w; ++x) {
      const int dv = centered(x, w);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (row_in && dv >= lo && dv <= hi) {
        spec[i] = 0.0;  // in-window modes drop out of value and gradient
      } else {
        value += std::norm(spec[i]);
      }
    }
  }
  fft.inverse(spec.data(), buf.data());
  GrayImage grad(img.spec);
  const double scale = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) grad.data[i] = scale * buf[i].real();
  return {value, std::move(grad)};
}

struct IltLoss {
  double total = 0.0;
  double term_l2 = 0.0;   // |Z_nom - Z*|^2
  double term_pvb = 0.0;  // |Z_max - Z_min|^2
  double term_hf = 0.0;   // beta3-weighted spectral penalty
  GrayImage d_z_nom, d_z_max, d_z_min;
  GrayImage d_mask_c;  // penalty contribution only
};

inline IltLoss ilt_loss(const GrayImage& z_nom, const GrayImage& z_max,
                        const GrayImage& z_min, const GrayImage& target,
                        const GrayImage& mask_c, double beta3, int k_freq) {
  require_same_grid(z_nom.spec, target.spec, "ilt_loss");
  require_same_grid(z_nom.spec, z_max.spec, "ilt_loss");
  require_same_grid(z_nom.spec, z_min.spec, "ilt_loss");
  require_same_grid(z_nom.spec, mask_c.spec, "ilt_loss");

  IltLoss out;
  out.d_z_nom = GrayImage(z_nom.spec);
  out.d_z_max = GrayImage(z_nom.spec);
  out.d_z_min = GrayImage(z_nom.spec);
  for (std::size_t i = 0; i < z_nom.data.size(); ++i) {
    const double dn = z_nom.data[i] - target.data[i];
    const double db = z_max.data[i] - z_min.data[i];
    out.term_l2 += dn * dn;
    out.term_pvb += db * db;
    out.d_z_nom.data[i] = 2.0 * dn;
    out.d_z_max.data[i] = 2.0 * db;
    out.d_z_min.data[i] = -2.0 * db;
  }
  if (beta3 != 0.0) {
    auto [pen, pen_grad] = highfreq_penalty(mask_c, k_freq);
    out.term_hf = beta3 * pen;
    out.d_mask_c = std::move(pen_grad);
    for (auto& g : out.d_mask_c.data) g *= beta3;
  } else {
    out.d_mask_c = GrayImage(z_nom.spec);
  }
  out.total = out.term_l2 + out.term_pvb + out.term_hf;
  return out;
}

// Pixels within a Chebyshev radius of any rectilinear corner of the target.
// Corners are junctions whose 2x2 neighborhood holds an odd count of set
// pixels, or the two diagonal checkerboard patterns.
inline BinaryImage corner_mask_from_target(const BinaryImage& target, int radius) {
  const int h = target.height(), w = target.width();
  BinaryImage out(target.spec);
  for (int y = 0; y + 1 < h; ++y)
    for (int x = 0; x + 1 < w; ++x) {
      const int a = target(y, x), b = target(y, x + 1);
      const int c = target(y + 1, x), d = target(y + 1, x + 1);
      const int count = a + b + c + d;
      const bool corner = count == 1 || count == 3 || (count == 2 && a == d && b == c && a != b);
      if (!corner) continue;
      const int y0 = std::max(0, y - radius + 1), y1 = std::min(h - 1, y + radius);
      const int x0 = std::max(0, x - radius + 1), x1 = std::min(w - 1, x + radius);
      for (int yy = y0; yy <= y1; ++yy)
        for (int xx = x0; xx <= x1; ++xx) out(yy, xx) = 1;
    }
  return out;
}

// Fraction of gradient L2 norm carried by marked pixels; 0 when the gradient
// vanishes.
inline double masked_norm_share(const GrayImage& grad, const BinaryImage& mask) {
  require_same_grid(grad.spec, mask.spec, "masked_norm_share");
  double marked_sq = 0.0, total_sq = 0.0;
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    const double g2 = grad.data[i] * grad.data[i];
    total_sq += g2;
    if (mask.data[i]) marked_sq += g2;
  }
  if (total_sq == 0.0) return 0.0;
  return std::sqrt(marked_sq) / std::sqrt(total_sq);
}

inline double corner_gradient_share(const GrayImage& grad, const BinaryImage& target,
                                    int radius) {
  return masked_norm_share(grad, corner_mask_from_target(target, radius));
}

struct EpochRecord {
  int epoch = 0;
  double loss_total = 0, loss_l2 = 0, loss_pvb = 0, loss_hf = 0;
  double grad_norm = 0;
  double grad_corner_share = 0;
};

struct OptResult {
  BinaryImage final_mask;  // full resolution
  MetricBundle metrics;
  std::vector<EpochRecord> trace;
  double baseline_mse = 0.0;  // hard print of the raw target as mask
};

// Non-finite loss; carries the trace collected up to the failing epoch.
struct DivergenceError : std::runtime_error {
  std::vector<EpochRecord> trace;
  explicit DivergenceError(std::string msg, std::vector<EpochRecord> tr)
      : std::runtime_error(std::move(msg)), trace(std::move(tr)) {}
};

// Observer hook: called once per epoch with the optimization-resolution
// continuous mask and the three corner resist images.
using SnapshotFn = std::function<void(int epoch, const GrayImage& mask_c,
                                      const GrayImage& z_nom, const GrayImage& z_max,
                                      const GrayImage& z_min)>;

inline void write_trace_csv(const std::vector<EpochRecord>& trace, std::ostream& out) {
  out << "epoch,loss_total,loss_l2,loss_pvb,loss_hf,grad_norm,grad_corner_share\n";
  out.precision(17);
  for (const auto& r : trace)
    out << r.epoch << ',' << r.loss_total << ',' << r.loss_l2 << ',' << r.loss_pvb << ','
        << r.loss_hf << ',' << r.grad_norm << ',' << r.grad_corner_share << '\n';
}

namespace detail {

inline int next_odd(int k) { return k % 2 == 0 ? k + 1 : k; }

struct MergeTapes {
  MorphTape open_erode, open_dilate, close_dilate, close_erode;
  std::vector<std::uint8_t> clamp_pass;  // 1 where the merge clamp let values through
};

// Forward of the in-loop cleanup: merge(open(M_c), close(M_c)) with every
// arg-extremum recorded for the backward pass.
inline GrayImage inloop_cleanup(const GrayImage& mask_c, const StructElem& se,
                                MergeTapes& tapes) {
  const GrayImage eroded = erode(mask_c, se, &tapes.open_erode);
  const GrayImage opened = dilate(eroded, se, &tapes.open_dilate);
  const GrayImage dilated = dilate(mask_c, se, &tapes.close_dilate);
  const GrayImage closed = erode(dilated, se, &tapes.close_erode);

  GrayImage out(mask_c.spec);
  tapes.clamp_pass.assign(mask_c.data.size(), 0);
  for (std::size_t i = 0; i < mask_c.data.size(); ++i) {
    const double raw = opened.data[i] + closed.data[i] - mask_c.data[i];
    out.data[i] = std::clamp(raw, 0.0, 1.0);
    tapes.clamp_pass[i] = (raw > 0.0 && raw < 1.0) ? 1 : 0;
  }
  return out;
}

inline GrayImage inloop_cleanup_vjp(const MergeTapes& tapes, const GrayImage& upstream) {
  GrayImage g(upstream.spec);
  for (std::size_t i = 0; i < upstream.data.size(); ++i)
    g.data[i] = tapes.clamp_pass[i] ? upstream.data[i] : 0.0;

  const GrayImage g_open = morph_vjp(tapes.open_erode, morph_vjp(tapes.open_dilate, g));
  const GrayImage g_close = morph_vjp(tapes.close_dilate, morph_vjp(tapes.close_erode, g));
  GrayImage out(upstream.spec);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = g_open.data[i] + g_close.data[i] - g.data[i];
  return out;
}

}  // namespace detail

// Full-resolution hard-print evaluation of a finished binary mask.
inline MetricBundle evaluate_mask(const BinaryImage& mask, const BinaryImage& target,
                                  const LithoConfig& litho,
                                  const PolygonLayout* layout = nullptr,
                                  const EpeSpec* epe = nullptr) {
  const GrayImage m = mask.to_gray();
  const BinaryImage z_nom = hard_print(m, litho.corners.nominal, litho.d_th);
  const BinaryImage z_outer = hard_print(m, litho.corners.outer, litho.d_th);
  const BinaryImage z_inner = hard_print(m, litho.corners.inner, litho.d_th);

  MetricBundle out;
  out.mse = mse(z_nom, target);
  out.pvb_nm2 = pvband(z_outer, z_inner);
  out.msa_nm2 = msa(mask);
  out.msd_nm = msd(mask);
  if (layout && epe) out.epev = epe_violations(z_nom, *layout, *epe);
  return out;
}

// The full mask-optimization pipeline.
//
// Phase 1 retargets the design (corner rounding), pools it down to the
// optimization grid and initializes the mask with it. Phase 2 runs T Adam
// steps on the relaxed forward model, periodically passing the mask through
// the differentiable open/close merge to clear artifacts while gradients keep
// flowing. Phase 3 scales the mask back up, binarizes it and applies one
// final merge + opening + closing at full resolution.
inline OptResult curvy_ilt(const BinaryImage& target, const OptConfig& cfg,
                           const LithoConfig& litho, const PolygonLayout* layout = nullptr,
                           const EpeSpec* epe = nullptr, const SnapshotFn& snapshot = {}) {
  cfg.validate();
  litho.validate();
  const int s = cfg.scale;
  if (target.width() % s != 0 || target.height() % s != 0)
    throw DimensionError("curvy_ilt: target grid not divisible by scale");
  const int freq_dim = litho.corners.nominal.kernels.freq_dim;
  if (target.width() / s < freq_dim || target.height() / s < freq_dim)
    throw DimensionError("curvy_ilt: optimization grid smaller than kernel freq_dim");

  LithoConfig sim = litho;
  sim.beta2 = cfg.beta2;

  OptResult result;
  result.baseline_mse =
      mse(hard_print(target.to_gray(), litho.corners.nominal, litho.d_th), target);

  // phase 1: retarget, pool down, initialize
  const BinaryImage retargeted = cfg.enable_cdr ? cdr(target, cfg.k_cvx, cfg.k_ccv) : target;
  const GrayImage target_s = downsample(retargeted.to_gray(), s);
  GrayImage mask = target_s;

  const BinaryImage corner_ref = binarize(downsample(target.to_gray(), s), 0.5);
  const BinaryImage corner_mask = corner_mask_from_target(corner_ref, cfg.corner_share_radius);
  const StructElem inloop_se = disc_element(cfg.k_morph);
  AdamState adam;

  // phase 2: gradient steps
  for (int t = 1; t <= cfg.max_steps; ++t) {
    const GrayImage sig = mask_sigmoid(mask, cfg.beta1, cfg.mask_threshold);

    const bool cleanup = cfg.enable_inloop_morph && t > cfg.t_morph &&
                         t % cfg.t_morph_step == 0;
    detail::MergeTapes merge_tapes;
    const GrayImage mask_c =
        cleanup ? detail::inloop_cleanup(sig, inloop_se, merge_tapes) : sig;

    CornerTapes tapes;
    const CornerImages z = simulate_corners(mask_c, sim, &tapes);
    IltLoss loss = ilt_loss(z.z_nom, z.z_max, z.z_min, target_s, mask_c, cfg.beta3,
                            cfg.k_freq);

    if (!std::isfinite(loss.total)) {
      // keep the offending epoch in the trace so the blown-up term is visible
      EpochRecord rec;
      rec.epoch = t;
      rec.loss_total = loss.total;
      rec.loss_l2 = loss.term_l2;
      rec.loss_pvb = loss.term_pvb;
      rec.loss_hf = loss.term_hf;
      rec.grad_norm = std::numeric_limits<double>::quiet_NaN();
      result.trace.push_back(rec);
      throw DivergenceError("curvy_ilt: non-finite loss at epoch " + std::to_string(t),
                            std::move(result.trace));
    }

    // backward: loss -> resist sigmoids -> aerial adjoints -> (merge) -> mask sigmoid
    auto through_resist = [&](const GrayImage& dz, const GrayImage& zimg,
                              const AdjointTape& tape) {
      GrayImage di(dz.spec);
      for (std::size_t i = 0; i < dz.data.size(); ++i) {
        const double zi = zimg.data[i];
        di.data[i] = dz.data[i] * cfg.beta2 * zi * (1.0 - zi);
      }
      return litho_vjp(tape, di);
    };
    GrayImage g_mask_c = through_resist(loss.d_z_nom, z.z_nom, tapes.nominal);
    {
      const GrayImage g_outer = through_resist(loss.d_z_max, z.z_max, tapes.outer);
      const GrayImage g_inner = through_resist(loss.d_z_min, z.z_min, tapes.inner);
      for (std::size_t i = 0; i < g_mask_c.data.size(); ++i)
        g_mask_c.data[i] += g_outer.data[i] + g_inner.data[i] + loss.d_mask_c.data[i];
    }
    const GrayImage g_sig =
        cleanup ? detail::inloop_cleanup_vjp(merge_tapes, g_mask_c) : std::move(g_mask_c);
    GrayImage grad(mask.spec);
    for (std::size_t i = 0; i < grad.data.size(); ++i) {
      const double sg = sig.data[i];
      grad.data[i] = g_sig.data[i] * cfg.beta1 * sg * (1.0 - sg);
    }

    EpochRecord rec;
    rec.epoch = t;
    rec.loss_total = loss.total;
    rec.loss_l2 = loss.term_l2;
    rec.loss_pvb = loss.term_pvb;
    rec.loss_hf = loss.term_hf;
    rec.grad_norm = l2_norm(grad);
    rec.grad_corner_share = masked_norm_share(grad, corner_mask);
    result.trace.push_back(rec);

    if (snapshot) snapshot(t, mask_c, z.z_nom, z.z_max, z.z_min);

    const GrayImage update = adam_step(adam, grad, cfg.learning_rate, cfg.adam);
    for (std::size_t i = 0; i < mask.data.size(); ++i) mask.data[i] -= update.data[i];
  }

  // phase 3: upscale, binarize, full-resolution cleanup
  BinaryImage final_mask = binarize(upsample_bicubic(mask, s), cfg.mask_threshold);
  if (cfg.enable_postproc_morph) {
    const StructElem post_se = disc_element(detail::next_odd(s * cfg.k_morph));
    const BinaryImage opened = binary_open(final_mask, post_se);
    const BinaryImage closed = binary_close(final_mask, post_se);
    BinaryImage merged(final_mask.spec);
    for (std::size_t i = 0; i < merged.data.size(); ++i)
      merged.data[i] = final_mask.data[i] ? opened.data[i] : closed.data[i];
    final_mask = binary_close(binary_open(merged, post_se), post_se);
  }

  result.metrics = evaluate_mask(final_mask, target, litho, layout, epe);
  result.final_mask = std::move(final_mask);
  return result;
}

}  // namespace curvyilt
