#pragma once

#include <complex>
#include <vector>

#include "curvyilt/fft.hpp"
#include "curvyilt/grid.hpp"
#include "curvyilt/kernels.hpp"

namespace curvyilt {

struct LithoConfig {
  double d_th = 0.225;  // resist threshold intensity
  double beta2 = 50.0;  // resist sigmoid steepness
  ProcessCorners corners;

  void validate() const {
    if (!(d_th > 0.0)) throw ValidationError("LithoConfig: d_th must be > 0");
    if (!(beta2 > 0.0)) throw ValidationError("LithoConfig: beta2 must be > 0");
    corners.validate();
  }
};

// Everything the backward pass of one aerial simulation needs: the per-kernel
// complex fields plus its own copy of weights and window responses.
struct AdjointTape {
  GridSpec spec;
  double dose = 1.0;
  int freq_dim = 0;
  std::vector<double> weights;
  std::vector<std::complex<double>> responses;  // DC-centered windows, kernel-major
  std::vector<std::vector<std::complex<double>>> fields;  // per kernel, h*w
};

namespace detail {

// Map a DC-centered window offset onto the unshifted FFT index.
inline int wrap_mode(int offset, int n) { return ((offset % n) + n) % n; }

// Pull the DC-centered freq_dim^2 block out of an unshifted spectrum.
inline void window_extract(const std::complex<double>* spec, int h, int w, int wdim,
                           std::complex<double>* win) {
  const int c = wdim / 2;
  for (int u = 0; u < wdim; ++u) {
    const int row = wrap_mode(u - c, h);
    for (int v = 0; v < wdim; ++v)
      win[static_cast<std::size_t>(u) * wdim + v] =
          spec[static_cast<std::size_t>(row) * w + wrap_mode(v - c, w)];
  }
}

// Adjoint of window_extract: write the block back into a zeroed spectrum.
inline void window_embed(const std::complex<double>* win, int wdim,
                         std::complex<double>* spec, int h, int w) {
  const int c = wdim / 2;
  for (int u = 0; u < wdim; ++u) {
    const int row = wrap_mode(u - c, h);
    for (int v = 0; v < wdim; ++v)
      spec[static_cast<std::size_t>(row) * w + wrap_mode(v - c, w)] =
          win[static_cast<std::size_t>(u) * wdim + v];
  }
}

}  // namespace detail

// Aerial intensity I = dose * sum_i alpha_i |F^-1(window(F(M)) .* H_i)|^2.
// Only the DC-centered freq_dim^2 modes of the mask spectrum contribute; all
// other modes are zeroed, which is what makes the process a low-pass filter.
// Pass a tape to retain the per-kernel fields for litho_vjp.
inline GrayImage aerial_image(const GrayImage& mask, const KernelSet& ks, double dose,
                              AdjointTape* tape = nullptr) {
  ks.validate();
  const int h = mask.height(), w = mask.width();
  if (h < ks.freq_dim || w < ks.freq_dim)
    throw DimensionError("aerial_image: grid smaller than kernel freq_dim");

  const std::size_t n = mask.spec.pixel_count();
  Fft2D& fft = fft_plan(h, w);

  std::vector<std::complex<double>> buf(n), mask_spec(n);
  for (std::size_t i = 0; i < n; ++i) buf[i] = mask.data[i];
  fft.forward(buf.data(), mask_spec.data());

  const int wd = ks.freq_dim;
  std::vector<std::complex<double>> win(static_cast<std::size_t>(wd) * wd);
  detail::window_extract(mask_spec.data(), h, w, wd, win.data());

  if (tape) {
    tape->spec = mask.spec;
    tape->dose = dose;
    tape->freq_dim = wd;
    tape->weights = ks.weights;
    tape->responses = ks.responses;
    tape->fields.clear();
    tape->fields.reserve(ks.count);
  }

  GrayImage intensity(mask.spec);
  std::vector<std::complex<double>> filtered(win.size());
  std::vector<std::complex<double>> field(n);
  for (int k = 0; k < ks.count; ++k) {
    for (int u = 0; u < wd; ++u)
      for (int v = 0; v < wd; ++v)
        filtered[static_cast<std::size_t>(u) * wd + v] =
            win[static_cast<std::size_t>(u) * wd + v] * ks.resp(k, u, v);
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    detail::window_embed(filtered.data(), wd, buf.data(), h, w);
    fft.inverse(buf.data(), field.data());

    const double alpha = ks.weights[k];
    for (std::size_t i = 0; i < n; ++i) intensity.data[i] += alpha * std::norm(field[i]);
    if (tape) tape->fields.push_back(field);
  }
  for (std::size_t i = 0; i < n; ++i) intensity.data[i] *= dose;
  return intensity;
}

// Gradient of a scalar loss through aerial_image: upstream is dloss/dI, the
// result is dloss/dmask. For each kernel the complex field is reweighted by
// the upstream, pushed back through the frequency window (extract after a
// forward transform, conjugate response, embed, inverse transform) and the
// real part accumulated with weight 2*dose*alpha.
inline GrayImage litho_vjp(const AdjointTape& tape, const GrayImage& upstream) {
  require_same_grid(tape.spec, upstream.spec, "litho_vjp");
  const int h = tape.spec.height_px, w = tape.spec.width_px;
  const std::size_t n = tape.spec.pixel_count();
  const int wd = tape.freq_dim;
  Fft2D& fft = fft_plan(h, w);

  GrayImage grad(tape.spec);
  std::vector<std::complex<double>> buf(n), spec(n);
  std::vector<std::complex<double>> win(static_cast<std::size_t>(wd) * wd);
  for (std::size_t k = 0; k < tape.fields.size(); ++k) {
    const auto& field = tape.fields[k];
    for (std::size_t i = 0; i < n; ++i) buf[i] = upstream.data[i] * field[i];
    fft.forward(buf.data(), spec.data());
    detail::window_extract(spec.data(), h, w, wd, win.data());
    const auto* resp = &tape.responses[k * win.size()];
    for (std::size_t i = 0; i < win.size(); ++i) win[i] *= std::conj(resp[i]);
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    detail::window_embed(win.data(), wd, buf.data(), h, w);
    fft.inverse(buf.data(), spec.data());

    const double scale = 2.0 * tape.dose * tape.weights[k];
    for (std::size_t i = 0; i < n; ++i) grad.data[i] += scale * spec[i].real();
  }
  return grad;
}

// Constant-threshold resist: printed where intensity reaches the threshold.
inline BinaryImage resist_hard(const GrayImage& intensity, double d_th) {
  BinaryImage out(intensity.spec);
  for (std::size_t i = 0; i < intensity.data.size(); ++i)
    out.data[i] = intensity.data[i] >= d_th ? 1 : 0;
  return out;
}

// Sigmoid-relaxed resist, values in (0,1).
inline GrayImage resist_soft(const GrayImage& intensity, const LithoConfig& cfg) {
  GrayImage out(intensity.spec);
  for (std::size_t i = 0; i < intensity.data.size(); ++i)
    out.data[i] = 1.0 / (1.0 + std::exp(-cfg.beta2 * (intensity.data[i] - cfg.d_th)));
  return out;
}

// Continuous-tone mask relaxation.
inline GrayImage mask_sigmoid(const GrayImage& mask, double beta1, double mask_shift) {
  GrayImage out(mask.spec);
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    out.data[i] = 1.0 / (1.0 + std::exp(-beta1 * (mask.data[i] - mask_shift)));
  return out;
}

struct CornerImages {
  GrayImage z_nom, z_max, z_min;
};

struct CornerTapes {
  AdjointTape nominal, outer, inner;
};

// Soft resist images at the three process corners: nominal kernels at nominal
// dose, defocus kernels at the outer and inner doses.
inline CornerImages simulate_corners(const GrayImage& mask_c, const LithoConfig& cfg,
                                     CornerTapes* tapes = nullptr) {
  CornerImages out;
  out.z_nom = resist_soft(
      aerial_image(mask_c, cfg.corners.nominal.kernels, cfg.corners.nominal.dose,
                   tapes ? &tapes->nominal : nullptr),
      cfg);
  out.z_max = resist_soft(
      aerial_image(mask_c, cfg.corners.outer.kernels, cfg.corners.outer.dose,
                   tapes ? &tapes->outer : nullptr),
      cfg);
  out.z_min = resist_soft(
      aerial_image(mask_c, cfg.corners.inner.kernels, cfg.corners.inner.dose,
                   tapes ? &tapes->inner : nullptr),
      cfg);
  return out;
}

// Hard print at one corner; used for metric evaluation of final masks.
inline BinaryImage hard_print(const GrayImage& mask, const Corner& corner, double d_th) {
  return resist_hard(aerial_image(mask, corner.kernels, corner.dose), d_th);
}

}  // namespace curvyilt
