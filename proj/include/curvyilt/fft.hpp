#pragma once

#include <fftw3.h>

#include <complex>
#include <cstdint>
#include <cstring>
#include <memory>
#include <mutex>
#include <unordered_map>

namespace curvyilt {

// 2-D complex FFT pair on a fixed grid. Forward is unnormalized, inverse is
// scaled by 1/(h*w); the litho adjoint relies on exactly this pairing.
// Plans use FFTW_ESTIMATE so results are reproducible run to run.
class Fft2D {
 public:
  Fft2D(int height, int width) : h_(height), w_(width) {
    const std::size_t n = count();
    buf_in_ = fftw_alloc_complex(n);
    buf_out_ = fftw_alloc_complex(n);
    std::lock_guard<std::mutex> lock(planner_mutex());  // FFTW planner is not thread-safe
    fwd_ = fftw_plan_dft_2d(h_, w_, buf_in_, buf_out_, FFTW_FORWARD, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_2d(h_, w_, buf_in_, buf_out_, FFTW_BACKWARD, FFTW_ESTIMATE);
  }

  ~Fft2D() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(buf_in_);
    fftw_free(buf_out_);
  }

  Fft2D(const Fft2D&) = delete;
  Fft2D& operator=(const Fft2D&) = delete;

  std::size_t count() const { return static_cast<std::size_t>(h_) * w_; }

  void forward(const std::complex<double>* in, std::complex<double>* out) {
    run(fwd_, in, out, 1.0);
  }

  void inverse(const std::complex<double>* in, std::complex<double>* out) {
    run(inv_, in, out, 1.0 / static_cast<double>(count()));
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  void run(fftw_plan plan, const std::complex<double>* in, std::complex<double>* out,
           double scale) {
    const std::size_t n = count();
    std::memcpy(buf_in_, in, n * sizeof(fftw_complex));
    fftw_execute(plan);
    auto* o = reinterpret_cast<const std::complex<double>*>(buf_out_);
    if (scale == 1.0) {
      std::memcpy(out, o, n * sizeof(fftw_complex));
    } else {
      for (std::size_t i = 0; i < n; ++i) out[i] = o[i] * scale;
    }
  }

  int h_, w_;
  fftw_complex* buf_in_;
  fftw_complex* buf_out_;
  fftw_plan fwd_;
  fftw_plan inv_;
};

// Per-thread plan cache; plans are reused across calls on the same grid size.
inline Fft2D& fft_plan(int height, int width) {
  thread_local std::unordered_map<std::uint64_t, std::unique_ptr<Fft2D>> cache;
  const std::uint64_t key =
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(height)) << 32) |
      static_cast<std::uint32_t>(width);
  auto it = cache.find(key);
  if (it == cache.end())
    it = cache.emplace(key, std::make_unique<Fft2D>(height, width)).first;
  return *it->second;
}

}  // namespace curvyilt
