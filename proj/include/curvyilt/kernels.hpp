#pragma once

#include <zlib.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "curvyilt/errors.hpp"

namespace curvyilt {

enum class ConditionTag : std::uint8_t { nominal = 0, defocus = 1 };

// Transmission kernels for one process condition: weighted frequency-domain
// responses over a small DC-centered window. Keeping kernels in frequency
// space makes the forward model independent of the simulation grid size
// (any grid side >= freq_dim carries the same modes).
struct KernelSet {
  int count = 0;
  int freq_dim = 0;  // odd window side
  ConditionTag condition = ConditionTag::nominal;
  std::vector<double> weights;                   // count entries, >= 0
  std::vector<std::complex<double>> responses;   // count * freq_dim^2, row-major,
                                                 // kernel-major, DC at the center entry

  std::complex<double>& resp(int kernel, int u, int v) {
    return responses[(static_cast<std::size_t>(kernel) * freq_dim + u) * freq_dim + v];
  }
  std::complex<double> resp(int kernel, int u, int v) const {
    return responses[(static_cast<std::size_t>(kernel) * freq_dim + u) * freq_dim + v];
  }

  void validate() const {
    if (count < 1) throw ValidationError("KernelSet: count must be >= 1");
    if (freq_dim < 1 || freq_dim % 2 == 0)
      throw ValidationError("KernelSet: freq_dim must be odd and positive");
    if (weights.size() != static_cast<std::size_t>(count))
      throw ValidationError("KernelSet: weight vector length != count");
    if (responses.size() !=
        static_cast<std::size_t>(count) * freq_dim * freq_dim)
      throw ValidationError("KernelSet: response matrix size mismatch");
    for (double w : weights)
      if (!std::isfinite(w) || w < 0.0)
        throw ValidationError("KernelSet: weights must be finite and >= 0");
    for (const auto& c : responses)
      if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
        throw ValidationError("KernelSet: non-finite response entry");
  }
};

struct Corner {
  KernelSet kernels;
  double dose = 1.0;
};

// Nominal plus outer/inner dose corners; the defocus kernel set backs both
// extremes and dose scales the intensity.
struct ProcessCorners {
  Corner nominal;
  Corner outer;
  Corner inner;

  void validate() const {
    nominal.kernels.validate();
    outer.kernels.validate();
    inner.kernels.validate();
    if (!(inner.dose < nominal.dose && nominal.dose < outer.dose))
      throw ValidationError("ProcessCorners: doses must satisfy inner < nominal < outer");
    if (outer.kernels.freq_dim != nominal.kernels.freq_dim ||
        inner.kernels.freq_dim != nominal.kernels.freq_dim)
      throw ValidationError("ProcessCorners: kernel sets must share freq_dim");
  }
};

namespace detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f64le(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct ByteReader {
  const std::uint8_t* p;
  std::size_t left;

  void need(std::size_t n) const {
    if (left < n) throw FormatError("kernel container: truncated file");
  }
  std::uint32_t u32le() {
    need(4);
    std::uint32_t v = p[0] | (p[1] << 8) | (p[2] << 16) |
                      (static_cast<std::uint32_t>(p[3]) << 24);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    std::uint8_t v = *p++;
    --left;
    return v;
  }
  double f64le() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

}  // namespace detail

// Container layout (little-endian): magic "ILTK", version u32, count u32,
// freq_dim u32, condition u8, 3 reserved bytes, count f64 weights, then
// count*freq_dim^2 (re,im) f64 pairs, then CRC32 of the weight+response bytes.
inline constexpr std::uint32_t kKernelContainerVersion = 1;

inline std::string serialize_kernel_set(const KernelSet& ks) {
  ks.validate();
  std::string header;
  header += "ILTK";
  detail::put_u32le(header, kKernelContainerVersion);
  detail::put_u32le(header, static_cast<std::uint32_t>(ks.count));
  detail::put_u32le(header, static_cast<std::uint32_t>(ks.freq_dim));
  header.push_back(static_cast<char>(ks.condition));
  header.append(3, '\0');

  std::string payload;
  payload.reserve(ks.weights.size() * 8 + ks.responses.size() * 16);
  for (double w : ks.weights) detail::put_f64le(payload, w);
  for (const auto& c : ks.responses) {
    detail::put_f64le(payload, c.real());
    detail::put_f64le(payload, c.imag());
  }
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(payload.data()),
            static_cast<uInt>(payload.size())));
  std::string out = header + payload;
  detail::put_u32le(out, crc);
  return out;
}

inline void save_kernel_set(const KernelSet& ks, const std::string& path) {
  const std::string bytes = serialize_kernel_set(ks);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for write: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

inline KernelSet parse_kernel_set(const std::uint8_t* bytes, std::size_t size) {
  detail::ByteReader r{bytes, size};
  r.need(4);
  if (std::memcmp(r.p, "ILTK", 4) != 0)
    throw FormatError("kernel container: bad magic");
  r.p += 4;
  r.left -= 4;
  if (r.u32le() != kKernelContainerVersion)
    throw FormatError("kernel container: unsupported version");

  KernelSet ks;
  const std::uint32_t count = r.u32le();
  const std::uint32_t freq_dim = r.u32le();
  const std::uint8_t tag = r.u8();
  r.u8();
  r.u8();
  r.u8();
  if (tag > 1) throw FormatError("kernel container: unknown condition tag");
  if (count == 0 || count > (1u << 16) || freq_dim == 0 || freq_dim > (1u << 14))
    throw FormatError("kernel container: implausible dimensions");

  const std::size_t payload_len =
      static_cast<std::size_t>(count) * 8 +
      static_cast<std::size_t>(count) * freq_dim * freq_dim * 16;
  if (r.left != payload_len + 4)
    throw FormatError("kernel container: truncated or oversized file");
  const auto crc_expect = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(r.p), static_cast<uInt>(payload_len)));

  ks.count = static_cast<int>(count);
  ks.freq_dim = static_cast<int>(freq_dim);
  ks.condition = static_cast<ConditionTag>(tag);
  ks.weights.resize(count);
  for (auto& w : ks.weights) w = r.f64le();
  ks.responses.resize(static_cast<std::size_t>(count) * freq_dim * freq_dim);
  for (auto& c : ks.responses) {
    const double re = r.f64le();
    const double im = r.f64le();
    c = {re, im};
  }
  if (r.u32le() != crc_expect)
    throw FormatError("kernel container: checksum mismatch");
  ks.validate();
  return ks;
}

inline KernelSet load_kernel_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open kernel file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_kernel_set(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size());
}

// Self-contained Gaussian test kernels. The nominal response is a real,
// DC-centered Gaussian with peak 1 (a pure low-pass); the defocus response
// narrows the passband by `defocus_blur`, which blurs the printed image.
inline ProcessCorners synth_gaussian_kernels(int freq_dim, double sigma_freq,
                                             double defocus_blur) {
  if (freq_dim < 3 || freq_dim % 2 == 0)
    throw DomainError("synth_gaussian_kernels: freq_dim must be odd and >= 3");
  if (!(sigma_freq > 0.0)) throw DomainError("synth_gaussian_kernels: sigma_freq must be > 0");
  if (!(defocus_blur >= 1.0))
    throw DomainError("synth_gaussian_kernels: defocus_blur must be >= 1");

  auto make = [freq_dim](double sigma, ConditionTag tag) {
    KernelSet ks;
    ks.count = 1;
    ks.freq_dim = freq_dim;
    ks.condition = tag;
    ks.weights = {1.0};
    ks.responses.resize(static_cast<std::size_t>(freq_dim) * freq_dim);
    const int c = freq_dim / 2;
    for (int u = 0; u < freq_dim; ++u)
      for (int v = 0; v < freq_dim; ++v) {
        const double du = u - c, dv = v - c;
        ks.resp(0, u, v) = std::exp(-(du * du + dv * dv) / (2.0 * sigma * sigma));
      }
    return ks;
  };

  ProcessCorners pc;
  pc.nominal = {make(sigma_freq, ConditionTag::nominal), 1.0};
  const KernelSet defocus = make(sigma_freq / defocus_blur, ConditionTag::defocus);
  pc.outer = {defocus, 1.02};
  pc.inner = {defocus, 0.98};
  pc.validate();
  return pc;
}

// Plain-text exchange format for externally supplied kernels:
//   count freq_dim condition
// then per kernel: one weight line, then freq_dim^2 "re im" lines
// (row-major, DC-centered). '#' starts a comment.
inline KernelSet import_kernel_text(std::istream& in) {
  auto next = [&in]() -> std::string {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw FormatError("kernel text: unexpected end of input");
  };
  KernelSet ks;
  try {
    ks.count = std::stoi(next());
    ks.freq_dim = std::stoi(next());
  } catch (const std::logic_error&) {
    throw FormatError("kernel text: bad count/freq_dim");
  }
  const std::string cond = next();
  if (cond == "nominal")
    ks.condition = ConditionTag::nominal;
  else if (cond == "defocus")
    ks.condition = ConditionTag::defocus;
  else
    throw FormatError("kernel text: condition must be 'nominal' or 'defocus'");
  if (ks.count < 1 || ks.freq_dim < 1)
    throw FormatError("kernel text: bad count/freq_dim");

  auto next_f = [&next]() {
    try {
      return std::stod(next());
    } catch (const std::logic_error&) {
      throw FormatError("kernel text: bad numeric value");
    }
  };
  ks.weights.resize(ks.count);
  ks.responses.resize(static_cast<std::size_t>(ks.count) * ks.freq_dim * ks.freq_dim);
  std::size_t r = 0;
  for (int k = 0; k < ks.count; ++k) {
    ks.weights[k] = next_f();
    for (int i = 0; i < ks.freq_dim * ks.freq_dim; ++i) {
      const double re = next_f();
      const double im = next_f();
      ks.responses[r++] = {re, im};
    }
  }
  ks.validate();
  return ks;
}

inline KernelSet import_kernel_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open kernel text file: " + path);
  return import_kernel_text(in);
}

}  // namespace curvyilt
