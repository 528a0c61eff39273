#include "attnbend/bend_ops.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "attnbend/errors.hpp"
#include "attnbend/kernels.hpp"

namespace attnbend {

AttentionVolume::AttentionVolume(std::size_t f, std::size_t h, std::size_t w)
    : frames(f), height(h), width(w), data(f * h * w, 0.0) {}

AttentionVolume::AttentionVolume(std::size_t f, std::size_t h, std::size_t w, std::vector<double> values)
    : frames(f), height(h), width(w), data(std::move(values)) {
  if (data.size() != f * h * w) {
    throw ShapeError("attention volume data length " + std::to_string(data.size()) + " != " +
                     std::to_string(f) + "x" + std::to_string(h) + "x" + std::to_string(w));
  }
}

PaddingMode parse_padding_mode(std::string_view name) {
  if (name == "border") return PaddingMode::kBorder;
  if (name == "zeros") return PaddingMode::kZeros;
  if (name == "reflection") return PaddingMode::kReflection;
  throw ConfigError("unknown padding mode '" + std::string(name) + "' (expected border, zeros or reflection)");
}

std::string_view to_string(PaddingMode mode) {
  switch (mode) {
    case PaddingMode::kBorder: return "border";
    case PaddingMode::kZeros: return "zeros";
    case PaddingMode::kReflection: return "reflection";
  }
  return "border";
}

long resolve_tap(long i, std::size_t n, PaddingMode pad) {
  const long len = static_cast<long>(n);
  if (i >= 0 && i < len) return i;
  switch (pad) {
    case PaddingMode::kZeros:
      return -1;
    case PaddingMode::kBorder:
      return i < 0 ? 0 : len - 1;
    case PaddingMode::kReflection: {
      // Mirror about the edge pixel centres: -1 -> 1, n -> n-2.
      if (len == 1) return 0;
      const long period = 2 * (len - 1);
      long m = i % period;
      if (m < 0) m += period;
      return m < len ? m : period - m;
    }
  }
  return -1;
}

namespace {

double tap(const double* frame, std::size_t h, std::size_t w, long y, long x, PaddingMode pad) {
  const long ry = resolve_tap(y, h, pad);
  const long rx = resolve_tap(x, w, pad);
  if (ry < 0 || rx < 0) return 0.0;
  return frame[static_cast<std::size_t>(ry) * w + static_cast<std::size_t>(rx)];
}

double sample_bilinear(const double* frame, std::size_t h, std::size_t w, double sy, double sx, PaddingMode pad) {
  const double fy0 = std::floor(sy);
  const double fx0 = std::floor(sx);
  const double ty = sy - fy0;
  const double tx = sx - fx0;
  const long y0 = static_cast<long>(fy0);
  const long x0 = static_cast<long>(fx0);
  const double top = (1.0 - tx) * tap(frame, h, w, y0, x0, pad) + tx * tap(frame, h, w, y0, x0 + 1, pad);
  if (ty == 0.0) return top;
  const double bottom = (1.0 - tx) * tap(frame, h, w, y0 + 1, x0, pad) + tx * tap(frame, h, w, y0 + 1, x0 + 1, pad);
  return (1.0 - ty) * top + ty * bottom;
}

// Inverse map from output pixel (x, y) to source coordinates:
//   src = centre + M * (dst - centre) - offset
struct InverseAffine {
  double m00, m01, m10, m11;
  double offset_x, offset_y;
};

AttentionVolume resample(const AttentionVolume& v, const InverseAffine& t, PaddingMode pad) {
  AttentionVolume out(v.frames, v.height, v.width);
  const double cx = (static_cast<double>(v.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(v.height) - 1.0) / 2.0;
  for (std::size_t f = 0; f < v.frames; ++f) {
    const double* src = v.data.data() + f * v.frame_size();
    double* dst = out.data.data() + f * v.frame_size();
    for (std::size_t y = 0; y < v.height; ++y) {
      const double u_y = static_cast<double>(y) - cy;
      for (std::size_t x = 0; x < v.width; ++x) {
        const double u_x = static_cast<double>(x) - cx;
        const double sx = cx + t.m00 * u_x + t.m01 * u_y - t.offset_x;
        const double sy = cy + t.m10 * u_x + t.m11 * u_y - t.offset_y;
        dst[y * v.width + x] = sample_bilinear(src, v.height, v.width, sy, sx, pad);
      }
    }
  }
  return out;
}

// Exact at multiples of 90 degrees so quarter turns are pure permutations.
void sincos_degrees(double degrees, double& s, double& c) {
  double r = std::fmod(degrees, 360.0);
  if (r < 0) r += 360.0;
  if (r == 0.0) { s = 0.0; c = 1.0; return; }
  if (r == 90.0) { s = 1.0; c = 0.0; return; }
  if (r == 180.0) { s = 0.0; c = -1.0; return; }
  if (r == 270.0) { s = -1.0; c = 0.0; return; }
  const double rad = r * (std::numbers::pi / 180.0);
  s = std::sin(rad);
  c = std::cos(rad);
}

// Separable convolution of every frame with a symmetric 1-D kernel.
AttentionVolume convolve_separable(const AttentionVolume& v, const std::vector<double>& taps, PaddingMode pad) {
  const long radius = static_cast<long>(taps.size() / 2);
  const std::size_t klen = taps.size();
  AttentionVolume tmp(v.frames, v.height, v.width);
  AttentionVolume out(v.frames, v.height, v.width);
  std::vector<double> line;

  for (std::size_t f = 0; f < v.frames; ++f) {
    const double* src = v.data.data() + f * v.frame_size();
    double* mid = tmp.data.data() + f * v.frame_size();
    double* dst = out.data.data() + f * v.frame_size();

    line.assign(v.width + klen - 1, 0.0);
    for (std::size_t y = 0; y < v.height; ++y) {
      for (long i = 0; i < static_cast<long>(line.size()); ++i) {
        const long rx = resolve_tap(i - radius, v.width, pad);
        line[i] = rx < 0 ? 0.0 : src[y * v.width + static_cast<std::size_t>(rx)];
      }
      for (std::size_t x = 0; x < v.width; ++x) mid[y * v.width + x] = kernels::dot(line.data() + x, taps.data(), klen);
    }

    line.assign(v.height + klen - 1, 0.0);
    for (std::size_t x = 0; x < v.width; ++x) {
      for (long i = 0; i < static_cast<long>(line.size()); ++i) {
        const long ry = resolve_tap(i - radius, v.height, pad);
        line[i] = ry < 0 ? 0.0 : mid[static_cast<std::size_t>(ry) * v.width + x];
      }
      for (std::size_t y = 0; y < v.height; ++y) dst[y * v.width + x] = kernels::dot(line.data() + y, taps.data(), klen);
    }
  }
  return out;
}

}  // namespace

AttentionVolume apply_flip(const AttentionVolume& v, FlipAxis axis) {
  AttentionVolume out(v.frames, v.height, v.width);
  for (std::size_t f = 0; f < v.frames; ++f) {
    for (std::size_t y = 0; y < v.height; ++y) {
      for (std::size_t x = 0; x < v.width; ++x) {
        out.at(f, y, x) = axis == FlipAxis::kHorizontal ? v.at(f, y, v.width - 1 - x) : v.at(f, v.height - 1 - y, x);
      }
    }
  }
  return out;
}

AttentionVolume apply_translate(const AttentionVolume& v, double dx, double dy, PaddingMode pad) {
  if (!std::isfinite(dx) || !std::isfinite(dy)) throw std::invalid_argument("translate: offsets must be finite");
  if (dx == 0.0 && dy == 0.0) return v;
  return resample(v, {1.0, 0.0, 0.0, 1.0, dx * static_cast<double>(v.width), dy * static_cast<double>(v.height)}, pad);
}

AttentionVolume apply_scale_xy(const AttentionVolume& v, double factor_x, double factor_y, PaddingMode pad) {
  if (!(factor_x > 0.0) || !(factor_y > 0.0) || !std::isfinite(factor_x) || !std::isfinite(factor_y)) {
    throw std::invalid_argument("scale: factor must be positive and finite");
  }
  if (factor_x == 1.0 && factor_y == 1.0) return v;
  return resample(v, {1.0 / factor_x, 0.0, 0.0, 1.0 / factor_y, 0.0, 0.0}, pad);
}

AttentionVolume apply_scale(const AttentionVolume& v, double factor, PaddingMode pad) {
  return apply_scale_xy(v, factor, factor, pad);
}

AttentionVolume apply_rotate(const AttentionVolume& v, double degrees, PaddingMode pad) {
  if (!std::isfinite(degrees)) throw std::invalid_argument("rotate: angle must be finite");
  double s = 0.0, c = 1.0;
  sincos_degrees(degrees, s, c);
  if (s == 0.0 && c == 1.0) return v;
  // Screen rows grow downward, so a counter-clockwise turn samples from
  // (c*u_x - s*u_y, s*u_x + c*u_y).
  return resample(v, {c, -s, s, c, 0.0, 0.0}, pad);
}

std::vector<double> gaussian_kernel(double sigma) {
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double w = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    taps[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (double& w : taps) w /= total;
  return taps;
}

AttentionVolume apply_blur(const AttentionVolume& v, double sigma, PaddingMode pad) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("blur: sigma must be >= 0");
  if (sigma < kMinBlurSigma) return v;
  return convolve_separable(v, gaussian_kernel(sigma), pad);
}

AttentionVolume apply_sharpen(const AttentionVolume& v, double amount, PaddingMode pad) {
  if (!(amount >= 0.0) || !std::isfinite(amount)) throw std::invalid_argument("sharpen: amount must be >= 0");
  if (amount < kMinSharpenAmount) return v;
  const AttentionVolume smooth = apply_blur(v, kSharpenSigma, pad);
  AttentionVolume out = v;
  // v + amount * (v - blur(v))
  kernels::scale(1.0 + amount, out.data.data(), out.data.size());
  kernels::axpy(-amount, smooth.data.data(), out.data.data(), out.data.size());
  return out;
}

AttentionVolume apply_amplify(const AttentionVolume& v, double factor) {
  if (!(factor >= 0.0) || !std::isfinite(factor)) throw std::invalid_argument("amplify: factor must be >= 0");
  if (factor == 1.0) return v;
  AttentionVolume out = v;
  kernels::scale(factor, out.data.data(), out.data.size());
  return out;
}

AttentionVolume blend(const AttentionVolume& original, const AttentionVolume& bent, double strength) {
  if (!original.same_shape(bent) || original.data.size() != bent.data.size()) {
    throw ShapeError("blend: volume shapes differ");
  }
  if (!(strength >= 0.0 && strength <= 1.0)) throw std::invalid_argument("blend: strength must be in [0, 1]");
  if (strength == 0.0) return original;
  if (strength == 1.0) return bent;
  AttentionVolume out(original.frames, original.height, original.width);
  kernels::lerp(original.data.data(), bent.data.data(), strength, out.data.data(), out.data.size());
  return out;
}

}  // namespace attnbend
