#pragma once

// Spatial transforms applied independently to every frame of an attention
// volume (one text token's attention over the latent video grid).
//
// Geometric operations use inverse-mapped bilinear sampling about the frame
// centre ((W-1)/2, (H-1)/2) in pixel-centre coordinates. Out-of-frame taps
// are resolved per PaddingMode. Rotation is counter-clockwise as displayed
// (row 0 at the top).

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace attnbend {

struct AttentionVolume {
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;  // frame-major, then row-major

  AttentionVolume() = default;
  AttentionVolume(std::size_t f, std::size_t h, std::size_t w);
  AttentionVolume(std::size_t f, std::size_t h, std::size_t w, std::vector<double> values);

  std::size_t frame_size() const { return height * width; }
  double at(std::size_t f, std::size_t y, std::size_t x) const { return data[(f * height + y) * width + x]; }
  double& at(std::size_t f, std::size_t y, std::size_t x) { return data[(f * height + y) * width + x]; }

  bool same_shape(const AttentionVolume& o) const {
    return frames == o.frames && height == o.height && width == o.width;
  }
  friend bool operator==(const AttentionVolume&, const AttentionVolume&) = default;
};

enum class PaddingMode { kBorder, kZeros, kReflection };

PaddingMode parse_padding_mode(std::string_view name);
std::string_view to_string(PaddingMode mode);

enum class FlipAxis { kHorizontal, kVertical };

AttentionVolume apply_flip(const AttentionVolume& v, FlipAxis axis);
// dx, dy are fractions of the frame width / height; positive moves content
// right / down.
AttentionVolume apply_translate(const AttentionVolume& v, double dx, double dy, PaddingMode pad);
// factor > 1 magnifies, factor < 1 shrinks and pads the surround.
AttentionVolume apply_scale(const AttentionVolume& v, double factor, PaddingMode pad);
AttentionVolume apply_scale_xy(const AttentionVolume& v, double factor_x, double factor_y, PaddingMode pad);
AttentionVolume apply_rotate(const AttentionVolume& v, double degrees, PaddingMode pad);
AttentionVolume apply_blur(const AttentionVolume& v, double sigma, PaddingMode pad);
// Unsharp mask with a fixed inner blur of sigma 1.
AttentionVolume apply_sharpen(const AttentionVolume& v, double amount, PaddingMode pad);
AttentionVolume apply_amplify(const AttentionVolume& v, double factor);
// (1 - strength) * original + strength * bent
AttentionVolume blend(const AttentionVolume& original, const AttentionVolume& bent, double strength);

inline constexpr double kSharpenSigma = 1.0;
inline constexpr double kMinBlurSigma = 1e-6;
inline constexpr double kMinSharpenAmount = 1e-12;

// Normalized 1-D Gaussian taps, radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

// Maps an arbitrary integer tap onto [0, n) per the padding rule; returns -1
// when the tap reads zero.
long resolve_tap(long i, std::size_t n, PaddingMode pad);

}  // namespace attnbend
