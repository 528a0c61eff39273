#pragma once

// Brute-force reference implementations used only by tests. They share no
// code with the library's resampling, convolution or bending paths.

#include <cstddef>
#include <vector>

#include "attnbend/bend_ops.hpp"
#include "attnbend/bender.hpp"
#include "attnbend/sweep_config.hpp"
#include "attnbend/tensor.hpp"

namespace oracle {

using attnbend::AttentionVolume;
using attnbend::PaddingMode;
using attnbend::Tensor;

Tensor naive_matmul(const Tensor& a, const Tensor& b);

// Value of the frame at an integer tap, with out-of-range taps padded.
double padded_tap(const AttentionVolume& v, std::size_t frame, long y, long x, PaddingMode pad);

// Generic inverse-affine bilinear warp: output pixel p samples
//   centre + inv * (p - centre) - shift
// by summing the four neighbouring taps weighted (1-|dx|)(1-|dy|).
AttentionVolume inverse_affine(const AttentionVolume& v, const double inv[2][2], double shift_x, double shift_y,
                               PaddingMode pad);

AttentionVolume translate(const AttentionVolume& v, double dx, double dy, PaddingMode pad);
AttentionVolume scale(const AttentionVolume& v, double sx, double sy, PaddingMode pad);
AttentionVolume rotate(const AttentionVolume& v, double degrees, PaddingMode pad);
AttentionVolume integer_shift(const AttentionVolume& v, long shift_x, long shift_y, PaddingMode pad);

// Direct 2-D Gaussian convolution, O(H W k^2) per frame.
AttentionVolume dense_blur(const AttentionVolume& v, double sigma, PaddingMode pad);
AttentionVolume sharpen(const AttentionVolume& v, double amount, PaddingMode pad);

AttentionVolume transform(const AttentionVolume& v, const attnbend::BendOperation& op);

// Materializes each targeted column as a volume, transforms it with the
// oracles above, blends, writes back and optionally renormalizes.
Tensor bend_map(const Tensor& map, const attnbend::BendOperation& op, const attnbend::LatentGrid& grid,
                const std::vector<std::size_t>& columns);

// Counts records by walking every axis of every spec.
std::size_t count_records(const attnbend::SweepConfig& config);

}  // namespace oracle
