#include <random>

#include "doctest.h"
#include "../oracles/oracles.hpp"
#include "../test_support.hpp"
#include "attnbend/bend_ops.hpp"

using namespace attnbend;

namespace {

AttentionVolume frame2x2() { return AttentionVolume(1, 2, 2, {1, 2, 3, 4}); }

AttentionVolume one_hot(std::size_t h, std::size_t w, std::size_t y, std::size_t x) {
  AttentionVolume v(1, h, w);
  v.at(0, y, x) = 1.0;
  return v;
}

AttentionVolume uniform(std::size_t f, std::size_t h, std::size_t w, double value) {
  return AttentionVolume(f, h, w, std::vector<double>(f * h * w, value));
}

constexpr PaddingMode kPads[] = {PaddingMode::kBorder, PaddingMode::kZeros, PaddingMode::kReflection};

}  // namespace

TEST_CASE("padding names round trip") {
  for (PaddingMode p : kPads) CHECK(parse_padding_mode(to_string(p)) == p);
  CHECK_THROWS(parse_padding_mode("wrap"));
}

TEST_CASE("resolve_tap") {
  CHECK(resolve_tap(-1, 4, PaddingMode::kBorder) == 0);
  CHECK(resolve_tap(6, 4, PaddingMode::kBorder) == 3);
  CHECK(resolve_tap(-1, 4, PaddingMode::kZeros) == -1);
  CHECK(resolve_tap(-1, 4, PaddingMode::kReflection) == 1);
  CHECK(resolve_tap(4, 4, PaddingMode::kReflection) == 2);
  CHECK(resolve_tap(-7, 4, PaddingMode::kReflection) == 1);
  CHECK(resolve_tap(5, 1, PaddingMode::kReflection) == 0);
}

TEST_CASE("flip") {
  CHECK(apply_flip(frame2x2(), FlipAxis::kHorizontal).data == std::vector<double>{2, 1, 4, 3});
  CHECK(apply_flip(frame2x2(), FlipAxis::kVertical).data == std::vector<double>{3, 4, 1, 2});
  std::mt19937_64 gen(3);
  for (int i = 0; i < 20; ++i) {
    const auto v = testing::random_volume(gen, 3, 5, 7);
    CHECK(apply_flip(apply_flip(v, FlipAxis::kHorizontal), FlipAxis::kHorizontal) == v);
    CHECK(apply_flip(apply_flip(v, FlipAxis::kVertical), FlipAxis::kVertical) == v);
  }
}

TEST_CASE("translate") {
  std::mt19937_64 gen(4);
  const auto v = testing::random_volume(gen, 2, 4, 6);
  for (PaddingMode p : kPads) CHECK(apply_translate(v, 0.0, 0.0, p) == v);

  const AttentionVolume row(1, 1, 2, {1, 2});
  CHECK(apply_translate(row, 0.5, 0.0, PaddingMode::kBorder).data == std::vector<double>{1, 1});
  CHECK(apply_translate(row, 0.5, 0.0, PaddingMode::kZeros).data == std::vector<double>{0, 1});

  // Whole-pixel shifts agree with the index-shift oracle exactly.
  for (PaddingMode p : kPads) {
    CHECK(apply_translate(v, 2.0 / 6.0, -1.0 / 4.0, p) == oracle::integer_shift(v, 2, -1, p));
  }
}

TEST_CASE("scale") {
  std::mt19937_64 gen(5);
  const auto v = testing::random_volume(gen, 2, 5, 4);
  for (PaddingMode p : kPads) CHECK(apply_scale(v, 1.0, p) == v);
  CHECK_THROWS(apply_scale(v, 0.0, PaddingMode::kBorder));
  CHECK_THROWS(apply_scale(v, -1.0, PaddingMode::kBorder));

  const auto hot = one_hot(4, 4, 0, 0);
  const auto shrunk = apply_scale(hot, 0.5, PaddingMode::kZeros);
  CHECK(testing::max_abs_diff(shrunk, oracle::scale(hot, 0.5, 0.5, PaddingMode::kZeros)) < 1e-12);
  // Mass pulled off the corner toward the centre.
  CHECK(shrunk.at(0, 0, 0) < 1.0);
  CHECK(shrunk.at(0, 1, 1) > 0.0);

  for (double factor : {0.3, 0.5, 1.7, 3.0}) {
    const auto u = uniform(2, 6, 5, 0.25);
    CHECK(testing::max_abs_diff(apply_scale(u, factor, PaddingMode::kBorder), u) < 1e-12);
  }
}

TEST_CASE("rotate") {
  std::mt19937_64 gen(6);
  const auto v = testing::random_volume(gen, 2, 5, 5);
  for (PaddingMode p : kPads) {
    CHECK(apply_rotate(v, 0.0, p) == v);
    CHECK(testing::max_abs_diff(apply_rotate(v, 360.0, p), v) < 1e-9);
  }
  const auto r = apply_rotate(frame2x2(), 90.0, PaddingMode::kBorder);
  CHECK(testing::max_abs_diff(r, oracle::rotate(frame2x2(), 90.0, PaddingMode::kBorder)) < 1e-12);
  // Counter-clockwise on screen: the right column becomes the top row.
  CHECK(r.data == std::vector<double>{2, 4, 1, 3});
}

TEST_CASE("blur") {
  std::mt19937_64 gen(7);
  const auto v = testing::random_volume(gen, 2, 5, 6);
  for (PaddingMode p : kPads) CHECK(apply_blur(v, 0.0, p) == v);
  CHECK(apply_blur(v, 5e-7, PaddingMode::kBorder) == v);

  const auto u = uniform(1, 7, 7, 0.3);
  CHECK(testing::max_abs_diff(apply_blur(u, 1.5, PaddingMode::kBorder), u) < 1e-9);

  const auto hot = one_hot(5, 5, 2, 2);
  for (PaddingMode p : kPads)
    CHECK(testing::max_abs_diff(apply_blur(hot, 1.0, p), oracle::dense_blur(hot, 1.0, p)) < 1e-9);

  const auto k = gaussian_kernel(1.0);
  CHECK(k.size() == 7);
  double total = 0.0;
  for (double w : k) total += w;
  CHECK(std::abs(total - 1.0) < 1e-15);
  CHECK(gaussian_kernel(0.4).size() == 5);
}

TEST_CASE("sharpen") {
  std::mt19937_64 gen(8);
  const auto v = testing::random_volume(gen, 2, 5, 6);
  for (PaddingMode p : kPads) CHECK(apply_sharpen(v, 0.0, p) == v);

  const auto u = uniform(1, 6, 6, 0.7);
  CHECK(testing::max_abs_diff(apply_sharpen(u, 2.0, PaddingMode::kBorder), u) < 1e-9);

  const auto hot = one_hot(6, 5, 2, 3);
  for (PaddingMode p : kPads)
    CHECK(testing::max_abs_diff(apply_sharpen(hot, 1.0, p), oracle::sharpen(hot, 1.0, p)) < 1e-9);
  // The unsharp mask overshoots below zero next to a spike.
  CHECK(apply_sharpen(hot, 1.0, PaddingMode::kZeros).at(0, 2, 2) < 0.0);
}

TEST_CASE("amplify") {
  const AttentionVolume v(1, 1, 2, {0.1, 0.3});
  CHECK(apply_amplify(v, 1.0) == v);
  const auto twice = apply_amplify(v, 2.0);
  CHECK(twice.data[0] == doctest::Approx(0.2));
  CHECK(twice.data[1] == doctest::Approx(0.6));
  CHECK(apply_amplify(v, 0.0).data == std::vector<double>{0, 0});
}

TEST_CASE("blend") {
  std::mt19937_64 gen(9);
  const auto a = testing::random_volume(gen, 2, 3, 4);
  const auto b = testing::random_volume(gen, 2, 3, 4);
  CHECK(blend(a, b, 0.0) == a);
  CHECK(blend(a, b, 1.0) == b);
  const AttentionVolume o(1, 1, 2, {0, 2});
  const AttentionVolume t(1, 1, 2, {4, 0});
  CHECK(blend(o, t, 0.5).data == std::vector<double>{2, 1});
  CHECK_THROWS(blend(a, AttentionVolume(1, 3, 4), 0.5));
}

TEST_CASE("transforms match the oracles on random volumes") {
  std::mt19937_64 gen(10);
  std::uniform_int_distribution<std::size_t> extent(1, 8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 60; ++trial) {
    const auto v = testing::random_volume(gen, extent(gen), extent(gen), extent(gen));
    const PaddingMode p = kPads[trial % 3];
    const double dx = unit(gen) - 0.5, dy = unit(gen) - 0.5;
    CHECK(testing::max_abs_diff(apply_translate(v, dx, dy, p), oracle::translate(v, dx, dy, p)) < 1e-9);
    const double s = 0.25 + 2.5 * unit(gen);
    CHECK(testing::max_abs_diff(apply_scale(v, s, p), oracle::scale(v, s, s, p)) < 1e-9);
    const double deg = 360.0 * unit(gen) - 180.0;
    CHECK(testing::max_abs_diff(apply_rotate(v, deg, p), oracle::rotate(v, deg, p)) < 1e-9);
    const double sigma = 2.0 * unit(gen);
    CHECK(testing::max_abs_diff(apply_blur(v, sigma, p), oracle::dense_blur(v, sigma, p)) < 1e-9);
    const double amount = 3.0 * unit(gen);
    CHECK(testing::max_abs_diff(apply_sharpen(v, amount, p), oracle::sharpen(v, amount, p)) < 1e-9);
  }
}

TEST_CASE("identity parameters are bit-exact on random volumes") {
  std::mt19937_64 gen(40);
  std::uniform_int_distribution<std::size_t> extent(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto v = testing::random_volume(gen, extent(gen), extent(gen), extent(gen), -1.0, 1.0);
    const PaddingMode p = kPads[trial % 3];
    CHECK(apply_scale(v, 1.0, p) == v);
    CHECK(apply_scale_xy(v, 1.0, 1.0, p) == v);
    CHECK(apply_rotate(v, 0.0, p) == v);
    CHECK(apply_translate(v, 0.0, 0.0, p) == v);
    CHECK(apply_blur(v, 0.0, p) == v);
    CHECK(apply_sharpen(v, 0.0, p) == v);
    CHECK(apply_amplify(v, 1.0) == v);
    CHECK(blend(v, apply_rotate(v, 30.0, p), 0.0) == v);
  }
}

TEST_CASE("constant volumes are fixed points under border padding") {
  std::mt19937_64 gen(41);
  std::uniform_int_distribution<std::size_t> extent(1, 8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto u = uniform(extent(gen), extent(gen), extent(gen), unit(gen));
    const auto b = PaddingMode::kBorder;
    CHECK(testing::max_abs_diff(apply_scale(u, 0.2 + 3.0 * unit(gen), b), u) < 1e-9);
    CHECK(testing::max_abs_diff(apply_rotate(u, 360.0 * unit(gen), b), u) < 1e-9);
    CHECK(testing::max_abs_diff(apply_translate(u, unit(gen) - 0.5, unit(gen) - 0.5, b), u) < 1e-9);
    CHECK(testing::max_abs_diff(apply_blur(u, 3.0 * unit(gen), b), u) < 1e-9);
    CHECK(testing::max_abs_diff(apply_sharpen(u, 3.0 * unit(gen), b), u) < 1e-9);
    CHECK(apply_flip(u, FlipAxis::kVertical) == u);
  }
}

TEST_CASE("whole-pixel translation equals index shifting") {
  std::mt19937_64 gen(42);
  std::uniform_int_distribution<std::size_t> extent(1, 8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto v = testing::random_volume(gen, extent(gen), extent(gen), extent(gen));
    const long w = static_cast<long>(v.width), h = static_cast<long>(v.height);
    std::uniform_int_distribution<long> sx(-w, w), sy(-h, h);
    const long kx = sx(gen), ky = sy(gen);
    const PaddingMode p = kPads[trial % 3];
    const auto got = apply_translate(v, static_cast<double>(kx) / static_cast<double>(w),
                                     static_cast<double>(ky) / static_cast<double>(h), p);
    CHECK(testing::max_abs_diff(got, oracle::integer_shift(v, kx, ky, p)) < 1e-12);
  }
}
