#include <doctest.h>

#include <cmath>

#include "mvi/image_ops.hpp"

using namespace mvi;
using namespace mvi::img;

namespace {

Tensor random_image(int64_t c, int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  Tensor t({c, h, w});
  for (float& v : t.data) v = static_cast<float>(rng.uniform());
  return t;
}

}  // namespace

TEST_CASE("rescale maps onto [0, 1] with endpoints hit") {
  Tensor x({1, 2, 2}, {2.0f, 4.0f, 6.0f, 10.0f});
  Tensor y = rescale_unit_interval(x);
  CHECK(y.data[0] == doctest::Approx(0.0));
  CHECK(y.data[3] == doctest::Approx(1.0));
  CHECK(y.data[1] == doctest::Approx(0.25));

  Tensor c({1, 2, 2}, {3.0f, 3.0f, 3.0f, 3.0f});
  Tensor yc = rescale_unit_interval(c);
  for (float v : yc.data) CHECK(v == 0.0f);

  CHECK_THROWS(rescale_unit_interval(Tensor({1, 0, 0})));
}

TEST_CASE("resize to the same size is the identity") {
  Tensor x = random_image(1, 7, 5, 2);
  Tensor y = resize_bilinear(x, 7, 5);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.data[size_t(i)] == doctest::Approx(x.data[size_t(i)]));
}

TEST_CASE("resize of a constant image is constant") {
  Tensor x({2, 5, 5});
  x.fill(0.7f);
  Tensor y = resize_bilinear(x, 11, 3);
  CHECK(y.shape == std::vector<int64_t>{2, 11, 3});
  for (float v : y.data) CHECK(v == doctest::Approx(0.7f));
}

TEST_CASE("2x upsample of a 2x2 ramp interpolates linearly") {
  Tensor x({1, 2, 2}, {0.0f, 1.0f, 0.0f, 1.0f});
  Tensor y = resize_bilinear(x, 2, 4);
  // Columns of the ramp widen monotonically from 0 to 1.
  CHECK(y.data[0] == doctest::Approx(0.0));
  CHECK(y.data[3] == doctest::Approx(1.0));
  CHECK(y.data[1] <= y.data[2]);
}

TEST_CASE("rotation by zero is the identity") {
  Tensor x = random_image(1, 9, 9, 3);
  Tensor y = rotate_bilinear(x, 0.0);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.data[size_t(i)] == doctest::Approx(x.data[size_t(i)]).epsilon(1e-5));
}

TEST_CASE("rotation keeps the center pixel and fills corners with zero") {
  Tensor x({1, 9, 9});
  x.fill(1.0f);
  x.data[4 * 9 + 4] = 0.5f;
  Tensor y = rotate_bilinear(x, M_PI / 4);
  CHECK(y.data[4 * 9 + 4] == doctest::Approx(0.5f).epsilon(1e-3));
  CHECK(y.data[0] == doctest::Approx(0.0));  // corner leaves the frame
}

TEST_CASE("a quarter turn permutes pixels without loss") {
  Tensor x = random_image(1, 11, 11, 5);
  Tensor y = rotate_bilinear(x, M_PI / 2);
  double sx = 0, sy = 0;
  for (float v : x.data) sx += v;
  for (float v : y.data) sy += v;
  CHECK(sy == doctest::Approx(sx).epsilon(1e-3));
}

TEST_CASE("gaussian smoothing preserves constants and the mean") {
  Tensor c({1, 8, 8});
  c.fill(0.4f);
  Tensor y = gaussian_smooth(c, 1.5);
  for (float v : y.data) CHECK(v == doctest::Approx(0.4f).epsilon(1e-5));

  // Variance shrinks on a noisy image.
  Tensor x = random_image(1, 16, 16, 9);
  Tensor s = gaussian_smooth(x, 2.0);
  auto variance = [](const Tensor& t) {
    double m = 0;
    for (float v : t.data) m += v;
    m /= double(t.numel());
    double var = 0;
    for (float v : t.data) var += (v - m) * (v - m);
    return var / double(t.numel());
  };
  CHECK(variance(s) < variance(x));
}

TEST_CASE("affine warp with zero magnitudes is the identity") {
  Tensor x = random_image(1, 8, 8, 4);
  Rng rng(1);
  Tensor y = affine_warp(x, 0.0, 0.0, rng);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.data[size_t(i)] == doctest::Approx(x.data[size_t(i)]).epsilon(1e-5));
}

TEST_CASE("intensity bias stays in [0, 1] and near the input") {
  Tensor x = random_image(1, 12, 12, 6);
  Rng rng(2);
  Tensor y = intensity_bias(x, 0.2, 3, rng);
  for (int64_t i = 0; i < x.numel(); ++i) {
    CHECK(y.data[size_t(i)] >= 0.0f);
    CHECK(y.data[size_t(i)] <= 1.0f);
    CHECK(std::fabs(y.data[size_t(i)] - x.data[size_t(i)]) <=
          0.2f * x.data[size_t(i)] + 1e-5f);
  }
}

TEST_CASE("additive noise respects its bounds") {
  Tensor x({1, 6, 6});
  x.fill(0.5f);
  Rng rng(3);
  Tensor u = additive_noise(x, "uniform", 0.3, rng);
  for (float v : u.data) {
    CHECK(v >= 0.5f);
    CHECK(v <= 0.8f + 1e-6f);
  }
  Tensor g = additive_noise(x, "gaussian", 0.1, rng);
  for (float v : g.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  CHECK_THROWS(additive_noise(x, "cauchy", 0.1, rng));
}
