#include "mvi/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mvi::img {

namespace {

void check_chw(const Tensor& t) {
  if (t.ndim() != 3 || t.numel() == 0)
    throw std::invalid_argument("image op: expect non-empty (C,H,W) tensor");
}

float sample_bilinear(const float* plane, int64_t h, int64_t w, double y,
                      double x) {
  // Zero outside the frame.
  if (y <= -1.0 || y >= static_cast<double>(h) || x <= -1.0 ||
      x >= static_cast<double>(w))
    return 0.0f;
  int64_t y0 = static_cast<int64_t>(std::floor(y));
  int64_t x0 = static_cast<int64_t>(std::floor(x));
  double fy = y - y0, fx = x - x0;
  auto at = [&](int64_t yy, int64_t xx) -> double {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
    return plane[yy * w + xx];
  };
  double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
             fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
  return static_cast<float>(v);
}

// Applies the inverse map (out pixel -> source coordinates) per channel.
template <typename MapFn>
Tensor warp(const Tensor& image, int64_t oh, int64_t ow, MapFn&& map) {
  int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out({c, oh, ow});
  for (int64_t ch = 0; ch < c; ++ch) {
    const float* src = image.ptr() + ch * h * w;
    float* dst = out.ptr() + ch * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        auto [sy, sx] = map(static_cast<double>(oy), static_cast<double>(ox));
        dst[oy * ow + ox] = sample_bilinear(src, h, w, sy, sx);
      }
  }
  return out;
}

}  // namespace

Tensor rescale_unit_interval(const Tensor& image) {
  if (image.numel() == 0)
    throw std::invalid_argument("rescale_unit_interval: empty image");
  auto [mn_it, mx_it] = std::minmax_element(image.data.begin(), image.data.end());
  float mn = *mn_it, mx = *mx_it;
  Tensor out(image.shape);
  if (mx == mn) return out;  // constant image -> zeros
  float inv = 1.0f / (mx - mn);
  for (int64_t i = 0; i < image.numel(); ++i)
    out.data[i] = (image.data[i] - mn) * inv;
  return out;
}

Tensor resize_bilinear(const Tensor& image, int64_t out_h, int64_t out_w) {
  check_chw(image);
  int64_t h = image.dim(1), w = image.dim(2);
  double sy = static_cast<double>(h) / out_h;
  double sx = static_cast<double>(w) / out_w;
  return warp(image, out_h, out_w, [&](double oy, double ox) {
    // Align pixel centers, clamping so border pixels replicate the edge
    // instead of blending with out-of-frame zeros.
    double iy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, double(h - 1));
    double ix = std::clamp((ox + 0.5) * sx - 0.5, 0.0, double(w - 1));
    return std::pair<double, double>(iy, ix);
  });
}

Tensor rotate_bilinear(const Tensor& image, double angle) {
  check_chw(image);
  int64_t h = image.dim(1), w = image.dim(2);
  double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  double ca = std::cos(angle), sa = std::sin(angle);
  return warp(image, h, w, [&](double oy, double ox) {
    double dy = oy - cy, dx = ox - cx;
    // Inverse rotation.
    return std::pair<double, double>(cy + ca * dy + sa * dx,
                                     cx - sa * dy + ca * dx);
  });
}

Tensor gaussian_smooth(const Tensor& image, double sigma) {
  check_chw(image);
  if (sigma <= 0.0) return image;
  int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  int64_t radius = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(3 * sigma)));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int64_t i = -radius; i <= radius; ++i) {
    k[static_cast<size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[static_cast<size_t>(i + radius)];
  }
  for (double& v : k) v /= sum;

  Tensor tmp(image.shape), out(image.shape);
  for (int64_t ch = 0; ch < c; ++ch) {
    const float* src = image.ptr() + ch * h * w;
    float* mid = tmp.ptr() + ch * h * w;
    float* dst = out.ptr() + ch * h * w;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int64_t i = -radius; i <= radius; ++i) {
          int64_t xx = std::clamp<int64_t>(x + i, 0, w - 1);
          acc += k[static_cast<size_t>(i + radius)] * src[y * w + xx];
        }
        mid[y * w + x] = static_cast<float>(acc);
      }
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int64_t i = -radius; i <= radius; ++i) {
          int64_t yy = std::clamp<int64_t>(y + i, 0, h - 1);
          acc += k[static_cast<size_t>(i + radius)] * mid[yy * w + x];
        }
        dst[y * w + x] = static_cast<float>(acc);
      }
  }
  return out;
}

Tensor affine_warp(const Tensor& image, double max_rotation, double max_shift,
                   Rng& rng) {
  check_chw(image);
  double angle = rng.uniform(-max_rotation, max_rotation);
  double ty = rng.uniform(-max_shift, max_shift);
  double tx = rng.uniform(-max_shift, max_shift);
  int64_t h = image.dim(1), w = image.dim(2);
  double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  double ca = std::cos(angle), sa = std::sin(angle);
  return warp(image, h, w, [&](double oy, double ox) {
    double dy = oy - ty - cy, dx = ox - tx - cx;
    return std::pair<double, double>(cy + ca * dy + sa * dx,
                                     cx - sa * dy + ca * dx);
  });
}

Tensor intensity_bias(const Tensor& image, double strength, int grid_n,
                      Rng& rng) {
  check_chw(image);
  if (grid_n < 2) throw std::invalid_argument("intensity_bias: grid_n >= 2");
  int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  std::vector<double> grid(static_cast<size_t>(grid_n) * grid_n);
  for (double& g : grid) g = 1.0 + rng.uniform(-strength, strength);

  Tensor out(image.shape);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double gy = (grid_n - 1) * static_cast<double>(y) / (h - 1);
      double gx = (grid_n - 1) * static_cast<double>(x) / (w - 1);
      int64_t y0 = std::min<int64_t>(static_cast<int64_t>(gy), grid_n - 2);
      int64_t x0 = std::min<int64_t>(static_cast<int64_t>(gx), grid_n - 2);
      double fy = gy - y0, fx = gx - x0;
      double gain =
          (1 - fy) * ((1 - fx) * grid[y0 * grid_n + x0] +
                      fx * grid[y0 * grid_n + x0 + 1]) +
          fy * ((1 - fx) * grid[(y0 + 1) * grid_n + x0] +
                fx * grid[(y0 + 1) * grid_n + x0 + 1]);
      for (int64_t ch = 0; ch < c; ++ch) {
        double v = image.data[(ch * h + y) * w + x] * gain;
        out.data[(ch * h + y) * w + x] =
            static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  return out;
}

Tensor additive_noise(const Tensor& image, const std::string& distribution,
                      double scale, Rng& rng) {
  check_chw(image);
  Tensor out(image.shape);
  for (int64_t i = 0; i < image.numel(); ++i) {
    double noise;
    if (distribution == "uniform")
      noise = rng.uniform(0.0, scale);
    else if (distribution == "gaussian")
      noise = scale * rng.normal();
    else
      throw std::invalid_argument("additive_noise: unknown distribution " +
                                  distribution);
    out.data[i] =
        static_cast<float>(std::clamp(image.data[i] + noise, 0.0, 1.0));
  }
  return out;
}

}  // namespace mvi::img
