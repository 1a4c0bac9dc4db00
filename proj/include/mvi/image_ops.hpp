#pragma once

#include "mvi/rng.hpp"
#include "mvi/tensor.hpp"

namespace mvi::img {

// All operations take and return (C, H, W) tensors with intensities that are
// kept inside [0, 1] by the dataset builders.

// Affine map of intensities onto [0, 1]. A constant image maps to all zeros.
// Throws on an empty input.
Tensor rescale_unit_interval(const Tensor& image);

// Bilinear resize to out_h x out_w.
Tensor resize_bilinear(const Tensor& image, int64_t out_h, int64_t out_w);

// Rotation about the image center by `angle` radians, bilinear sampling,
// zero fill outside the source frame.
Tensor rotate_bilinear(const Tensor& image, double angle);

// Separable gaussian blur, truncated at 3 sigma.
Tensor gaussian_smooth(const Tensor& image, double sigma);

// Random small rotation + translation, parameters drawn from rng:
// rotation ~ U[-max_rotation, max_rotation], shift ~ U[-max_shift, max_shift]
// per axis (pixels). Bilinear sampling, zero fill.
Tensor affine_warp(const Tensor& image, double max_rotation, double max_shift,
                   Rng& rng);

// Multiplicative low-frequency bias field: a grid_n x grid_n grid of gains in
// [1-strength, 1+strength], bilinearly upsampled. Output re-clamped to [0,1].
Tensor intensity_bias(const Tensor& image, double strength, int grid_n,
                      Rng& rng);

// Per-pixel additive noise, uniform in [0, scale] or gaussian with sd scale,
// followed by clamping to [0, 1].
Tensor additive_noise(const Tensor& image, const std::string& distribution,
                      double scale, Rng& rng);

}  // namespace mvi::img
