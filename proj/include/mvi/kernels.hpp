#pragma once

#include "mvi/tensor.hpp"

namespace mvi::kernels {

// 2-D convolution over NCHW batches. The omp variants parallelize over the
// batch dimension; the *_serial variants are straightforward loop nests kept
// as the reference the parallel path is tested (and benchmarked) against.
//
// w is (OC, IC, KH, KW); y is (N, OC, OH, OW) with
//   OH = (H + 2*pad_h - KH) / stride_h + 1   (likewise OW).

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                    int stride_h, int stride_w, int pad_h, int pad_w,
                    Tensor& y);
void conv2d_forward_serial(const Tensor& x, const Tensor& w, const Tensor& b,
                           int stride_h, int stride_w, int pad_h, int pad_w,
                           Tensor& y);

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                     int stride_h, int stride_w, int pad_h, int pad_w,
                     Tensor& dx, Tensor& dw, Tensor& db);
void conv2d_backward_serial(const Tensor& x, const Tensor& w, const Tensor& dy,
                            int stride_h, int stride_w, int pad_h, int pad_w,
                            Tensor& dx, Tensor& dw, Tensor& db);

// Per-channel batch normalization over (N, H, W). In training mode the batch
// statistics are used and running stats updated in place; in eval mode the
// running stats are used. save_mean / save_invstd hold what forward used and
// are consumed by backward.
void batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       Tensor& running_mean, Tensor& running_var, bool training,
                       float momentum, float eps, Tensor& y, Tensor& save_mean,
                       Tensor& save_invstd);
void batchnorm_backward(const Tensor& x, const Tensor& gamma,
                        const Tensor& save_mean, const Tensor& save_invstd,
                        const Tensor& dy, bool training, Tensor& dx,
                        Tensor& dgamma, Tensor& dbeta);

void relu_forward(const Tensor& x, Tensor& y);
void relu_backward(const Tensor& y, const Tensor& dy, Tensor& dx);

// Global average pool (N, C, H, W) -> (N, C).
void global_avgpool_forward(const Tensor& x, Tensor& y);
void global_avgpool_backward(const Tensor& dy, int64_t h, int64_t w, Tensor& dx);

}  // namespace mvi::kernels
