#include "mvi/kernels.hpp"

#include <omp.h>

#include <Eigen/Dense>
#include <stdexcept>

namespace mvi::kernels {

using MatrixXf = Eigen::MatrixXf;
using RowMat =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

namespace {

struct ConvDims {
  int64_t n, ic, h, w, oc, kh, kw, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& wgt, int stride_h,
                   int stride_w, int pad_h, int pad_w) {
  if (x.ndim() != 4 || wgt.ndim() != 4)
    throw std::invalid_argument("conv2d: expect 4-d input and weight");
  ConvDims d;
  d.n = x.dim(0);
  d.ic = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.oc = wgt.dim(0);
  d.kh = wgt.dim(2);
  d.kw = wgt.dim(3);
  if (wgt.dim(1) != d.ic)
    throw std::invalid_argument("conv2d: channel mismatch");
  d.oh = (d.h + 2 * pad_h - d.kh) / stride_h + 1;
  d.ow = (d.w + 2 * pad_w - d.kw) / stride_w + 1;
  if (d.oh <= 0 || d.ow <= 0)
    throw std::invalid_argument("conv2d: non-positive output size");
  return d;
}

// col is (IC*KH*KW) x (OH*OW), column-major in output position.
void im2col(const float* x, const ConvDims& d, int stride_h, int stride_w,
            int pad_h, int pad_w, float* col) {
  int64_t patch = d.ic * d.kh * d.kw;
  for (int64_t oy = 0; oy < d.oh; ++oy) {
    for (int64_t ox = 0; ox < d.ow; ++ox) {
      float* dst = col + (oy * d.ow + ox) * patch;
      for (int64_t c = 0; c < d.ic; ++c) {
        for (int64_t ky = 0; ky < d.kh; ++ky) {
          int64_t iy = oy * stride_h - pad_h + ky;
          for (int64_t kx = 0; kx < d.kw; ++kx) {
            int64_t ix = ox * stride_w - pad_w + kx;
            float v = 0.0f;
            if (iy >= 0 && iy < d.h && ix >= 0 && ix < d.w)
              v = x[(c * d.h + iy) * d.w + ix];
            dst[(c * d.kh + ky) * d.kw + kx] = v;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvDims& d, int stride_h, int stride_w,
                int pad_h, int pad_w, float* x) {
  int64_t patch = d.ic * d.kh * d.kw;
  for (int64_t oy = 0; oy < d.oh; ++oy) {
    for (int64_t ox = 0; ox < d.ow; ++ox) {
      const float* src = col + (oy * d.ow + ox) * patch;
      for (int64_t c = 0; c < d.ic; ++c) {
        for (int64_t ky = 0; ky < d.kh; ++ky) {
          int64_t iy = oy * stride_h - pad_h + ky;
          if (iy < 0 || iy >= d.h) continue;
          for (int64_t kx = 0; kx < d.kw; ++kx) {
            int64_t ix = ox * stride_w - pad_w + kx;
            if (ix < 0 || ix >= d.w) continue;
            x[(c * d.h + iy) * d.w + ix] += src[(c * d.kh + ky) * d.kw + kx];
          }
        }
      }
    }
  }
}

}  // namespace

void conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b,
                    int stride_h, int stride_w, int pad_h, int pad_w,
                    Tensor& y) {
  ConvDims d = conv_dims(x, w, stride_h, stride_w, pad_h, pad_w);
  y = Tensor({d.n, d.oc, d.oh, d.ow});
  int64_t patch = d.ic * d.kh * d.kw;
  int64_t opix = d.oh * d.ow;
  ConstRowMap wm(w.ptr(), d.oc, patch);

#pragma omp parallel
  {
    MatrixXf col(patch, opix);
#pragma omp for
    for (int64_t n = 0; n < d.n; ++n) {
      im2col(x.ptr() + n * d.ic * d.h * d.w, d, stride_h, stride_w, pad_h,
             pad_w, col.data());
      RowMap out(y.ptr() + n * d.oc * opix, d.oc, opix);
      out.noalias() = wm * col;
      for (int64_t c = 0; c < d.oc; ++c) out.row(c).array() += b.data[c];
    }
  }
}

void conv2d_forward_serial(const Tensor& x, const Tensor& w, const Tensor& b,
                           int stride_h, int stride_w, int pad_h, int pad_w,
                           Tensor& y) {
  ConvDims d = conv_dims(x, w, stride_h, stride_w, pad_h, pad_w);
  y = Tensor({d.n, d.oc, d.oh, d.ow});
  for (int64_t n = 0; n < d.n; ++n) {
    const float* xn = x.ptr() + n * d.ic * d.h * d.w;
    for (int64_t oc = 0; oc < d.oc; ++oc) {
      const float* wc = w.ptr() + oc * d.ic * d.kh * d.kw;
      for (int64_t oy = 0; oy < d.oh; ++oy) {
        for (int64_t ox = 0; ox < d.ow; ++ox) {
          float acc = b.data[oc];
          for (int64_t c = 0; c < d.ic; ++c)
            for (int64_t ky = 0; ky < d.kh; ++ky) {
              int64_t iy = oy * stride_h - pad_h + ky;
              if (iy < 0 || iy >= d.h) continue;
              for (int64_t kx = 0; kx < d.kw; ++kx) {
                int64_t ix = ox * stride_w - pad_w + kx;
                if (ix < 0 || ix >= d.w) continue;
                acc += wc[(c * d.kh + ky) * d.kw + kx] *
                       xn[(c * d.h + iy) * d.w + ix];
              }
            }
          y.data[((n * d.oc + oc) * d.oh + oy) * d.ow + ox] = acc;
        }
      }
    }
  }
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                     int stride_h, int stride_w, int pad_h, int pad_w,
                     Tensor& dx, Tensor& dw, Tensor& db) {
  ConvDims d = conv_dims(x, w, stride_h, stride_w, pad_h, pad_w);
  dx = Tensor(x.shape);
  dw = Tensor(w.shape);
  db = Tensor({d.oc});
  int64_t patch = d.ic * d.kh * d.kw;
  int64_t opix = d.oh * d.ow;
  ConstRowMap wm(w.ptr(), d.oc, patch);

  int nthreads = omp_get_max_threads();
  std::vector<MatrixXf> dw_local(static_cast<size_t>(nthreads),
                                 MatrixXf::Zero(d.oc, patch));
  std::vector<Eigen::VectorXf> db_local(static_cast<size_t>(nthreads),
                                        Eigen::VectorXf::Zero(d.oc));

#pragma omp parallel
  {
    int tid = omp_get_thread_num();
    MatrixXf col(patch, opix);
    MatrixXf dcol(patch, opix);
#pragma omp for
    for (int64_t n = 0; n < d.n; ++n) {
      im2col(x.ptr() + n * d.ic * d.h * d.w, d, stride_h, stride_w, pad_h,
             pad_w, col.data());
      ConstRowMap dyn(dy.ptr() + n * d.oc * opix, d.oc, opix);
      dw_local[tid].noalias() += dyn * col.transpose();
      // Fixed-order scalar reduction: Eigen's vectorized redux over an
      // unaligned Map peels a buffer-address-dependent number of elements,
      // which makes the rounding depend on where the heap placed dy.
      for (int64_t c = 0; c < d.oc; ++c) {
        const float* row = dy.ptr() + (n * d.oc + c) * opix;
        float s = 0.0f;
        for (int64_t p = 0; p < opix; ++p) s += row[p];
        db_local[tid](c) += s;
      }
      dcol.noalias() = wm.transpose() * dyn;
      col2im_add(dcol.data(), d, stride_h, stride_w, pad_h, pad_w,
                 dx.ptr() + n * d.ic * d.h * d.w);
    }
  }
  // Fixed thread-order reduction keeps grads reproducible for a given
  // thread count.
  RowMap dwm(dw.ptr(), d.oc, patch);
  for (int t = 0; t < nthreads; ++t) {
    dwm += dw_local[t];
    for (int64_t c = 0; c < d.oc; ++c) db.data[c] += db_local[t](c);
  }
}

void conv2d_backward_serial(const Tensor& x, const Tensor& w, const Tensor& dy,
                            int stride_h, int stride_w, int pad_h, int pad_w,
                            Tensor& dx, Tensor& dw, Tensor& db) {
  ConvDims d = conv_dims(x, w, stride_h, stride_w, pad_h, pad_w);
  dx = Tensor(x.shape);
  dw = Tensor(w.shape);
  db = Tensor({d.oc});
  for (int64_t n = 0; n < d.n; ++n) {
    const float* xn = x.ptr() + n * d.ic * d.h * d.w;
    float* dxn = dx.ptr() + n * d.ic * d.h * d.w;
    for (int64_t oc = 0; oc < d.oc; ++oc) {
      const float* wc = w.ptr() + oc * d.ic * d.kh * d.kw;
      float* dwc = dw.ptr() + oc * d.ic * d.kh * d.kw;
      for (int64_t oy = 0; oy < d.oh; ++oy)
        for (int64_t ox = 0; ox < d.ow; ++ox) {
          float g = dy.data[((n * d.oc + oc) * d.oh + oy) * d.ow + ox];
          db.data[oc] += g;
          for (int64_t c = 0; c < d.ic; ++c)
            for (int64_t ky = 0; ky < d.kh; ++ky) {
              int64_t iy = oy * stride_h - pad_h + ky;
              if (iy < 0 || iy >= d.h) continue;
              for (int64_t kx = 0; kx < d.kw; ++kx) {
                int64_t ix = ox * stride_w - pad_w + kx;
                if (ix < 0 || ix >= d.w) continue;
                dwc[(c * d.kh + ky) * d.kw + kx] +=
                    g * xn[(c * d.h + iy) * d.w + ix];
                dxn[(c * d.h + iy) * d.w + ix] +=
                    g * wc[(c * d.kh + ky) * d.kw + kx];
              }
            }
        }
    }
  }
}

void batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       Tensor& running_mean, Tensor& running_var, bool training,
                       float momentum, float eps, Tensor& y, Tensor& save_mean,
                       Tensor& save_invstd) {
  int64_t n = x.dim(0), c = x.dim(1), hw = x.numel() / (x.dim(0) * x.dim(1));
  y = Tensor(x.shape);
  save_mean = Tensor({c});
  save_invstd = Tensor({c});
  int64_t count = n * hw;

#pragma omp parallel for
  for (int64_t ch = 0; ch < c; ++ch) {
    float mean, var;
    if (training) {
      double sum = 0.0, sq = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const float* p = x.ptr() + (i * c + ch) * hw;
        for (int64_t j = 0; j < hw; ++j) {
          sum += p[j];
          sq += static_cast<double>(p[j]) * p[j];
        }
      }
      mean = static_cast<float>(sum / count);
      var = static_cast<float>(sq / count - (sum / count) * (sum / count));
      if (var < 0.0f) var = 0.0f;
      running_mean.data[ch] =
          (1.0f - momentum) * running_mean.data[ch] + momentum * mean;
      // Unbiased variance in the running estimate.
      float unbiased = count > 1 ? var * count / (count - 1) : var;
      running_var.data[ch] =
          (1.0f - momentum) * running_var.data[ch] + momentum * unbiased;
    } else {
      mean = running_mean.data[ch];
      var = running_var.data[ch];
    }
    float invstd = 1.0f / std::sqrt(var + eps);
    save_mean.data[ch] = mean;
    save_invstd.data[ch] = invstd;
    float g = gamma.data[ch], b = beta.data[ch];
    for (int64_t i = 0; i < n; ++i) {
      const float* p = x.ptr() + (i * c + ch) * hw;
      float* q = y.ptr() + (i * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j) q[j] = g * (p[j] - mean) * invstd + b;
    }
  }
}

void batchnorm_backward(const Tensor& x, const Tensor& gamma,
                        const Tensor& save_mean, const Tensor& save_invstd,
                        const Tensor& dy, bool training, Tensor& dx,
                        Tensor& dgamma, Tensor& dbeta) {
  int64_t n = x.dim(0), c = x.dim(1), hw = x.numel() / (x.dim(0) * x.dim(1));
  dx = Tensor(x.shape);
  dgamma = Tensor({c});
  dbeta = Tensor({c});
  int64_t count = n * hw;

#pragma omp parallel for
  for (int64_t ch = 0; ch < c; ++ch) {
    float mean = save_mean.data[ch], invstd = save_invstd.data[ch];
    float g = gamma.data[ch];
    double dsum = 0.0, dxhat_sum = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const float* p = x.ptr() + (i * c + ch) * hw;
      const float* dq = dy.ptr() + (i * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j) {
        dsum += dq[j];
        dxhat_sum += static_cast<double>(dq[j]) * (p[j] - mean) * invstd;
      }
    }
    dgamma.data[ch] = static_cast<float>(dxhat_sum);
    dbeta.data[ch] = static_cast<float>(dsum);
    float mean_dy = static_cast<float>(dsum / count);
    float mean_dy_xhat = static_cast<float>(dxhat_sum / count);
    for (int64_t i = 0; i < n; ++i) {
      const float* p = x.ptr() + (i * c + ch) * hw;
      const float* dq = dy.ptr() + (i * c + ch) * hw;
      float* dp = dx.ptr() + (i * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j) {
        if (training) {
          float xhat = (p[j] - mean) * invstd;
          dp[j] = g * invstd * (dq[j] - mean_dy - xhat * mean_dy_xhat);
        } else {
          dp[j] = g * invstd * dq[j];
        }
      }
    }
  }
}

void relu_forward(const Tensor& x, Tensor& y) {
  y = Tensor(x.shape);
#pragma omp parallel for
  for (int64_t i = 0; i < x.numel(); ++i)
    y.data[i] = x.data[i] > 0.0f ? x.data[i] : 0.0f;
}

void relu_backward(const Tensor& y, const Tensor& dy, Tensor& dx) {
  dx = Tensor(y.shape);
#pragma omp parallel for
  for (int64_t i = 0; i < y.numel(); ++i)
    dx.data[i] = y.data[i] > 0.0f ? dy.data[i] : 0.0f;
}

void global_avgpool_forward(const Tensor& x, Tensor& y) {
  int64_t n = x.dim(0), c = x.dim(1), hw = x.numel() / (n * c);
  y = Tensor({n, c});
#pragma omp parallel for collapse(2)
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const float* p = x.ptr() + (i * c + ch) * hw;
      double s = 0.0;
      for (int64_t j = 0; j < hw; ++j) s += p[j];
      y.data[i * c + ch] = static_cast<float>(s / hw);
    }
}

void global_avgpool_backward(const Tensor& dy, int64_t h, int64_t w,
                             Tensor& dx) {
  int64_t n = dy.dim(0), c = dy.dim(1), hw = h * w;
  dx = Tensor({n, c, h, w});
#pragma omp parallel for collapse(2)
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      float g = dy.data[i * c + ch] / hw;
      float* p = dx.ptr() + (i * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j) p[j] = g;
    }
}

}  // namespace mvi::kernels
