#pragma once

// Raw compute kernels shared by the autodiff graph and the inference-only
// forward paths. Convolutions go through im2col + Eigen GEMM; everything is
// single-threaded and evaluation order is fixed, so outputs are bit-stable.

#include <Eigen/Core>

#include "pegsim/nn/tensor.hpp"

namespace pegsim::nn {

using MatRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using ConstMapRM = Eigen::Map<const MatRM>;

struct Conv2dGeom {
  int in_c = 0, in_h = 0, in_w = 0;
  int out_c = 0, kh = 0, kw = 0;
  int stride = 1, pad = 0;
  int out_h = 0, out_w = 0;

  static Conv2dGeom make(int in_c, int in_h, int in_w, int out_c, int kh,
                         int kw, int stride, int pad) {
    Conv2dGeom g{in_c, in_h, in_w, out_c, kh, kw, stride, pad, 0, 0};
    g.out_h = (in_h + 2 * pad - kh) / stride + 1;
    g.out_w = (in_w + 2 * pad - kw) / stride + 1;
    if (g.out_h < 1 || g.out_w < 1)
      throw std::invalid_argument("conv2d output would be empty");
    return g;
  }
  int patch() const { return in_c * kh * kw; }
  int cols() const { return out_h * out_w; }
};

// col is (patch x out_h*out_w), row-major.
inline void im2col(const double* x, const Conv2dGeom& g, double* col) {
  const int OW = g.out_w, OH = g.out_h;
  for (int c = 0; c < g.in_c; ++c) {
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((c * g.kh + ky) * g.kw + kx) * OH * OW;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            const bool in = iy >= 0 && iy < g.in_h && ix >= 0 && ix < g.in_w;
            row[oy * OW + ox] = in ? x[(c * g.in_h + iy) * g.in_w + ix] : 0.0;
          }
        }
      }
    }
  }
}

inline void col2im_accum(const double* col, const Conv2dGeom& g, double* x) {
  const int OW = g.out_w, OH = g.out_h;
  for (int c = 0; c < g.in_c; ++c) {
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((c * g.kh + ky) * g.kw + kx) * OH * OW;
        for (int oy = 0; oy < OH; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int ox = 0; ox < OW; ++ox) {
            const int ix = ox * g.stride + kx - g.pad;
            if (ix < 0 || ix >= g.in_w) continue;
            x[(c * g.in_h + iy) * g.in_w + ix] += row[oy * OW + ox];
          }
        }
      }
    }
  }
}

// y[n] = W * im2col(x[n]); weight is (out_c, in_c*kh*kw) in memory.
inline void conv2d_forward(const double* x, const double* w, int batch,
                           const Conv2dGeom& g, double* y,
                           std::vector<double>& col_buf) {
  col_buf.resize(static_cast<std::size_t>(g.patch()) * g.cols());
  ConstMapRM W(w, g.out_c, g.patch());
  const std::int64_t in_sz = static_cast<std::int64_t>(g.in_c) * g.in_h * g.in_w;
  const std::int64_t out_sz = static_cast<std::int64_t>(g.out_c) * g.cols();
  for (int n = 0; n < batch; ++n) {
    im2col(x + n * in_sz, g, col_buf.data());
    ConstMapRM col(col_buf.data(), g.patch(), g.cols());
    MapRM out(y + n * out_sz, g.out_c, g.cols());
    out.noalias() = W * col;
  }
}

// Accumulates input and weight gradients of conv2d_forward.
inline void conv2d_backward(const double* x, const double* w, const double* gy,
                            int batch, const Conv2dGeom& g, double* gx,
                            double* gw, std::vector<double>& col_buf,
                            std::vector<double>& col_grad_buf) {
  col_buf.resize(static_cast<std::size_t>(g.patch()) * g.cols());
  col_grad_buf.resize(col_buf.size());
  ConstMapRM W(w, g.out_c, g.patch());
  MapRM GW(gw, g.out_c, g.patch());
  const std::int64_t in_sz = static_cast<std::int64_t>(g.in_c) * g.in_h * g.in_w;
  const std::int64_t out_sz = static_cast<std::int64_t>(g.out_c) * g.cols();
  for (int n = 0; n < batch; ++n) {
    im2col(x + n * in_sz, g, col_buf.data());
    ConstMapRM col(col_buf.data(), g.patch(), g.cols());
    ConstMapRM GY(gy + n * out_sz, g.out_c, g.cols());
    GW.noalias() += GY * col.transpose();
    if (gx != nullptr) {
      MapRM gcol(col_grad_buf.data(), g.patch(), g.cols());
      gcol.noalias() = W.transpose() * GY;
      col2im_accum(col_grad_buf.data(), g, gx + n * in_sz);
    }
  }
}

// Transposed convolution: exact adjoint of conv2d_forward with the same
// geometry. Input z lives on the conv OUTPUT grid, result on the input grid.
// Weight layout matches the paired conv: (geom.out_c, geom.in_c, kh, kw),
// i.e. z has geom.out_c channels and the result has geom.in_c channels.
inline void tconv2d_forward(const double* z, const double* w, int batch,
                            const Conv2dGeom& g, double* y,
                            std::vector<double>& col_buf) {
  col_buf.resize(static_cast<std::size_t>(g.patch()) * g.cols());
  ConstMapRM W(w, g.out_c, g.patch());
  const std::int64_t z_sz = static_cast<std::int64_t>(g.out_c) * g.cols();
  const std::int64_t y_sz = static_cast<std::int64_t>(g.in_c) * g.in_h * g.in_w;
  for (int n = 0; n < batch; ++n) {
    ConstMapRM Z(z + n * z_sz, g.out_c, g.cols());
    MapRM gcol(col_buf.data(), g.patch(), g.cols());
    gcol.noalias() = W.transpose() * Z;
    double* out = y + n * y_sz;
    std::fill(out, out + y_sz, 0.0);
    col2im_accum(col_buf.data(), g, out);
  }
}

inline void tconv2d_backward(const double* z, const double* w, const double* gy,
                             int batch, const Conv2dGeom& g, double* gz,
                             double* gw, std::vector<double>& col_buf) {
  col_buf.resize(static_cast<std::size_t>(g.patch()) * g.cols());
  ConstMapRM W(w, g.out_c, g.patch());
  MapRM GW(gw, g.out_c, g.patch());
  const std::int64_t z_sz = static_cast<std::int64_t>(g.out_c) * g.cols();
  const std::int64_t y_sz = static_cast<std::int64_t>(g.in_c) * g.in_h * g.in_w;
  for (int n = 0; n < batch; ++n) {
    im2col(gy + n * y_sz, g, col_buf.data());
    ConstMapRM col(col_buf.data(), g.patch(), g.cols());
    if (gz != nullptr) {
      MapRM GZ(gz + n * z_sz, g.out_c, g.cols());
      GZ.noalias() += W * col;
    }
    ConstMapRM Z(z + n * z_sz, g.out_c, g.cols());
    GW.noalias() += Z * col.transpose();
  }
}

struct Conv1dGeom {
  int in_c = 0, in_len = 0;
  int out_c = 0, k = 0, stride = 1;
  int out_len = 0, left_pad = 0;

  // Causal: left-padded with zeros so out_len == ceil(in_len / stride).
  static Conv1dGeom make_causal(int in_c, int in_len, int out_c, int k,
                                int stride) {
    Conv1dGeom g{in_c, in_len, out_c, k, stride, 0, 0};
    g.out_len = (in_len + stride - 1) / stride;
    g.left_pad = (g.out_len - 1) * stride + k - in_len;
    if (g.left_pad < 0)
      throw std::invalid_argument("causal conv kernel shorter than stride");
    return g;
  }
};

inline void causal_conv1d_forward(const double* x, const double* w, int batch,
                                  const Conv1dGeom& g, double* y) {
  const std::int64_t in_sz = static_cast<std::int64_t>(g.in_c) * g.in_len;
  const std::int64_t out_sz = static_cast<std::int64_t>(g.out_c) * g.out_len;
  for (int n = 0; n < batch; ++n) {
    const double* xn = x + n * in_sz;
    double* yn = y + n * out_sz;
    for (int co = 0; co < g.out_c; ++co) {
      for (int o = 0; o < g.out_len; ++o) {
        double acc = 0.0;
        for (int ci = 0; ci < g.in_c; ++ci) {
          const double* wrow = w + (co * g.in_c + ci) * g.k;
          for (int t = 0; t < g.k; ++t) {
            const int idx = o * g.stride + t - g.left_pad;
            if (idx >= 0 && idx < g.in_len)
              acc += wrow[t] * xn[ci * g.in_len + idx];
          }
        }
        yn[co * g.out_len + o] = acc;
      }
    }
  }
}

inline void causal_conv1d_backward(const double* x, const double* w,
                                   const double* gy, int batch,
                                   const Conv1dGeom& g, double* gx,
                                   double* gw) {
  const std::int64_t in_sz = static_cast<std::int64_t>(g.in_c) * g.in_len;
  const std::int64_t out_sz = static_cast<std::int64_t>(g.out_c) * g.out_len;
  for (int n = 0; n < batch; ++n) {
    const double* xn = x + n * in_sz;
    const double* gyn = gy + n * out_sz;
    for (int co = 0; co < g.out_c; ++co) {
      for (int o = 0; o < g.out_len; ++o) {
        const double go = gyn[co * g.out_len + o];
        for (int ci = 0; ci < g.in_c; ++ci) {
          const double* wrow = w + (co * g.in_c + ci) * g.k;
          double* gwrow = gw + (co * g.in_c + ci) * g.k;
          for (int t = 0; t < g.k; ++t) {
            const int idx = o * g.stride + t - g.left_pad;
            if (idx >= 0 && idx < g.in_len) {
              gwrow[t] += go * xn[ci * g.in_len + idx];
              if (gx != nullptr) gx[n * in_sz + ci * g.in_len + idx] += go * wrow[t];
            }
          }
        }
      }
    }
  }
}

// C = A(m x k) * B(k x n), all row-major.
inline void matmul(const double* a, const double* b, double* c, int m, int k,
                   int n) {
  ConstMapRM A(a, m, k);
  ConstMapRM B(b, k, n);
  MapRM C(c, m, n);
  C.noalias() = A * B;
}

inline void matmul_accum_at_b(const double* a, const double* gc, double* gb,
                              int m, int k, int n) {
  ConstMapRM A(a, m, k);
  ConstMapRM GC(gc, m, n);
  MapRM GB(gb, k, n);
  GB.noalias() += A.transpose() * GC;
}

inline void matmul_accum_a_bt(const double* gc, const double* b, double* ga,
                              int m, int k, int n) {
  ConstMapRM GC(gc, m, n);
  ConstMapRM B(b, k, n);
  MapRM GA(ga, m, k);
  GA.noalias() += GC * B.transpose();
}

}  // namespace pegsim::nn
