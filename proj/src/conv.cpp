#include <algorithm>
#include <utility>

#include <Eigen/Core>

#include "lfn/autodiff.hpp"

namespace lfn {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct Geometry {
  int channels, in_h, in_w, k, stride, pad, out_h, out_w;

  int rows() const { return channels * k * k; }
  int cols() const { return out_h * out_w; }
};

// Output columns ox with 0 <= ox * stride + kx - pad < in_w, as [lo, hi).
std::pair<int, int> valid_columns(const Geometry& g, int kx) {
  const int off = kx - g.pad;
  int lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  int hi = g.in_w - 1 - off < 0 ? 0 : (g.in_w - 1 - off) / g.stride + 1;
  lo = std::min(lo, g.out_w);
  hi = std::clamp(hi, lo, g.out_w);
  return {lo, hi};
}

// Unrolls one image plane stack into a (C*k*k) x (out_h*out_w) matrix.
void im2col(const double* src, const Geometry& g, double* cols) {
  for (int c = 0; c < g.channels; ++c) {
    const double* plane = src + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        double* row = cols + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) *
                                 g.cols();
        const auto [lo, hi] = valid_columns(g, kx);
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          double* dst = row + static_cast<std::size_t>(oy) * g.out_w;
          if (iy < 0 || iy >= g.in_h) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* line = plane + static_cast<std::size_t>(iy) * g.in_w + kx - g.pad;
          std::fill(dst, dst + lo, 0.0);
          if (g.stride == 1) {
            std::copy(line + lo, line + hi, dst + lo);
          } else {
            for (int ox = lo; ox < hi; ++ox) dst[ox] = line[ox * g.stride];
          }
          std::fill(dst + hi, dst + g.out_w, 0.0);
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds the column matrix back onto the planes.
void col2im(const double* cols, const Geometry& g, double* dst) {
  for (int c = 0; c < g.channels; ++c) {
    double* plane = dst + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const double* row =
            cols + static_cast<std::size_t>((c * g.k + ky) * g.k + kx) * g.cols();
        const auto [lo, hi] = valid_columns(g, kx);
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride + ky - g.pad;
          if (iy < 0 || iy >= g.in_h) continue;
          double* line = plane + static_cast<std::size_t>(iy) * g.in_w + kx - g.pad;
          const double* src = row + static_cast<std::size_t>(oy) * g.out_w;
          for (int ox = lo; ox < hi; ++ox) line[ox * g.stride] += src[ox];
        }
      }
    }
  }
}

int conv_out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

void check_conv_shapes(const Shape& x, const Shape& w, const Tensor* bias,
                       int stride, int pad) {
  if (w.h != w.w) {
    throw DimensionError("conv2d: non-square kernel " + w.str());
  }
  if (x.c != w.c) {
    throw DimensionError("conv2d: input has " + std::to_string(x.c) +
                         " channels, weight expects " + std::to_string(w.c) +
                         " (weight " + w.str() + ")");
  }
  if (bias != nullptr && static_cast<int>(bias->size()) != w.n) {
    throw DimensionError("conv2d: bias size " + std::to_string(bias->size()) +
                         " != out channels " + std::to_string(w.n));
  }
  if (stride < 1 || pad < 0) {
    throw DimensionError("conv2d: invalid stride/pad");
  }
  if (x.h + 2 * pad < w.h || x.w + 2 * pad < w.w) {
    throw DimensionError("conv2d: kernel larger than padded input " + x.str());
  }
}

Geometry conv_geometry(const Shape& x, int k, int stride, int pad) {
  return {x.c,
          x.h,
          x.w,
          k,
          stride,
          pad,
          conv_out_extent(x.h, k, stride, pad),
          conv_out_extent(x.w, k, stride, pad)};
}

// Gradients of y = conv(x, w) + b given dy.
void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                     int stride, int pad, Tensor* dx, Tensor* dw,
                     Tensor* db) {
  const Geometry g = conv_geometry(x.shape(), w.h(), stride, pad);
  const int out_ch = w.n();
  std::vector<double> cols(static_cast<std::size_t>(g.rows()) * g.cols());
  ConstMatrixMap wm(w.data(), out_ch, g.rows());
  for (int b = 0; b < x.n(); ++b) {
    ConstMatrixMap dym(dy.plane(b, 0), out_ch, g.cols());
    if (dw != nullptr) {
      im2col(x.plane(b, 0), g, cols.data());
      MatrixMap dwm(dw->data(), out_ch, g.rows());
      dwm.noalias() += dym * ConstMatrixMap(cols.data(), g.rows(), g.cols()).transpose();
    }
    if (db != nullptr) {
      for (int o = 0; o < out_ch; ++o) {
        const double* row = dy.plane(b, o);
        double s = 0.0;
        for (int i = 0; i < g.cols(); ++i) s += row[i];
        db->data()[o] += s;
      }
    }
    if (dx != nullptr) {
      MatrixMap colm(cols.data(), g.rows(), g.cols());
      colm.noalias() = wm.transpose() * dym;
      col2im(cols.data(), g, dx->plane(b, 0));
    }
  }
}

// Replicate-pads every plane by one pixel on each side.
Tensor replicate_pad1(const Tensor& x) {
  Tensor out({x.n(), x.c(), x.h() + 2, x.w() + 2});
  const int w = x.w();
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      const double* src = x.plane(b, c);
      double* dst = out.plane(b, c);
      for (int y = 0; y < out.h(); ++y) {
        const double* line = src + static_cast<std::size_t>(std::clamp(y - 1, 0, x.h() - 1)) * w;
        double* o = dst + static_cast<std::size_t>(y) * (w + 2);
        o[0] = line[0];
        std::copy(line, line + w, o + 1);
        o[w + 1] = line[w - 1];
      }
    }
  }
  return out;
}

// Adjoint of replicate_pad1.
Tensor replicate_pad1_adjoint(const Tensor& g, Shape original) {
  Tensor out(original);
  for (int b = 0; b < g.n(); ++b) {
    for (int c = 0; c < g.c(); ++c) {
      for (int y = 0; y < g.h(); ++y) {
        const int sy = std::clamp(y - 1, 0, original.h - 1);
        for (int xx = 0; xx < g.w(); ++xx) {
          const int sx = std::clamp(xx - 1, 0, original.w - 1);
          out.at(b, c, sy, sx) += g.at(b, c, y, xx);
        }
      }
    }
  }
  return out;
}

constexpr int kUpKernel = 4;

void check_transposed(const Shape& x, const Shape& w, int stride) {
  if (stride != 2 || w.h != kUpKernel || w.w != kUpKernel) {
    throw DimensionError(
        "transposed_conv2d: only 4x4 kernels with 2x upsampling are supported");
  }
  if (x.c != w.n) {
    throw DimensionError("transposed_conv2d: input has " + std::to_string(x.c) +
                         " channels, weight expects " + std::to_string(w.n));
  }
  if (x.h < 1 || x.w < 1) {
    throw DimensionError("transposed_conv2d: empty input " + x.str());
  }
}

// Core transposed convolution on an already padded input; `pad` crops the
// full output so its extent is 2 * (unpadded extent).
Tensor transposed_core(const Tensor& x, const Tensor& w, int pad, int out_h,
                       int out_w) {
  const int in_ch = w.n();
  const int out_ch = w.c();
  Tensor out({x.n(), out_ch, out_h, out_w});
  // Geometry of the equivalent forward conv that maps out -> x.
  const Geometry g{out_ch, out_h, out_w, kUpKernel, 2, pad, x.h(), x.w()};
  std::vector<double> cols(static_cast<std::size_t>(g.rows()) * g.cols());
  ConstMatrixMap wm(w.data(), in_ch, g.rows());
  for (int b = 0; b < x.n(); ++b) {
    ConstMatrixMap xm(x.plane(b, 0), in_ch, g.cols());
    MatrixMap colm(cols.data(), g.rows(), g.cols());
    colm.noalias() = wm.transpose() * xm;
    col2im(cols.data(), g, out.plane(b, 0));
  }
  return out;
}

void transposed_core_backward(const Tensor& x, const Tensor& w,
                              const Tensor& dy, int pad, Tensor* dx,
                              Tensor* dw) {
  const int in_ch = w.n();
  const int out_ch = w.c();
  const Geometry g{out_ch, dy.h(), dy.w(), kUpKernel, 2, pad, x.h(), x.w()};
  std::vector<double> cols(static_cast<std::size_t>(g.rows()) * g.cols());
  ConstMatrixMap wm(w.data(), in_ch, g.rows());
  for (int b = 0; b < x.n(); ++b) {
    im2col(dy.plane(b, 0), g, cols.data());
    ConstMatrixMap colm(cols.data(), g.rows(), g.cols());
    if (dx != nullptr) {
      MatrixMap dxm(dx->plane(b, 0), in_ch, g.cols());
      dxm.noalias() += wm * colm;
    }
    if (dw != nullptr) {
      MatrixMap dwm(dw->data(), in_ch, g.rows());
      ConstMatrixMap xm(x.plane(b, 0), in_ch, g.cols());
      dwm.noalias() += xm * colm.transpose();
    }
  }
}

}  // namespace

namespace kernels {

Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias,
                      int stride, int pad) {
  check_conv_shapes(x.shape(), w.shape(), bias, stride, pad);
  const Geometry g = conv_geometry(x.shape(), w.h(), stride, pad);
  const int out_ch = w.n();
  Tensor out({x.n(), out_ch, g.out_h, g.out_w});
  std::vector<double> cols(static_cast<std::size_t>(g.rows()) * g.cols());
  ConstMatrixMap wm(w.data(), out_ch, g.rows());
  for (int b = 0; b < x.n(); ++b) {
    im2col(x.plane(b, 0), g, cols.data());
    MatrixMap om(out.plane(b, 0), out_ch, g.cols());
    om.noalias() = wm * ConstMatrixMap(cols.data(), g.rows(), g.cols());
    if (bias != nullptr) {
      for (int o = 0; o < out_ch; ++o) om.row(o).array() += bias->data()[o];
    }
  }
  return out;
}

Tensor transposed_conv2d_forward(const Tensor& x, const Tensor& w, int stride,
                                 Border border) {
  check_transposed(x.shape(), w.shape(), stride);
  if (border == Border::kReplicate) {
    return transposed_core(replicate_pad1(x), w, 3, 2 * x.h(), 2 * x.w());
  }
  return transposed_core(x, w, 1, 2 * x.h(), 2 * x.w());
}

}  // namespace kernels

Var conv2d(Var input, Var weight, Var bias, int stride, int pad) {
  Graph& g = *input.graph;
  const Tensor* b = bias.valid() ? &bias.value() : nullptr;
  Tensor out =
      kernels::conv2d_forward(input.value(), weight.value(), b, stride, pad);
  std::vector<int> ins{input.id, weight.id};
  if (bias.valid()) ins.push_back(bias.id);
  const int xi = input.id;
  const int wi = weight.id;
  const int bi = bias.valid() ? bias.id : -1;
  return g.record(
      std::move(out), ins,
      [xi, wi, bi, stride, pad](Graph& gr, const Tensor& dy) {
        Tensor* dx = gr.requires_grad(xi) ? &gr.grad_slot(xi) : nullptr;
        Tensor* dw = gr.requires_grad(wi) ? &gr.grad_slot(wi) : nullptr;
        Tensor* db =
            (bi >= 0 && gr.requires_grad(bi)) ? &gr.grad_slot(bi) : nullptr;
        conv2d_backward(gr.value(xi), gr.value(wi), dy, stride, pad, dx, dw,
                        db);
      });
}

Var conv2d(Var input, Var weight, int stride, int pad) {
  return conv2d(input, weight, Var{}, stride, pad);
}

Var transposed_conv2d(Var input, Var weight, int stride, Border border) {
  Graph& g = *input.graph;
  Tensor out = kernels::transposed_conv2d_forward(input.value(), weight.value(),
                                                  stride, border);
  const int xi = input.id;
  const int wi = weight.id;
  return g.record(std::move(out), {xi, wi},
                  [xi, wi, border](Graph& gr, const Tensor& dy) {
                    const Tensor& x = gr.value(xi);
                    const Tensor& w = gr.value(wi);
                    Tensor* dw = gr.requires_grad(wi) ? &gr.grad_slot(wi) : nullptr;
                    const bool want_dx = gr.requires_grad(xi);
                    if (border == Border::kReplicate) {
                      const Tensor padded = replicate_pad1(x);
                      Tensor dpad(padded.shape());
                      transposed_core_backward(padded, w, dy, 3,
                                               want_dx ? &dpad : nullptr, dw);
                      if (want_dx) {
                        gr.accumulate(xi,
                                      replicate_pad1_adjoint(dpad, x.shape()));
                      }
                    } else {
                      transposed_core_backward(
                          x, w, dy, 1, want_dx ? &gr.grad_slot(xi) : nullptr, dw);
                    }
                  });
}

}  // namespace lfn
