#include "lfn/warp.hpp"

#include <cmath>

namespace lfn {
namespace {

void check_warp(const Shape& f, const Shape& u) {
  if (u.c != 2) {
    throw DimensionError("f_warp: flow must have 2 channels, got " + u.str());
  }
  if (f.n != u.n || f.h != u.h || f.w != u.w) {
    throw DimensionError("f_warp: features " + f.str() +
                         " and flow " + u.str() + " differ in extent");
  }
}

// Sample location split into the top-left neighbour and fractional offsets.
// floor() makes exact integers take the right-sided neighbour pair.
struct Sample {
  int x0, y0;
  double ax, ay;
};

Sample locate(int x, int y, double u, double v) {
  const double xs = x + u;
  const double ys = y + v;
  const double fx = std::floor(xs);
  const double fy = std::floor(ys);
  return {static_cast<int>(fx), static_cast<int>(fy), xs - fx, ys - fy};
}

}  // namespace

namespace kernels {

Tensor warp_forward(const Tensor& features, const Tensor& flow) {
  check_warp(features.shape(), flow.shape());
  const int H = features.h();
  const int W = features.w();
  Tensor out(features.shape());
  for (int b = 0; b < features.n(); ++b) {
    const double* u = flow.plane(b, 0);
    const double* v = flow.plane(b, 1);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        const Sample s = locate(x, y, u[p], v[p]);
        const int xs[2] = {s.x0, s.x0 + 1};
        const int ys[2] = {s.y0, s.y0 + 1};
        const double wx[2] = {1.0 - s.ax, s.ax};
        const double wy[2] = {1.0 - s.ay, s.ay};
        for (int j = 0; j < 2; ++j) {
          if (ys[j] < 0 || ys[j] >= H) continue;
          for (int i = 0; i < 2; ++i) {
            if (xs[i] < 0 || xs[i] >= W) continue;
            const double wgt = wx[i] * wy[j];
            const std::size_t q = static_cast<std::size_t>(ys[j]) * W + xs[i];
            for (int c = 0; c < features.c(); ++c) {
              out.plane(b, c)[p] += wgt * features.plane(b, c)[q];
            }
          }
        }
      }
    }
  }
  return out;
}

void warp_backward(const Tensor& features, const Tensor& flow,
                   const Tensor& dout, Tensor* dfeatures, Tensor* dflow) {
  const int H = features.h();
  const int W = features.w();
  for (int b = 0; b < features.n(); ++b) {
    const double* u = flow.plane(b, 0);
    const double* v = flow.plane(b, 1);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        const Sample s = locate(x, y, u[p], v[p]);
        const int xs[2] = {s.x0, s.x0 + 1};
        const int ys[2] = {s.y0, s.y0 + 1};
        const double wx[2] = {1.0 - s.ax, s.ax};
        const double wy[2] = {1.0 - s.ay, s.ay};
        const double dwx[2] = {-1.0, 1.0};
        const double dwy[2] = {-1.0, 1.0};
        double gu = 0.0;
        double gv = 0.0;
        for (int j = 0; j < 2; ++j) {
          if (ys[j] < 0 || ys[j] >= H) continue;
          for (int i = 0; i < 2; ++i) {
            if (xs[i] < 0 || xs[i] >= W) continue;
            const std::size_t q = static_cast<std::size_t>(ys[j]) * W + xs[i];
            const double wgt = wx[i] * wy[j];
            for (int c = 0; c < features.c(); ++c) {
              const double d = dout.plane(b, c)[p];
              if (dfeatures != nullptr) dfeatures->plane(b, c)[q] += wgt * d;
              const double f = features.plane(b, c)[q];
              gu += d * f * dwx[i] * wy[j];
              gv += d * f * wx[i] * dwy[j];
            }
          }
        }
        if (dflow != nullptr) {
          dflow->plane(b, 0)[p] += gu;
          dflow->plane(b, 1)[p] += gv;
        }
      }
    }
  }
}

}  // namespace kernels

Var f_warp(Var features, Var flow) {
  Tensor out = kernels::warp_forward(features.value(), flow.value());
  const int fi = features.id;
  const int ui = flow.id;
  return features.graph->record(
      std::move(out), {fi, ui}, [fi, ui](Graph& g, const Tensor& dy) {
        Tensor* df = g.requires_grad(fi) ? &g.grad_slot(fi) : nullptr;
        Tensor* du = g.requires_grad(ui) ? &g.grad_slot(ui) : nullptr;
        kernels::warp_backward(g.value(fi), g.value(ui), dy, df, du);
      });
}

Var image_warp(Var image, Var flow) { return f_warp(image, flow); }

}  // namespace lfn
