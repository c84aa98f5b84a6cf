#include "lfn/costvolume.hpp"

#include <algorithm>

namespace lfn {

void CostVolumeSpec::validate() const {
  if (radius < 1) throw DimensionError("cost volume: radius must be >= 1");
  if (disp_step < 1 || radius % disp_step != 0) {
    throw DimensionError("cost volume: disp_step must divide radius");
  }
  if (spatial_stride < 1) {
    throw DimensionError("cost volume: spatial_stride must be >= 1");
  }
}

namespace {

int grid_extent(int n, int stride) { return (n - 1) / stride + 1; }

void check_pair(const Shape& a, const Shape& b) {
  require_same_shape(a, b, "correlation");
  if (a.c < 1) throw DimensionError("correlation: empty feature vectors");
}

// Interpolation interval and weight along one axis for dense coordinate p.
struct GridTap {
  int i0, i1;
  double t;
};

GridTap grid_tap(int p, int stride, int grid_n) {
  if (grid_n == 1) return {0, 0, 0.0};
  const int i0 = std::min(p / stride, grid_n - 2);
  return {i0, i0 + 1, static_cast<double>(p - i0 * stride) / stride};
}

}  // namespace

namespace kernels {

Tensor correlation_grid(const Tensor& f1, const Tensor& f2,
                        const CostVolumeSpec& spec) {
  spec.validate();
  check_pair(f1.shape(), f2.shape());
  const int H = f1.h();
  const int W = f1.w();
  const int s = spec.spatial_stride;
  const int gh = grid_extent(H, s);
  const int gw = grid_extent(W, s);
  const int bins = spec.bins_per_axis();
  const double inv_n = 1.0 / f1.c();
  Tensor out({f1.n(), spec.channels(), gh, gw});
  for (int b = 0; b < f1.n(); ++b) {
    for (int dyi = 0; dyi < bins; ++dyi) {
      const int dy = -spec.radius + dyi * spec.disp_step;
      for (int dxi = 0; dxi < bins; ++dxi) {
        const int dx = -spec.radius + dxi * spec.disp_step;
        double* o = out.plane(b, dyi * bins + dxi);
        for (int c = 0; c < f1.c(); ++c) {
          const double* a = f1.plane(b, c);
          const double* p2 = f2.plane(b, c);
          for (int gy = 0; gy < gh; ++gy) {
            const int y = gy * s;
            const int y2 = y + dy;
            if (y2 < 0 || y2 >= H) continue;
            for (int gx = 0; gx < gw; ++gx) {
              const int x = gx * s;
              const int x2 = x + dx;
              if (x2 < 0 || x2 >= W) continue;
              o[gy * gw + gx] += a[y * W + x] * p2[y2 * W + x2];
            }
          }
        }
        for (int i = 0; i < gh * gw; ++i) o[i] *= inv_n;
      }
    }
  }
  return out;
}

void correlation_grid_backward(const Tensor& f1, const Tensor& f2,
                               const Tensor& dgrid, const CostVolumeSpec& spec,
                               Tensor* df1, Tensor* df2) {
  const int H = f1.h();
  const int W = f1.w();
  const int s = spec.spatial_stride;
  const int gh = dgrid.h();
  const int gw = dgrid.w();
  const int bins = spec.bins_per_axis();
  const double inv_n = 1.0 / f1.c();
  for (int b = 0; b < f1.n(); ++b) {
    for (int dyi = 0; dyi < bins; ++dyi) {
      const int dy = -spec.radius + dyi * spec.disp_step;
      for (int dxi = 0; dxi < bins; ++dxi) {
        const int dx = -spec.radius + dxi * spec.disp_step;
        const double* d = dgrid.plane(b, dyi * bins + dxi);
        for (int c = 0; c < f1.c(); ++c) {
          const double* a = f1.plane(b, c);
          const double* p2 = f2.plane(b, c);
          double* g1 = df1 != nullptr ? df1->plane(b, c) : nullptr;
          double* g2 = df2 != nullptr ? df2->plane(b, c) : nullptr;
          for (int gy = 0; gy < gh; ++gy) {
            const int y = gy * s;
            const int y2 = y + dy;
            if (y2 < 0 || y2 >= H) continue;
            for (int gx = 0; gx < gw; ++gx) {
              const int x = gx * s;
              const int x2 = x + dx;
              if (x2 < 0 || x2 >= W) continue;
              const double g = d[gy * gw + gx] * inv_n;
              if (g1 != nullptr) g1[y * W + x] += g * p2[y2 * W + x2];
              if (g2 != nullptr) g2[y2 * W + x2] += g * a[y * W + x];
            }
          }
        }
      }
    }
  }
}

Tensor grid_interpolate(const Tensor& grid, int stride, int h, int w) {
  Tensor out({grid.n(), grid.c(), h, w});
  for (int b = 0; b < grid.n(); ++b) {
    for (int c = 0; c < grid.c(); ++c) {
      const double* g = grid.plane(b, c);
      double* o = out.plane(b, c);
      for (int y = 0; y < h; ++y) {
        const GridTap ty = grid_tap(y, stride, grid.h());
        for (int x = 0; x < w; ++x) {
          const GridTap tx = grid_tap(x, stride, grid.w());
          const double top = (1.0 - tx.t) * g[ty.i0 * grid.w() + tx.i0] +
                             tx.t * g[ty.i0 * grid.w() + tx.i1];
          const double bot = (1.0 - tx.t) * g[ty.i1 * grid.w() + tx.i0] +
                             tx.t * g[ty.i1 * grid.w() + tx.i1];
          o[y * w + x] = (1.0 - ty.t) * top + ty.t * bot;
        }
      }
    }
  }
  return out;
}

Tensor grid_interpolate_adjoint(const Tensor& dense, int stride, int grid_h,
                                int grid_w) {
  Tensor out({dense.n(), dense.c(), grid_h, grid_w});
  for (int b = 0; b < dense.n(); ++b) {
    for (int c = 0; c < dense.c(); ++c) {
      const double* d = dense.plane(b, c);
      double* g = out.plane(b, c);
      for (int y = 0; y < dense.h(); ++y) {
        const GridTap ty = grid_tap(y, stride, grid_h);
        for (int x = 0; x < dense.w(); ++x) {
          const GridTap tx = grid_tap(x, stride, grid_w);
          const double v = d[y * dense.w() + x];
          g[ty.i0 * grid_w + tx.i0] += (1.0 - ty.t) * (1.0 - tx.t) * v;
          g[ty.i0 * grid_w + tx.i1] += (1.0 - ty.t) * tx.t * v;
          g[ty.i1 * grid_w + tx.i0] += ty.t * (1.0 - tx.t) * v;
          g[ty.i1 * grid_w + tx.i1] += ty.t * tx.t * v;
        }
      }
    }
  }
  return out;
}

}  // namespace kernels

Var sparse_correlation(Var f1, Var f2, int radius, int disp_step,
                       int spatial_stride) {
  const CostVolumeSpec spec{radius, disp_step, spatial_stride};
  Tensor grid = kernels::correlation_grid(f1.value(), f2.value(), spec);
  const int H = f1.shape().h;
  const int W = f1.shape().w;
  const int gh = grid.h();
  const int gw = grid.w();
  Tensor out = spatial_stride == 1
                   ? std::move(grid)
                   : kernels::grid_interpolate(grid, spatial_stride, H, W);
  const int a = f1.id;
  const int b = f2.id;
  return f1.graph->record(
      std::move(out), {a, b}, [a, b, spec, gh, gw](Graph& g, const Tensor& dy) {
        Tensor* d1 = g.requires_grad(a) ? &g.grad_slot(a) : nullptr;
        Tensor* d2 = g.requires_grad(b) ? &g.grad_slot(b) : nullptr;
        if (spec.spatial_stride == 1) {
          kernels::correlation_grid_backward(g.value(a), g.value(b), dy, spec,
                                             d1, d2);
        } else {
          const Tensor dgrid = kernels::grid_interpolate_adjoint(
              dy, spec.spatial_stride, gh, gw);
          kernels::correlation_grid_backward(g.value(a), g.value(b), dgrid,
                                             spec, d1, d2);
        }
      });
}

Var correlation(Var f1, Var f2, int radius, int disp_step) {
  return sparse_correlation(f1, f2, radius, disp_step, 1);
}

Var cost_volume(Var f1, Var f2, const CostVolumeSpec& spec) {
  return sparse_correlation(f1, f2, spec.radius, spec.disp_step,
                            spec.spatial_stride);
}

}  // namespace lfn
