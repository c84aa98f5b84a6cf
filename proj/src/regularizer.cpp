#include "lfn/regularizer.hpp"

#include <algorithm>
#include <cmath>

#include "lfn/warp.hpp"

namespace lfn {

int omega_from_channels(int channels) {
  const int omega = static_cast<int>(std::lround(std::sqrt(channels)));
  if (omega * omega != channels || omega % 2 == 0) {
    throw DimensionError("f-lconv: " + std::to_string(channels) +
                         " filter taps is not an odd square");
  }
  return omega;
}

namespace kernels {

Tensor fold_patches(const Tensor& x, int omega) {
  const int r = omega / 2;
  const int taps = omega * omega;
  const int H = x.h();
  const int W = x.w();
  Tensor out({x.n(), x.c() * taps, H, W});
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      const double* src = x.plane(b, c);
      for (int m = 0; m < omega; ++m) {
        for (int n = 0; n < omega; ++n) {
          double* dst = out.plane(b, c * taps + m * omega + n);
          for (int y = 0; y < H; ++y) {
            const int sy = y + m - r;
            if (sy < 0 || sy >= H) continue;
            for (int xx = 0; xx < W; ++xx) {
              const int sx = xx + n - r;
              if (sx >= 0 && sx < W) dst[y * W + xx] = src[sy * W + sx];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor fold_mask(int h, int w, int omega) {
  Tensor ones({1, 1, h, w}, 1.0);
  return fold_patches(ones, omega);
}

}  // namespace kernels

Var occlusion_map(Var image1, Var image2, Var flow) {
  return channel_norm(sub(image_warp(image2, flow), image1));
}

Var build_filters(Var distance) {
  const Tensor& d = distance.value();
  Tensor out(d.shape());
  const int taps = d.c();
  const std::size_t plane = d.shape().plane();
  for (int b = 0; b < d.n(); ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      double hi = -INFINITY;
      for (int k = 0; k < taps; ++k) {
        const double v = d.plane(b, k)[p];
        hi = std::max(hi, -v * v);
      }
      double total = 0.0;
      for (int k = 0; k < taps; ++k) {
        const double v = d.plane(b, k)[p];
        const double e = std::exp(-v * v - hi);
        out.plane(b, k)[p] = e;
        total += e;
      }
      for (int k = 0; k < taps; ++k) out.plane(b, k)[p] /= total;
    }
  }
  const int di = distance.id;
  const int self = static_cast<int>(distance.graph->size());
  return distance.graph->record(
      std::move(out), {di}, [di, self, taps, plane](Graph& g, const Tensor& dy) {
        const Tensor& d = g.value(di);
        const Tensor& s = g.value(self);
        Tensor& gd = g.grad_slot(di);
        for (int b = 0; b < d.n(); ++b) {
          for (std::size_t p = 0; p < plane; ++p) {
            double inner = 0.0;
            for (int k = 0; k < taps; ++k) {
              inner += s.plane(b, k)[p] * dy.plane(b, k)[p];
            }
            for (int k = 0; k < taps; ++k) {
              const double dz = s.plane(b, k)[p] * (dy.plane(b, k)[p] - inner);
              gd.plane(b, k)[p] += dz * (-2.0 * d.plane(b, k)[p]);
            }
          }
        }
      });
}

Var apply_flconv(Var flow, Var filters) {
  const Tensor& u = flow.value();
  const Tensor& G = filters.value();
  require_same_spatial(u.shape(), G.shape(), "apply_flconv");
  const int omega = omega_from_channels(G.c());
  const int taps = G.c();
  const std::size_t plane = u.shape().plane();
  const Tensor folded = kernels::fold_patches(u, omega);
  const Tensor mask = kernels::fold_mask(u.h(), u.w(), omega);

  // Filter mass over the in-bounds taps, shared by all channels.
  Tensor mass({u.n(), 1, u.h(), u.w()});
  for (int b = 0; b < u.n(); ++b) {
    double* m = mass.plane(b, 0);
    for (int k = 0; k < taps; ++k) {
      const double* gk = G.plane(b, k);
      const double* mk = mask.plane(0, k);
      for (std::size_t p = 0; p < plane; ++p) m[p] += gk[p] * mk[p];
    }
  }
  Tensor out(u.shape());
  for (int b = 0; b < u.n(); ++b) {
    const double* m = mass.plane(b, 0);
    for (int c = 0; c < u.c(); ++c) {
      double* o = out.plane(b, c);
      for (int k = 0; k < taps; ++k) {
        const double* gk = G.plane(b, k);
        const double* fk = folded.plane(b, c * taps + k);
        for (std::size_t p = 0; p < plane; ++p) o[p] += gk[p] * fk[p];
      }
      for (std::size_t p = 0; p < plane; ++p) o[p] = m[p] > 0.0 ? o[p] / m[p] : 0.0;
    }
  }

  const int ui = flow.id;
  const int gi = filters.id;
  const int self = static_cast<int>(flow.graph->size());
  return flow.graph->record(
      std::move(out), {ui, gi},
      [ui, gi, self, omega, taps, plane, mass, mask](Graph& g,
                                                      const Tensor& dy) {
        const Tensor& u = g.value(ui);
        const Tensor& G = g.value(gi);
        const Tensor& out = g.value(self);
        const int r = omega / 2;
        const int H = u.h();
        const int W = u.w();
        if (g.requires_grad(gi)) {
          const Tensor folded = kernels::fold_patches(u, omega);
          Tensor& dG = g.grad_slot(gi);
          for (int b = 0; b < u.n(); ++b) {
            const double* m = mass.plane(b, 0);
            for (int c = 0; c < u.c(); ++c) {
              const double* d = dy.plane(b, c);
              const double* o = out.plane(b, c);
              for (int k = 0; k < taps; ++k) {
                const double* fk = folded.plane(b, c * taps + k);
                const double* mk = mask.plane(0, k);
                double* gk = dG.plane(b, k);
                for (std::size_t p = 0; p < plane; ++p) {
                  if (m[p] > 0.0) gk[p] += d[p] * (fk[p] - o[p] * mk[p]) / m[p];
                }
              }
            }
          }
        }
        if (g.requires_grad(ui)) {
          Tensor& du = g.grad_slot(ui);
          for (int b = 0; b < u.n(); ++b) {
            const double* m = mass.plane(b, 0);
            for (int c = 0; c < u.c(); ++c) {
              const double* d = dy.plane(b, c);
              double* gu = du.plane(b, c);
              for (int mi = 0; mi < omega; ++mi) {
                for (int ni = 0; ni < omega; ++ni) {
                  const double* gk = G.plane(b, mi * omega + ni);
                  for (int y = 0; y < H; ++y) {
                    const int sy = y + mi - r;
                    if (sy < 0 || sy >= H) continue;
                    for (int x = 0; x < W; ++x) {
                      const int sx = x + ni - r;
                      if (sx < 0 || sx >= W) continue;
                      const int p = y * W + x;
                      if (m[p] > 0.0) gu[sy * W + sx] += d[p] * gk[p] / m[p];
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Var remove_mean(Var flow) {
  return add_broadcast(flow, scale(spatial_mean(flow), -1.0));
}

Var distance_metric(Graph& g, const RegularizerUnit& unit, Var features1,
                    Var flow, Var occlusion, double slope, Var* penultimate) {
  Var input = concat_channels({features1, remove_mean(flow), occlusion});
  if (input.shape().c != unit.input_channels()) {
    throw DimensionError("distance_metric: input has " +
                         std::to_string(input.shape().c) +
                         " channels, unit expects " +
                         std::to_string(unit.input_channels()));
  }
  const std::vector<Var> outs = apply_stack(g, unit.stack, input, slope);
  if (penultimate != nullptr) *penultimate = outs.back();
  return unit.dist.apply(g, outs.back(), slope);
}

RegularizeOutput regularize(Graph& g, const RegularizerUnit& unit,
                            Var features1, Var image1, Var image2, Var flow,
                            double slope) {
  RegularizeOutput r;
  Var mean = spatial_mean(flow);
  Var centered = add_broadcast(flow, scale(mean, -1.0));
  r.occlusion = occlusion_map(image1, image2, flow);
  r.distance = distance_metric(g, unit, features1, flow, r.occlusion, slope,
                               &r.penultimate);
  r.filters = build_filters(r.distance);
  r.flow = add_broadcast(apply_flconv(centered, r.filters), mean);
  return r;
}

}  // namespace lfn
