#pragma once

#include "lfn/autodiff.hpp"

namespace lfn {

// Search window and sampling of one cost volume.
struct CostVolumeSpec {
  int radius = 3;          // max |d| per axis, in level pixels
  int disp_step = 1;       // spacing of sampled displacements
  int spatial_stride = 1;  // matching grid spacing; >1 gives a sparse volume

  int bins_per_axis() const { return 2 * radius / disp_step + 1; }
  int channels() const { return bins_per_axis() * bins_per_axis(); }
  void validate() const;
};

// c(x, d) = F1(x) . F2(x + d) / N for every sampled displacement d, ordered
// with the vertical displacement outermost. Out-of-bounds F2 taps are zero.
Var correlation(Var f1, Var f2, int radius, int disp_step);

// Correlation evaluated on the spatial_stride grid only, then filled in by
// bilinear interpolation between grid samples (linear extrapolation past
// the last grid row/column). Grid positions carry the dense values.
Var sparse_correlation(Var f1, Var f2, int radius, int disp_step,
                       int spatial_stride);

Var cost_volume(Var f1, Var f2, const CostVolumeSpec& spec);

namespace kernels {
// Costs at grid positions (y, x) = (stride * i, stride * j).
Tensor correlation_grid(const Tensor& f1, const Tensor& f2,
                        const CostVolumeSpec& spec);
void correlation_grid_backward(const Tensor& f1, const Tensor& f2,
                               const Tensor& dgrid, const CostVolumeSpec& spec,
                               Tensor* df1, Tensor* df2);
// Interpolates grid values back to the full h x w extent.
Tensor grid_interpolate(const Tensor& grid, int stride, int h, int w);
Tensor grid_interpolate_adjoint(const Tensor& dense, int stride, int grid_h,
                                int grid_w);
}  // namespace kernels

}  // namespace lfn
