#pragma once

#include "lfn/autodiff.hpp"

namespace lfn {

// Backward bilinear warping: out(x) = F(x + u(x)) interpolated from the
// four pixel neighbours of the sample point. Taps outside the map
// contribute zero. `flow` is N x 2 x H x W, channel 0 horizontal.
Var f_warp(Var features, Var flow);

// Warping of image channels; same kernel as f_warp.
Var image_warp(Var image, Var flow);

namespace kernels {
Tensor warp_forward(const Tensor& features, const Tensor& flow);
// Accumulates dL/dF into dfeatures and dL/du into dflow (either may be null).
void warp_backward(const Tensor& features, const Tensor& flow,
                   const Tensor& dout, Tensor* dfeatures, Tensor* dflow);
}  // namespace kernels

}  // namespace lfn
