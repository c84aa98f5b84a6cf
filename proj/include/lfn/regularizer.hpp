#pragma once

#include <vector>

#include "lfn/layers.hpp"

namespace lfn {

// Per-pixel L2 norm of the RGB difference between the flow-warped second
// image and the first image: N x 1 x H x W.
Var occlusion_map(Var image1, Var image2, Var flow);

// Filter bank of the feature-driven local convolution: at every position the
// omega^2 column of D becomes softmax(-D^2). Output has D's shape.
Var build_filters(Var distance);

// Feature-driven local convolution. filters is N x omega^2 x H x W with taps
// folded row-major over the window (vertical offset outermost). Each output
// value is the filter-weighted average over the in-bounds taps of the
// window, renormalized by the in-bounds filter mass. All flow channels share
// one filter bank.
Var apply_flconv(Var flow, Var filters);

// Subtracts the per-sample, per-channel spatial mean.
Var remove_mean(Var flow);

// Flow regularization module R of one level.
struct RegularizerUnit {
  int omega = 3;
  std::vector<ConvLayer> stack;  // feature layers, leaky ReLU after each
  ConvLayer dist;                // omega^2 outputs, no activation

  // Width of the concat(F1, mean-removed flow, occlusion) input.
  int input_channels() const { return stack.empty() ? 0 : stack.front().in_ch; }
};

struct RegularizeOutput {
  Var flow;         // regularized flow, mean restored
  Var distance;     // variation metric D
  Var filters;      // f-lconv filter bank
  Var occlusion;    // occlusion map
  Var penultimate;  // output of the last stack layer (input of dist)
};

// Variation metric from concat(F1, mean-removed flow, occlusion).
Var distance_metric(Graph& g, const RegularizerUnit& unit, Var features1,
                    Var flow, Var occlusion, double slope,
                    Var* penultimate = nullptr);

// mean removal -> occlusion map -> distance metric -> filters -> f-lconv on
// the mean-removed flow -> mean restored.
RegularizeOutput regularize(Graph& g, const RegularizerUnit& unit,
                            Var features1, Var image1, Var image2, Var flow,
                            double slope);

namespace kernels {
// Folds omega x omega zero-padded patches of each channel into columns:
// output N x (C * omega^2) x H x W, channel-major.
Tensor fold_patches(const Tensor& x, int omega);
// In-bounds indicator of each tap: 1 x omega^2 x H x W.
Tensor fold_mask(int h, int w, int omega);
}  // namespace kernels

int omega_from_channels(int channels);

}  // namespace lfn
