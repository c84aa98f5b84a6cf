#pragma once

#include <array>
#include <utility>

#include "lfn/model.hpp"

namespace lfn {

// Features of one image at pyramid levels 1..6.
struct FeaturePyramid {
  std::array<Var, 6> levels;

  Var at(int k) const { return levels.at(k - 1); }
};

// NetC on one image stream.
FeaturePyramid encode(Graph& g, const Model& model, Var image);

// Two-stream NetC; both streams read the same parameter instances. Inputs are
// N x 3 x H x W with H and W multiples of 32.
std::pair<FeaturePyramid, FeaturePyramid> netc_forward(Graph& g,
                                                       const Model& model,
                                                       Var image1, Var image2);

struct NormalizedImage {
  Tensor image;  // N x 3 x H x W, zero channel means
  Tensor mean;   // N x 3 x 1 x 1, in [0, 1] units
};

// Scales raw values to [0, 1] by dividing by `range` (255 for 8-bit data,
// 1 for unit-range reals), then removes each image's per-channel mean.
NormalizedImage normalize_image(const Tensor& raw, double range = 1.0);
// Inverse of normalize_image for unit-range output.
Tensor restore_image(const NormalizedImage& normalized);

// Zero-pads bottom/right so H and W become multiples of `multiple`.
Tensor pad_to_multiple(const Tensor& t, int multiple);

}  // namespace lfn
