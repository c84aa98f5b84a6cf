#pragma once

#include <array>
#include <vector>

#include "lfn/encoder.hpp"

namespace lfn {

// Flows produced at one pyramid level, in that level's pixel units.
struct LevelFlows {
  int level = 0;
  Var m;  // after descriptor matching
  Var s;  // after sub-pixel refinement (absent at the pseudo level)
  Var r;  // after regularization (absent when the forward stops before R)

  // Last flow produced at this level.
  Var final() const { return r.valid() ? r : (s.valid() ? s : m); }
};

struct MultiScaleFlows {
  std::vector<LevelFlows> levels;  // coarsest first
  Var full;  // finest flow resized to the input extent, full-image pixels

  const LevelFlows& at(int level) const;
  Var finest() const { return levels.back().final(); }
};

// Where a truncated forward stops; used by stage-wise training.
struct ForwardLimit {
  int level = 0;  // finest level to run; 0 runs the whole decoder
  bool with_regularizer = true;  // whether R runs at that finest level
};

// Average-pooled copies of a normalized image at levels 1..6.
std::array<Var, 6> image_pyramid(Graph& g, const Tensor& image);

// 2x spatial upsampling with doubled magnitude: learnable 4x4 transposed
// convolution over edge-replicated input.
Var upsample_flow2x(Graph& g, Parameter& upconv, Var flow);

// u_m = M(cost volume(F1, warp(F2, up))) + up, where up is the upsampled
// previous flow (absent at the coarsest level, where the warp is identity).
// `penultimate` receives the output of the layer before the last.
Var descriptor_matching_unit(Graph& g, const LevelUnits& units, Var f1, Var f2,
                             Var upsampled_prev, double slope,
                             Var* penultimate = nullptr);

// u_s = S(concat(F1, warp(F2, u_m), u_m)) + u_m.
Var subpixel_refinement_unit(Graph& g, const LevelUnits& units, Var f1, Var f2,
                             Var flow_m, double slope);

// Level-2 flow from upsampled level-3 activations and the retained last
// layers. Throws StateError when the level-3 activations are missing.
LevelFlows pseudo_level2(Graph& g, const PseudoUnits& units, Var features_m3,
                         Var features_r3, Var flow3, double slope);

// NetE: levels coarsest -> finest (M, S, R each), optional pseudo level 2,
// then the finest flow resized to out_h x out_w in full-image pixels.
MultiScaleFlows nete_forward(Graph& g, const Model& model,
                             const FeaturePyramid& p1, const FeaturePyramid& p2,
                             const std::array<Var, 6>& images1,
                             const std::array<Var, 6>& images2, int out_h,
                             int out_w, ForwardLimit limit = {});

// Encoder + decoder on normalized images whose extent is a multiple of 32.
MultiScaleFlows forward(Graph& g, const Model& model, const Tensor& image1,
                        const Tensor& image2, ForwardLimit limit = {});

// Inference on raw unit-range images of any extent: normalization, padding
// to a multiple of 32, forward, crop. Returns N x 2 x H x W.
Tensor infer_flow(const Model& model, const Tensor& image1,
                  const Tensor& image2);

// Resizes a level-local flow to (h, w), scaling magnitudes by the extent
// ratio of each axis.
Var flow_to_resolution(Var flow, int h, int w);

}  // namespace lfn
