#pragma once

#include <random>
#include <vector>

#include "lfn/tensor.hpp"

namespace lfn {

struct SyntheticSample {
  Tensor image1;  // 1 x 3 x H x W, unit range
  Tensor image2;
  Tensor flow;    // 1 x 2 x H x W, full-image pixels
  Tensor valid;   // 1 x 1 x H x W: 1 where x + u is in the image and not occluded
};

struct SyntheticConfig {
  int extent = 64;
  double max_displacement = 8.0;
  int min_objects = 1;
  int max_objects = 3;
  // Background only: one global translation.
  bool translation_only = false;
  // Round displacements to whole pixels.
  bool integer_displacements = false;
};

// Textured background plus textured convex polygons, each with its own
// translation. Frame 2 is rendered by sampling every layer's texture at the
// translated position, so ground truth is exact. Deterministic per seed.
std::vector<SyntheticSample> generate_synthetic(unsigned seed, int count,
                                                const SyntheticConfig& config = {});

SyntheticSample flip_sample(const SyntheticSample& s);
SyntheticSample crop_sample(const SyntheticSample& s, int y0, int x0, int h, int w);
// Random crop to `crop` x `crop` then a coin-flip horizontal flip.
SyntheticSample augment(const SyntheticSample& s, int crop, bool flip,
                        std::mt19937_64& rng);

}  // namespace lfn
