#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "lfn/model.hpp"

namespace lfn {

// Middlebury color wheel: 55 RGB entries in [0, 1], red through yellow,
// green, cyan, blue and magenta.
const std::vector<std::array<double, 3>>& color_wheel();

// Fractional wheel index in [0, 54] for a flow direction; opposite
// directions are 27 apart.
double wheel_position(double u, double v);

// 1 x 3 x H x W unit-range rendering of the first flow in the batch.
// Saturation is |f| / max_mag; without max_mag the 99th percentile of the
// magnitudes is used. Zero flow is white; beyond max_mag colors darken.
Tensor flow_to_color(const Tensor& flow, std::optional<double> max_mag = std::nullopt);

// Last-layer filters of an M or S unit: one k x k tile per input channel
// for each flow component, each min-max normalized to [0, 1] (constant
// tiles become 0.5).
struct FlowBases {
  std::string unit;  // "m5", "s3", ...
  int kernel = 0;
  std::array<std::vector<Tensor>, 2> tiles;  // [component][channel], 1 x 1 x k x k
};

// unit is 'm' or 's'; throws UsageError for other units or absent levels.
FlowBases flow_bases(const Model& model, char unit, int level);

// Grid image per component with tiles upscaled by `scale` and separated by
// one-pixel gaps. Writes <dir>/<unit>_u.png and <dir>/<unit>_v.png and
// returns their paths.
std::vector<std::string> export_flow_bases(const Model& model, char unit, int level,
                                           const std::string& dir, int scale = 8);

Tensor tile_grid(const std::vector<Tensor>& tiles, int scale);

}  // namespace lfn
