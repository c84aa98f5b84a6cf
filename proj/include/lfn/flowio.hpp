#pragma once

#include <cstdint>
#include <string>

#include "lfn/tensor.hpp"

namespace lfn {

// Middlebury .flo: "PIEH" (float 202021.25), int32 width, int32 height, then
// interleaved float32 (u, v) row by row, all little-endian.
inline constexpr float kFloMagic = 202021.25f;

// Returns 1 x 2 x H x W.
Tensor read_flo(const std::string& path);
// Writes the first batch entry of an N x 2 x H x W flow.
void write_flo(const std::string& path, const Tensor& flow);

// KITTI flow PNG: 16-bit RGB, u = (R - 2^15) / 64, v = (G - 2^15) / 64,
// B = 1 where the pixel has ground truth.
struct KittiFlow {
  Tensor flow;   // 1 x 2 x H x W
  Tensor valid;  // 1 x 1 x H x W, 0 or 1
};
KittiFlow read_kitti_png(const std::string& path);
// Values are rounded to 1/64 px and clamped to the 16-bit range. An empty
// valid tensor marks every pixel valid.
void write_kitti_png(const std::string& path, const Tensor& flow, const Tensor& valid = {});

uint16_t kitti_encode(double component);
double kitti_decode(uint16_t raw);

// Flow from either format, picked by extension (.flo or .png). Pixels
// without ground truth get valid = 0; .flo marks values above 1e9 invalid.
KittiFlow read_flow_any(const std::string& path);

// 8/16-bit PNG (gray, RGB, with or without alpha) or binary PPM/PGM,
// returned as 1 x 3 x H x W in [0, 1].
Tensor read_image(const std::string& path);
// 8-bit RGB PNG from a 1 x 3 x H x W unit-range image (values clamped).
void write_png(const std::string& path, const Tensor& image);
// Single-channel mask image: nonzero pixels are 1.
Tensor read_mask(const std::string& path);

}  // namespace lfn
