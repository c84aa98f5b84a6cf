#include "lfn/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "lfn/flowio.hpp"

namespace lfn {

const std::vector<std::array<double, 3>>& color_wheel() {
  static const std::vector<std::array<double, 3>> wheel = [] {
    constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    std::vector<std::array<double, 3>> w;
    for (int i = 0; i < RY; ++i) w.push_back({1.0, double(i) / RY, 0.0});
    for (int i = 0; i < YG; ++i) w.push_back({1.0 - double(i) / YG, 1.0, 0.0});
    for (int i = 0; i < GC; ++i) w.push_back({0.0, 1.0, double(i) / GC});
    for (int i = 0; i < CB; ++i) w.push_back({0.0, 1.0 - double(i) / CB, 1.0});
    for (int i = 0; i < BM; ++i) w.push_back({double(i) / BM, 0.0, 1.0});
    for (int i = 0; i < MR; ++i) w.push_back({1.0, 0.0, 1.0 - double(i) / MR});
    return w;
  }();
  return wheel;
}

double wheel_position(double u, double v) {
  const int n = static_cast<int>(color_wheel().size());
  const double a = std::atan2(-v, -u) / std::numbers::pi;
  return (a + 1.0) / 2.0 * (n - 1);
}

Tensor flow_to_color(const Tensor& flow, std::optional<double> max_mag) {
  if (flow.c() != 2) throw DimensionError("flow_to_color: expected 2 channels");
  const int h = flow.h();
  const int w = flow.w();
  double scale = 0.0;
  if (max_mag) {
    scale = *max_mag;
  } else {
    std::vector<double> mags;
    mags.reserve(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) mags.push_back(std::hypot(flow.at(0, 0, y, x), flow.at(0, 1, y, x)));
    if (!mags.empty()) {
      const std::size_t k = std::min(mags.size() - 1, static_cast<std::size_t>(0.99 * (mags.size() - 1) + 0.5));
      std::nth_element(mags.begin(), mags.begin() + k, mags.end());
      scale = mags[k];
    }
  }
  if (!(scale > 0.0)) scale = 1.0;
  const auto& wheel = color_wheel();
  const int n = static_cast<int>(wheel.size());
  Tensor img({1, 3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = flow.at(0, 0, y, x);
      const double v = flow.at(0, 1, y, x);
      const double rad = std::hypot(u, v) / scale;
      const double fk = wheel_position(u, v);
      const int k0 = static_cast<int>(fk);
      const int k1 = (k0 + 1) % n;
      const double f = fk - k0;
      for (int c = 0; c < 3; ++c) {
        double col = (1.0 - f) * wheel[k0][c] + f * wheel[k1][c];
        col = rad <= 1.0 ? 1.0 - rad * (1.0 - col) : col * 0.75;
        img.at(0, c, y, x) = col;
      }
    }
  return img;
}

FlowBases flow_bases(const Model& model, char unit, int level) {
  if (unit != 'm' && unit != 's') throw UsageError(std::string("unknown unit '") + unit + "' (expected m or s)");
  const LevelUnits* lu = nullptr;
  for (const LevelUnits& l : model.levels()) {
    if (l.level == level) lu = &l;
  }
  if (lu == nullptr) throw UsageError("no decoder level " + std::to_string(level) + " in this model");
  const std::vector<ConvLayer>& stack = unit == 'm' ? lu->m : lu->s;
  if (stack.empty()) throw UsageError("unit has no layers");
  const ConvLayer& last = stack.back();
  const Tensor& wt = last.weight->value;
  FlowBases out;
  out.unit = std::string(1, unit) + std::to_string(level);
  out.kernel = last.kernel;
  for (int comp = 0; comp < 2; ++comp) {
    for (int ch = 0; ch < last.in_ch; ++ch) {
      Tensor t({1, 1, last.kernel, last.kernel});
      double lo = wt.at(comp, ch, 0, 0), hi = lo;
      for (int i = 0; i < last.kernel; ++i)
        for (int j = 0; j < last.kernel; ++j) {
          lo = std::min(lo, wt.at(comp, ch, i, j));
          hi = std::max(hi, wt.at(comp, ch, i, j));
        }
      for (int i = 0; i < last.kernel; ++i)
        for (int j = 0; j < last.kernel; ++j) {
          t.at(0, 0, i, j) = hi > lo ? (wt.at(comp, ch, i, j) - lo) / (hi - lo) : 0.5;
        }
      out.tiles[comp].push_back(std::move(t));
    }
  }
  return out;
}

Tensor tile_grid(const std::vector<Tensor>& tiles, int scale) {
  if (tiles.empty()) throw DimensionError("tile_grid: no tiles");
  if (scale < 1) throw DimensionError("tile_grid: scale must be >= 1");
  const int k = tiles.front().h();
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(tiles.size()))));
  const int rows = (static_cast<int>(tiles.size()) + cols - 1) / cols;
  const int cell = k * scale + 1;
  Tensor img({1, 1, rows * cell + 1, cols * cell + 1});
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    const int oy = static_cast<int>(t) / cols * cell + 1;
    const int ox = static_cast<int>(t) % cols * cell + 1;
    for (int y = 0; y < k * scale; ++y)
      for (int x = 0; x < k * scale; ++x) img.at(0, 0, oy + y, ox + x) = tiles[t].at(0, 0, y / scale, x / scale);
  }
  return img;
}

std::vector<std::string> export_flow_bases(const Model& model, char unit, int level,
                                           const std::string& dir, int scale) {
  const FlowBases b = flow_bases(model, unit, level);
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  const char* names[] = {"u", "v"};
  for (int comp = 0; comp < 2; ++comp) {
    const std::string path = (std::filesystem::path(dir) / (b.unit + "_" + names[comp] + ".png")).string();
    write_png(path, tile_grid(b.tiles[comp], scale));
    paths.push_back(path);
  }
  return paths;
}

}  // namespace lfn
