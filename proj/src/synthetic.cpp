#include "lfn/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>

namespace lfn {
namespace {

// Smoothly interpolated lattice noise on a bounded domain.
class ValueNoise {
 public:
  ValueNoise(double lo, double hi, double spacing, std::mt19937_64& rng)
      : origin_(lo), spacing_(spacing) {
    n_ = static_cast<int>(std::ceil((hi - lo) / spacing)) + 2;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    values_.resize(static_cast<std::size_t>(n_) * n_);
    for (double& v : values_) v = u(rng);
  }

  double operator()(double x, double y) const {
    const double gx = std::clamp((x - origin_) / spacing_, 0.0, n_ - 1.000001);
    const double gy = std::clamp((y - origin_) / spacing_, 0.0, n_ - 1.000001);
    const int x0 = static_cast<int>(gx);
    const int y0 = static_cast<int>(gy);
    const double tx = smooth(gx - x0);
    const double ty = smooth(gy - y0);
    auto at = [&](int yy, int xx) { return values_[static_cast<std::size_t>(yy) * n_ + xx]; };
    const double top = at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx;
    const double bottom = at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx;
    return top * (1 - ty) + bottom * ty;
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

  double origin_;
  double spacing_;
  int n_ = 0;
  std::vector<double> values_;
};

struct Texture {
  std::array<double, 3> base{};
  std::vector<std::array<ValueNoise, 3>> octaves;
  std::vector<double> amplitude;

  double operator()(int c, double x, double y) const {
    double v = base[c];
    for (std::size_t o = 0; o < octaves.size(); ++o) {
      v += amplitude[o] * (octaves[o][c](x, y) - 0.5);
    }
    return std::clamp(v, 0.0, 1.0);
  }
};

Texture make_texture(double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.25, 0.75);
  Texture t;
  for (double& b : t.base) b = u(rng);
  const double spacings[] = {12.0, 6.0, 3.0};
  const double amps[] = {0.6, 0.45, 0.3};
  for (int o = 0; o < 3; ++o) {
    t.octaves.push_back({ValueNoise(lo, hi, spacings[o], rng),
                         ValueNoise(lo, hi, spacings[o], rng),
                         ValueNoise(lo, hi, spacings[o], rng)});
    t.amplitude.push_back(amps[o]);
  }
  return t;
}

// Convex polygon with counter-clockwise vertices.
struct Polygon {
  std::vector<std::array<double, 2>> v;

  bool contains(double x, double y) const {
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto& a = v[i];
      const auto& b = v[(i + 1) % v.size()];
      if ((b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]) < 0.0) return false;
    }
    return true;
  }
};

Polygon make_polygon(int extent, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> centre(0.15 * extent, 0.85 * extent);
  std::uniform_real_distribution<double> radius(extent / 8.0, extent / 4.0);
  std::uniform_int_distribution<int> sides(3, 6);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const double cx = centre(rng);
  const double cy = centre(rng);
  const double rx = radius(rng);
  const double ry = radius(rng);
  std::vector<double> angles(sides(rng));
  for (double& a : angles) a = angle(rng);
  std::sort(angles.begin(), angles.end());
  Polygon p;
  // Ellipse points in increasing angle: convex, positive winding.
  for (double a : angles) p.v.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  return p;
}

struct Layer {
  Texture texture;
  std::optional<Polygon> shape;  // background when empty
  double tx = 0.0;
  double ty = 0.0;

  bool covers(double x, double y) const { return !shape || shape->contains(x, y); }
};

double draw_displacement(double max, bool integer, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-max, max);
  const double d = u(rng);
  return integer ? std::round(d) : d;
}

SyntheticSample render(const std::vector<Layer>& layers, int e) {
  SyntheticSample s{Tensor({1, 3, e, e}), Tensor({1, 3, e, e}), Tensor({1, 2, e, e}),
                    Tensor({1, 1, e, e})};
  const int top_index = static_cast<int>(layers.size()) - 1;
  for (int y = 0; y < e; ++y) {
    for (int x = 0; x < e; ++x) {
      int l1 = top_index;
      while (!layers[l1].covers(x, y)) --l1;
      const Layer& a = layers[l1];
      for (int c = 0; c < 3; ++c) s.image1.at(0, c, y, x) = a.texture(c, x, y);
      s.flow.at(0, 0, y, x) = a.tx;
      s.flow.at(0, 1, y, x) = a.ty;

      int l2 = top_index;
      while (!layers[l2].covers(x - layers[l2].tx, y - layers[l2].ty)) --l2;
      const Layer& b = layers[l2];
      for (int c = 0; c < 3; ++c) {
        s.image2.at(0, c, y, x) = b.texture(c, x - b.tx, y - b.ty);
      }

      const double x2 = x + a.tx;
      const double y2 = y + a.ty;
      bool visible = x2 >= 0 && x2 <= e - 1 && y2 >= 0 && y2 <= e - 1;
      for (int j = l1 + 1; visible && j <= top_index; ++j) {
        if (layers[j].covers(x2 - layers[j].tx, y2 - layers[j].ty)) visible = false;
      }
      s.valid.at(0, 0, y, x) = visible ? 1.0 : 0.0;
    }
  }
  return s;
}

}  // namespace

std::vector<SyntheticSample> generate_synthetic(unsigned seed, int count,
                                                const SyntheticConfig& config) {
  if (config.extent <= 0 || config.extent % 32 != 0) {
    throw DimensionError("synthetic extent must be a positive multiple of 32");
  }
  if (config.min_objects < 0 || config.max_objects < config.min_objects) {
    throw DimensionError("synthetic object range is empty");
  }
  std::mt19937_64 rng(seed);
  const double margin = config.max_displacement + 2.0;
  const double lo = -margin;
  const double hi = config.extent + margin;
  std::vector<SyntheticSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    std::vector<Layer> layers;
    Layer bg{make_texture(lo, hi, rng), std::nullopt};
    bg.tx = draw_displacement(config.max_displacement, config.integer_displacements, rng);
    bg.ty = draw_displacement(config.max_displacement, config.integer_displacements, rng);
    layers.push_back(std::move(bg));
    if (!config.translation_only) {
      std::uniform_int_distribution<int> objects(config.min_objects, config.max_objects);
      const int n = objects(rng);
      for (int k = 0; k < n; ++k) {
        Layer obj{make_texture(lo, hi, rng), make_polygon(config.extent, rng)};
        obj.tx = draw_displacement(config.max_displacement, config.integer_displacements, rng);
        obj.ty = draw_displacement(config.max_displacement, config.integer_displacements, rng);
        layers.push_back(std::move(obj));
      }
    }
    out.push_back(render(layers, config.extent));
  }
  return out;
}

namespace {

Tensor flip_tensor(const Tensor& t, bool negate_first) {
  Tensor out(t.shape());
  for (int b = 0; b < t.n(); ++b)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x < t.w(); ++x) {
          const double v = t.at(b, c, y, t.w() - 1 - x);
          out.at(b, c, y, x) = negate_first && c == 0 ? -v : v;
        }
  return out;
}

Tensor crop_tensor(const Tensor& t, int y0, int x0, int h, int w) {
  Tensor out({t.n(), t.c(), h, w});
  for (int b = 0; b < t.n(); ++b)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(b, c, y, x) = t.at(b, c, y0 + y, x0 + x);
  return out;
}

}  // namespace

SyntheticSample flip_sample(const SyntheticSample& s) {
  return {flip_tensor(s.image1, false), flip_tensor(s.image2, false),
          flip_tensor(s.flow, true), flip_tensor(s.valid, false)};
}

SyntheticSample crop_sample(const SyntheticSample& s, int y0, int x0, int h, int w) {
  if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > s.image1.h() || x0 + w > s.image1.w()) {
    throw DimensionError("crop window outside the sample");
  }
  SyntheticSample out{crop_tensor(s.image1, y0, x0, h, w), crop_tensor(s.image2, y0, x0, h, w),
                      crop_tensor(s.flow, y0, x0, h, w), crop_tensor(s.valid, y0, x0, h, w)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double x2 = x + out.flow.at(0, 0, y, x);
      const double y2 = y + out.flow.at(0, 1, y, x);
      if (x2 < 0 || x2 > w - 1 || y2 < 0 || y2 > h - 1) out.valid.at(0, 0, y, x) = 0.0;
    }
  }
  return out;
}

SyntheticSample augment(const SyntheticSample& s, int crop, bool flip, std::mt19937_64& rng) {
  const int h = s.image1.h();
  const int w = s.image1.w();
  if (crop > h || crop > w) throw DimensionError("crop larger than the sample");
  std::uniform_int_distribution<int> oy(0, h - crop);
  std::uniform_int_distribution<int> ox(0, w - crop);
  const int y0 = oy(rng);
  const int x0 = ox(rng);
  SyntheticSample out = crop == h && crop == w ? s : crop_sample(s, y0, x0, crop, crop);
  if (flip && std::bernoulli_distribution(0.5)(rng)) out = flip_sample(out);
  return out;
}

}  // namespace lfn
