#include "lfn/encoder.hpp"

namespace lfn {
namespace {

// Index of the conv whose output is taken as pyramid level k (1-based).
constexpr std::array<int, 6> kLevelTaps{0, 3, 5, 7, 8, 9};
constexpr int kPyramidMultiple = 32;

}  // namespace

FeaturePyramid encode(Graph& g, const Model& model, Var image) {
  const Shape s = image.shape();
  if (s.c != 3) {
    throw DimensionError("netc: expected a 3-channel image, got " + s.str());
  }
  if (s.h % kPyramidMultiple != 0 || s.w % kPyramidMultiple != 0) {
    throw DimensionError("netc: image extent " + s.str() +
                         " is not a multiple of 32; pad the input first");
  }
  const std::vector<Var> outs =
      apply_stack(g, model.encoder(), image, model.config().leaky_slope);
  FeaturePyramid p;
  for (int k = 0; k < 6; ++k) p.levels[k] = outs[kLevelTaps[k]];
  return p;
}

std::pair<FeaturePyramid, FeaturePyramid> netc_forward(Graph& g,
                                                       const Model& model,
                                                       Var image1, Var image2) {
  require_same_shape(image1.shape(), image2.shape(), "netc_forward");
  return {encode(g, model, image1), encode(g, model, image2)};
}

NormalizedImage normalize_image(const Tensor& raw, double range) {
  if (raw.c() != 3) {
    throw DimensionError("normalize_image: expected 3 channels, got " +
                         raw.shape().str());
  }
  NormalizedImage out{(1.0 / range) * raw, Tensor({raw.n(), 3, 1, 1})};
  const std::size_t plane = raw.shape().plane();
  for (int b = 0; b < raw.n(); ++b) {
    for (int c = 0; c < 3; ++c) {
      double* p = out.image.plane(b, c);
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      const double m = s / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) p[i] -= m;
      out.mean.at(b, c, 0, 0) = m;
    }
  }
  return out;
}

Tensor restore_image(const NormalizedImage& normalized) {
  Tensor out = normalized.image;
  const std::size_t plane = out.shape().plane();
  for (int b = 0; b < out.n(); ++b) {
    for (int c = 0; c < out.c(); ++c) {
      double* p = out.plane(b, c);
      const double m = normalized.mean.at(b, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) p[i] += m;
    }
  }
  return out;
}

Tensor pad_to_multiple(const Tensor& t, int multiple) {
  const int h = (t.h() + multiple - 1) / multiple * multiple;
  const int w = (t.w() + multiple - 1) / multiple * multiple;
  if (h == t.h() && w == t.w()) return t;
  Tensor out({t.n(), t.c(), h, w});
  for (int b = 0; b < t.n(); ++b) {
    for (int c = 0; c < t.c(); ++c) {
      for (int y = 0; y < t.h(); ++y) {
        for (int x = 0; x < t.w(); ++x) out.at(b, c, y, x) = t.at(b, c, y, x);
      }
    }
  }
  return out;
}

}  // namespace lfn
