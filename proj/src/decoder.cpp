#include "lfn/decoder.hpp"

#include "lfn/warp.hpp"

namespace lfn {

const LevelFlows& MultiScaleFlows::at(int level) const {
  for (const LevelFlows& l : levels) {
    if (l.level == level) return l;
  }
  throw DimensionError("no flow computed at level " + std::to_string(level));
}

namespace {

// Multiplies the horizontal and vertical flow channels by separate factors.
Var scale_flow(Var flow, double sx, double sy) {
  if (sx == sy) return scale(flow, sx);
  Tensor out = flow.value();
  const std::size_t plane = out.shape().plane();
  for (int b = 0; b < out.n(); ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      out.plane(b, 0)[i] *= sx;
      out.plane(b, 1)[i] *= sy;
    }
  }
  const int fi = flow.id;
  return flow.graph->record(
      std::move(out), {fi}, [fi, sx, sy, plane](Graph& g, const Tensor& dy) {
        Tensor& gf = g.grad_slot(fi);
        for (int b = 0; b < dy.n(); ++b) {
          for (std::size_t i = 0; i < plane; ++i) {
            gf.plane(b, 0)[i] += sx * dy.plane(b, 0)[i];
            gf.plane(b, 1)[i] += sy * dy.plane(b, 1)[i];
          }
        }
      });
}

}  // namespace

Var flow_to_resolution(Var flow, int h, int w) {
  const Shape s = flow.shape();
  Var resized = resize_bilinear(flow, h, w);
  return scale_flow(resized, static_cast<double>(w) / s.w,
                    static_cast<double>(h) / s.h);
}

std::array<Var, 6> image_pyramid(Graph& g, const Tensor& image) {
  std::array<Var, 6> out;
  Tensor level = image;
  for (int k = 0; k < 6; ++k) {
    if (k > 0) level = kernels::avg_pool2(level);
    out[k] = g.constant(level);
  }
  return out;
}

Var upsample_flow2x(Graph& g, Parameter& upconv, Var flow) {
  return transposed_conv2d(flow, g.param(upconv), 2, Border::kReplicate);
}

Var descriptor_matching_unit(Graph& g, const LevelUnits& units, Var f1, Var f2,
                             Var upsampled_prev, double slope,
                             Var* penultimate) {
  require_same_shape(f1.shape(), f2.shape(), "descriptor_matching_unit");
  Var warped = upsampled_prev.valid() ? f_warp(f2, upsampled_prev) : f2;
  Var cost = cost_volume(f1, warped, units.settings.cost);
  if (cost.shape().c != units.m.front().in_ch) {
    throw DimensionError("descriptor_matching_unit: cost volume has " +
                         std::to_string(cost.shape().c) +
                         " channels, unit expects " +
                         std::to_string(units.m.front().in_ch));
  }
  const std::vector<Var> outs = apply_stack(g, units.m, cost, slope);
  if (penultimate != nullptr) *penultimate = outs[outs.size() - 2];
  return upsampled_prev.valid() ? add(outs.back(), upsampled_prev)
                                : outs.back();
}

Var subpixel_refinement_unit(Graph& g, const LevelUnits& units, Var f1, Var f2,
                             Var flow_m, double slope) {
  Var input = concat_channels({f1, f_warp(f2, flow_m), flow_m});
  if (input.shape().c != units.s.front().in_ch) {
    throw DimensionError("subpixel_refinement_unit: concat has " +
                         std::to_string(input.shape().c) +
                         " channels, unit expects " +
                         std::to_string(units.s.front().in_ch));
  }
  const std::vector<Var> outs = apply_stack(g, units.s, input, slope);
  return add(outs.back(), flow_m);
}

LevelFlows pseudo_level2(Graph& g, const PseudoUnits& units, Var features_m3,
                         Var features_r3, Var flow3, double slope) {
  if (!features_m3.valid() || !features_r3.valid() || !flow3.valid()) {
    throw StateError("pseudo level 2 needs cached level-3 activations");
  }
  const Shape s = flow3.shape();
  const int h = 2 * s.h;
  const int w = 2 * s.w;
  Var up_flow = scale(resize_bilinear(flow3, h, w), 2.0);
  Var feat_m = resize_bilinear(features_m3, h, w);
  Var feat_r = resize_bilinear(features_r3, h, w);

  LevelFlows out;
  out.level = 2;
  out.m = add(units.m_last.apply(g, feat_m, slope), up_flow);
  Var mean = spatial_mean(out.m);
  Var centered = add_broadcast(out.m, scale(mean, -1.0));
  Var filters = build_filters(units.r_dist.apply(g, feat_r, slope));
  out.r = add_broadcast(apply_flconv(centered, filters), mean);
  return out;
}

MultiScaleFlows nete_forward(Graph& g, const Model& model,
                             const FeaturePyramid& p1, const FeaturePyramid& p2,
                             const std::array<Var, 6>& images1,
                             const std::array<Var, 6>& images2, int out_h,
                             int out_w, ForwardLimit limit) {
  const ModelConfig& cfg = model.config();
  const double slope = cfg.leaky_slope;
  const int stop = limit.level == 0 ? cfg.output_level() : limit.level;
  MultiScaleFlows result;
  Var prev;
  Var penultimate_m3;
  Var penultimate_r3;
  for (const LevelUnits& units : model.levels()) {
    const int k = units.level;
    if (k < stop) break;
    const bool last = k == stop;
    Var f1 = p1.at(k);
    Var f2 = p2.at(k);
    Var up;
    if (prev.valid()) up = upsample_flow2x(g, *units.upconv, prev);
    LevelFlows lf;
    lf.level = k;
    Var pen_m;
    lf.m = descriptor_matching_unit(g, units, f1, f2, up, slope, &pen_m);
    lf.s = subpixel_refinement_unit(g, units, f1, f2, lf.m, slope);
    if (!last || limit.with_regularizer) {
      RegularizeOutput r = regularize(g, units.r, f1, images1[k - 1],
                                      images2[k - 1], lf.s, slope);
      lf.r = r.flow;
      if (k == 3) penultimate_r3 = r.penultimate;
    }
    if (k == 3) penultimate_m3 = pen_m;
    result.levels.push_back(lf);
    prev = lf.final();
  }
  if (stop == 2 && model.pseudo()) {
    result.levels.push_back(pseudo_level2(g, *model.pseudo(), penultimate_m3,
                                          penultimate_r3, prev, slope));
  }
  result.full = flow_to_resolution(result.finest(), out_h, out_w);
  return result;
}

MultiScaleFlows forward(Graph& g, const Model& model, const Tensor& image1,
                        const Tensor& image2, ForwardLimit limit) {
  Var i1 = g.constant(image1);
  Var i2 = g.constant(image2);
  auto [p1, p2] = netc_forward(g, model, i1, i2);
  return nete_forward(g, model, p1, p2, image_pyramid(g, image1),
                      image_pyramid(g, image2), image1.h(), image1.w(), limit);
}

Tensor infer_flow(const Model& model, const Tensor& image1,
                  const Tensor& image2) {
  require_same_shape(image1.shape(), image2.shape(), "infer_flow");
  const Tensor a = pad_to_multiple(normalize_image(image1).image, 32);
  const Tensor b = pad_to_multiple(normalize_image(image2).image, 32);
  Graph g;
  MultiScaleFlows flows = forward(g, model, a, b);
  return crop(flows.full, image1.h(), image1.w()).value();
}

}  // namespace lfn
