#include "lfn/gradsuite.hpp"

#include <cmath>
#include <functional>

#include "lfn/costvolume.hpp"
#include "lfn/decoder.hpp"
#include "lfn/regularizer.hpp"
#include "lfn/training.hpp"
#include "lfn/warp.hpp"

namespace lfn {
namespace {

GradCheckOptions options(unsigned seed) {
  GradCheckOptions o;
  o.projection_seed = seed * 7 + 3;
  return o;
}

// Fractional parts mapped into [0.37, 0.67].
Tensor off_grid(Tensor t) {
  for (double& v : t.values()) v = std::floor(v) + 0.37 + 0.3 * (v - std::floor(v));
  return t;
}

Tensor away_from_zero(Tensor t) {
  for (double& v : t.values()) v = v < 0.0 ? v - 0.1 : v + 0.1;
  return t;
}

Tensor softmax_filters(const Tensor& d) {
  Graph g;
  return build_filters(g.constant(d)).value();
}

GradCheckReport toy_model(unsigned seed) {
  ModelConfig c = ModelConfig::liteflownet2();
  c.encoder_channels = {4, 4, 6, 6, 8, 8};
  c.m_widths = {8, 6};
  c.s_widths = {8, 6};
  c.r_widths = {8, 6};
  c.finest_level = 5;
  c.pseudo_level2 = false;
  Model m(c);
  random_init(m, seed);
  unsigned s = seed * 100;
  for (Parameter* p : m.params().all()) {
    if (p->name.ends_with(".bias")) p->value = random_uniform(p->value.shape(), ++s, -0.05, 0.05);
  }
  std::vector<Tensor> f1(6), f2(6), i1(6), i2(6);
  for (int k = 5; k <= 6; ++k) {
    const int e = 8 >> (k - 5);
    const int ch = c.encoder_channels_at(k);
    f1[k - 1] = random_uniform({1, ch, e, e}, ++s);
    f2[k - 1] = random_uniform({1, ch, e, e}, ++s);
    i1[k - 1] = random_uniform({1, 3, e, e}, ++s);
    i2[k - 1] = random_uniform({1, 3, e, e}, ++s);
  }
  const Tensor gt = random_uniform({1, 2, 8, 8}, ++s, -3, 3);
  LossSpec spec;
  spec.gt_scale = 1.0;
  auto run = [&](Graph& g) {
    FeaturePyramid p1, p2;
    std::array<Var, 6> im1, im2;
    for (int k = 5; k <= 6; ++k) {
      p1.levels[k - 1] = g.constant(f1[k - 1]);
      p2.levels[k - 1] = g.constant(f2[k - 1]);
      im1[k - 1] = g.constant(i1[k - 1]);
      im2[k - 1] = g.constant(i2[k - 1]);
    }
    return multiscale_loss(nete_forward(g, m, p1, p2, im1, im2, 8, 8), gt, spec);
  };
  GradCheckOptions o = options(seed);
  o.max_coords_per_tensor = 8;
  return finite_diff_check_params(run, m.params().all(), o);
}

using Case = std::function<GradCheckReport(unsigned)>;

const std::vector<std::pair<std::string, Case>>& cases() {
  static const std::vector<std::pair<std::string, Case>> all = {
      {"conv2d",
       [](unsigned s) {
         return finite_diff_check(
             [](Graph&, const std::vector<Var>& v) { return conv2d(v[0], v[1], v[2], 2, 1); },
             {random_uniform({2, 3, 7, 7}, s), random_uniform({4, 3, 3, 3}, s + 1),
              random_uniform({1, 1, 1, 4}, s + 2)},
             options(s));
       }},
      {"transposed_conv2d",
       [](unsigned s) {
         GradCheckReport worst;
         for (Border b : {Border::kZero, Border::kReplicate}) {
           auto r = finite_diff_check(
               [b](Graph&, const std::vector<Var>& v) { return transposed_conv2d(v[0], v[1], 2, b); },
               {random_uniform({1, 2, 4, 4}, s), random_uniform({2, 3, 4, 4}, s + 1)}, options(s));
           if (r.max_rel_error >= worst.max_rel_error) worst = r;
         }
         return worst;
       }},
      {"leaky_relu",
       [](unsigned s) {
         return finite_diff_check(
             [](Graph&, const std::vector<Var>& v) { return leaky_relu(v[0], 0.1); },
             {away_from_zero(random_uniform({1, 3, 5, 5}, s))}, options(s));
       }},
      {"f_warp",
       [](unsigned s) {
         return finite_diff_check(
             [](Graph&, const std::vector<Var>& v) { return f_warp(v[0], v[1]); },
             {random_uniform({1, 3, 5, 6}, s), off_grid(random_uniform({1, 2, 5, 6}, s + 1, -1.5, 1.5))},
             options(s));
       }},
      {"correlation",
       [](unsigned s) {
         return finite_diff_check(
             [](Graph&, const std::vector<Var>& v) { return correlation(v[0], v[1], 2, 1); },
             {random_uniform({1, 3, 5, 5}, s), random_uniform({1, 3, 5, 5}, s + 1)}, options(s));
       }},
      {"sparse_correlation",
       [](unsigned s) {
         return finite_diff_check(
             [](Graph&, const std::vector<Var>& v) { return sparse_correlation(v[0], v[1], 2, 2, 2); },
             {random_uniform({1, 3, 6, 7}, s), random_uniform({1, 3, 6, 7}, s + 1)}, options(s));
       }},
      {"build_filters",
       [](unsigned s) {
         return finite_diff_check(
             [](Graph&, const std::vector<Var>& v) { return build_filters(v[0]); },
             {random_uniform({1, 9, 4, 4}, s, -1.5, 1.5)}, options(s));
       }},
      {"apply_flconv",
       [](unsigned s) {
         return finite_diff_check(
             [](Graph&, const std::vector<Var>& v) { return apply_flconv(v[0], v[1]); },
             {random_uniform({1, 2, 5, 6}, s), softmax_filters(random_uniform({1, 9, 5, 6}, s + 1, -1.5, 1.5))},
             options(s));
       }},
      {"charbonnier",
       [](unsigned s) {
         return finite_diff_check(
             [](Graph&, const std::vector<Var>& v) { return charbonnier(v[0]); },
             {random_uniform({1, 2, 4, 4}, s, -2, 2)}, options(s));
       }},
      {"multiscale_loss",
       [](unsigned s) {
         const Tensor gt = random_uniform({2, 2, 8, 8}, s + 20, -4, 4);
         LossSpec spec;
         spec.gt_scale = 0.5;
         spec.full_weight = 0.5;
         std::vector<Tensor> in;
         for (int i = 0; i < 3; ++i) in.push_back(random_uniform({2, 2, 2, 2}, s + i, -2, 2));
         for (int i = 0; i < 3; ++i) in.push_back(random_uniform({2, 2, 4, 4}, s + 10 + i, -2, 2));
         in.push_back(random_uniform({2, 2, 8, 8}, s + 30, -4, 4));
         return finite_diff_check(
             [&](Graph&, const std::vector<Var>& v) {
               MultiScaleFlows f;
               f.levels.push_back({6, v[0], v[1], v[2]});
               f.levels.push_back({5, v[3], v[4], v[5]});
               f.full = v[6];
               return multiscale_loss(f, gt, spec);
             },
             in, options(s));
       }},
      {"toy_model", toy_model},
  };
  return all;
}

}  // namespace

const std::vector<std::string>& gradient_suite_ops() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& c : cases()) n.push_back(c.first);
    return n;
  }();
  return names;
}

std::vector<GradSuiteResult> run_gradient_suite(unsigned seed, const std::string& only) {
  std::vector<GradSuiteResult> out;
  for (const auto& [name, fn] : cases()) {
    if (!only.empty() && name != only) continue;
    out.push_back({name, fn(seed)});
  }
  if (!only.empty() && out.empty()) throw UsageError("unknown op '" + only + "'");
  return out;
}

}  // namespace lfn
