#pragma once

#include <string>
#include <vector>

#include "lfn/decoder.hpp"
#include "lfn/model.hpp"

namespace fixture {

using namespace lfn;

// Narrow network with the default level schedule.
inline ModelConfig tiny_config(int coarsest = 6, int finest = 3, bool pseudo = false) {
  ModelConfig c = ModelConfig::liteflownet2();
  c.encoder_channels = {4, 4, 6, 6, 8, 8};
  c.m_widths = {8, 6};
  c.s_widths = {8, 6};
  c.r_widths = {8, 6};
  c.coarsest_level = coarsest;
  c.finest_level = finest;
  c.pseudo_level2 = pseudo;
  return c;
}

inline Model make_model(const ModelConfig& c, unsigned seed) {
  Model m(c);
  random_init(m, seed);
  return m;
}

// Random biases too, so zero-bias shortcuts cannot hide mistakes.
inline void randomize_biases(Model& m, unsigned seed, double scale = 0.05) {
  for (Parameter* p : m.params().all())
    if (p->name.ends_with(".bias")) p->value = random_uniform(p->value.shape(), seed++, -scale, scale);
}

// Per-level feature maps and average-pooled images for running NetE without
// the encoder. Level k has extent base / 2^(k - finest).
struct ToyInputs {
  std::vector<Tensor> f1, f2, i1, i2;  // indexed by level - 1
};

inline ToyInputs toy_inputs(const ModelConfig& c, int finest_extent, unsigned seed) {
  ToyInputs t;
  t.f1.resize(6);
  t.f2.resize(6);
  t.i1.resize(6);
  t.i2.resize(6);
  for (int k = c.finest_level; k <= c.coarsest_level; ++k) {
    const int e = finest_extent >> (k - c.finest_level);
    const int ch = c.encoder_channels_at(k);
    t.f1[k - 1] = random_uniform({1, ch, e, e}, seed + 10 * k);
    t.f2[k - 1] = random_uniform({1, ch, e, e}, seed + 10 * k + 1);
    t.i1[k - 1] = random_uniform({1, 3, e, e}, seed + 10 * k + 2);
    t.i2[k - 1] = random_uniform({1, 3, e, e}, seed + 10 * k + 3);
  }
  return t;
}

inline MultiScaleFlows run_toy(Graph& g, const Model& m, const ToyInputs& t, int out_extent,
                               const std::vector<Var>* feature_vars = nullptr) {
  FeaturePyramid p1, p2;
  std::array<Var, 6> im1, im2;
  for (int i = 0; i < 6; ++i) {
    if (!t.f1[i].empty()) {
      if (feature_vars != nullptr) {
        p1.levels[i] = (*feature_vars)[2 * i];
        p2.levels[i] = (*feature_vars)[2 * i + 1];
      } else {
        p1.levels[i] = g.constant(t.f1[i]);
        p2.levels[i] = g.constant(t.f2[i]);
      }
    }
    if (!t.i1[i].empty()) {
      im1[i] = g.constant(t.i1[i]);
      im2[i] = g.constant(t.i2[i]);
    }
  }
  return nete_forward(g, m, p1, p2, im1, im2, out_extent, out_extent);
}

}  // namespace fixture
