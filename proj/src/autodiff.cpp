#include "lfn/autodiff.hpp"

#include <cmath>

namespace lfn {

const Tensor& Var::value() const { return graph->value(id); }

Var Graph::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::input(Tensor value) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::param(Parameter& p) {
  if (!(p.grad.shape() == p.value.shape())) p.grad = Tensor(p.value.shape());
  Node node;
  node.value = p.value;
  node.param = &p;
  node.requires_grad = p.trainable;
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::record(Tensor value, std::vector<int> inputs, BackwardFn backward) {
  const int self = static_cast<int>(nodes_.size());
  Node node;
  node.value = std::move(value);
  for (int in : inputs) {
    if (in < 0 || in >= self) {
      throw StateError("graph: node " + std::to_string(self) +
                       " references input " + std::to_string(in) +
                       " that is not an earlier node");
    }
    node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
  }
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, self};
}

Tensor& Graph::grad_slot(int id) {
  Node& node = nodes_[id];
  if (node.grad.empty() && node.value.size() > 0) {
    node.grad = Tensor(node.value.shape());
  }
  return node.grad;
}

const Tensor& Graph::grad(Var v) { return grad_slot(v.id); }

void Graph::accumulate(int id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  grad_slot(id) += g;
}

void Graph::backward(Var out, const Tensor& seed) {
  if (out.graph != this) throw StateError("backward: foreign variable");
  require_same_shape(seed.shape(), value(out.id).shape(), "backward seed");
  for (Node& node : nodes_) node.grad = Tensor();
  grad_slot(out.id) += seed;
  for (int id = out.id; id >= 0; --id) {
    Node& node = nodes_[id];
    if (!node.requires_grad || node.grad.empty()) continue;
    for (int in : node.inputs) {
      if (in >= id) throw StateError("backward: cycle in graph");
    }
    if (node.param != nullptr) {
      node.param->grad += node.grad;
    } else if (node.backward) {
      node.backward(*this, node.grad);
    }
  }
}

void Graph::backward(Var out) {
  backward(out, Tensor(out.shape(), 1.0));
}

// ---------------------------------------------------------------------------

Var leaky_relu(Var input, double slope) {
  const Tensor& x = input.value();
  Tensor out(x.shape());
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    ov[i] = xv[i] >= 0.0 ? xv[i] : slope * xv[i];
  }
  const int xi = input.id;
  return input.graph->record(
      std::move(out), {xi}, [xi, slope](Graph& g, const Tensor& dy) {
        auto xv = g.value(xi).values();
        auto dv = dy.values();
        auto gx = g.grad_slot(xi).values();
        for (std::size_t i = 0; i < xv.size(); ++i) {
          gx[i] += xv[i] >= 0.0 ? dv[i] : slope * dv[i];
        }
      });
}

Var concat_channels(const std::vector<Var>& inputs) {
  if (inputs.empty()) throw DimensionError("concat_channels: no inputs");
  const Shape first = inputs.front().shape();
  int channels = 0;
  for (const Var& v : inputs) {
    require_same_spatial(first, v.shape(), "concat_channels");
    channels += v.shape().c;
  }
  Tensor out({first.n, channels, first.h, first.w});
  const std::size_t plane = first.plane();
  std::vector<int> ids;
  for (int b = 0; b < first.n; ++b) {
    int offset = 0;
    for (const Var& v : inputs) {
      const Tensor& t = v.value();
      std::copy(t.plane(b, 0), t.plane(b, 0) + t.c() * plane,
                out.plane(b, offset));
      offset += t.c();
    }
  }
  for (const Var& v : inputs) ids.push_back(v.id);
  return inputs.front().graph->record(
      std::move(out), ids, [ids, plane](Graph& g, const Tensor& dy) {
        for (int b = 0; b < dy.n(); ++b) {
          int offset = 0;
          for (int id : ids) {
            const int c = g.value(id).c();
            if (g.requires_grad(id)) {
              Tensor& gx = g.grad_slot(id);
              const double* src = dy.plane(b, offset);
              double* dst = gx.plane(b, 0);
              for (std::size_t i = 0; i < c * plane; ++i) dst[i] += src[i];
            }
            offset += c;
          }
        }
      });
}

Var add(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor out = a.value() + b.value();
  const int ai = a.id;
  const int bi = b.id;
  return a.graph->record(std::move(out), {ai, bi},
                         [ai, bi](Graph& g, const Tensor& dy) {
                           g.accumulate(ai, dy);
                           g.accumulate(bi, dy);
                         });
}

Var sub(Var a, Var b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor out = a.value() - b.value();
  const int ai = a.id;
  const int bi = b.id;
  return a.graph->record(std::move(out), {ai, bi},
                         [ai, bi](Graph& g, const Tensor& dy) {
                           g.accumulate(ai, dy);
                           g.accumulate(bi, -1.0 * dy);
                         });
}

Var scale(Var a, double s) {
  Tensor out = s * a.value();
  const int ai = a.id;
  return a.graph->record(std::move(out), {ai},
                         [ai, s](Graph& g, const Tensor& dy) {
                           g.accumulate(ai, s * dy);
                         });
}

Var spatial_mean(Var a) {
  const Tensor& x = a.value();
  Tensor out({x.n(), x.c(), 1, 1});
  const std::size_t plane = x.shape().plane();
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      const double* p = x.plane(b, c);
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      out.at(b, c, 0, 0) = s / static_cast<double>(plane);
    }
  }
  const int ai = a.id;
  return a.graph->record(
      std::move(out), {ai}, [ai, plane](Graph& g, const Tensor& dy) {
        Tensor& gx = g.grad_slot(ai);
        for (int b = 0; b < gx.n(); ++b) {
          for (int c = 0; c < gx.c(); ++c) {
            const double d = dy.at(b, c, 0, 0) / static_cast<double>(plane);
            double* p = gx.plane(b, c);
            for (std::size_t i = 0; i < plane; ++i) p[i] += d;
          }
        }
      });
}

Var add_broadcast(Var a, Var m) {
  const Tensor& x = a.value();
  const Tensor& mv = m.value();
  if (mv.n() != x.n() || mv.c() != x.c() || mv.h() != 1 || mv.w() != 1) {
    throw DimensionError("add_broadcast: " + mv.shape().str() +
                         " does not broadcast over " + x.shape().str());
  }
  Tensor out = x;
  const std::size_t plane = x.shape().plane();
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      double* p = out.plane(b, c);
      const double d = mv.at(b, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) p[i] += d;
    }
  }
  const int ai = a.id;
  const int mi = m.id;
  return a.graph->record(
      std::move(out), {ai, mi}, [ai, mi, plane](Graph& g, const Tensor& dy) {
        g.accumulate(ai, dy);
        if (!g.requires_grad(mi)) return;
        Tensor& gm = g.grad_slot(mi);
        for (int b = 0; b < dy.n(); ++b) {
          for (int c = 0; c < dy.c(); ++c) {
            const double* p = dy.plane(b, c);
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += p[i];
            gm.at(b, c, 0, 0) += s;
          }
        }
      });
}

Var sum_all(Var a) {
  Tensor out({1, 1, 1, 1}, sum(a.value()));
  const int ai = a.id;
  return a.graph->record(std::move(out), {ai},
                         [ai](Graph& g, const Tensor& dy) {
                           Tensor& gx = g.grad_slot(ai);
                           const double d = dy.data()[0];
                           for (double& v : gx.values()) v += d;
                         });
}

Var mean_all(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum_all(a), 1.0 / n);
}

Var weighted_sum(Var a, const Tensor& weights) {
  Tensor out({1, 1, 1, 1}, dot(a.value(), weights));
  const int ai = a.id;
  return a.graph->record(std::move(out), {ai},
                         [ai, weights](Graph& g, const Tensor& dy) {
                           g.accumulate(ai, dy.data()[0] * weights);
                         });
}

Var channel_norm(Var a) {
  const Tensor& x = a.value();
  Tensor out({x.n(), 1, x.h(), x.w()});
  const std::size_t plane = x.shape().plane();
  for (int b = 0; b < x.n(); ++b) {
    double* o = out.plane(b, 0);
    for (int c = 0; c < x.c(); ++c) {
      const double* p = x.plane(b, c);
      for (std::size_t i = 0; i < plane; ++i) o[i] += p[i] * p[i];
    }
    for (std::size_t i = 0; i < plane; ++i) o[i] = std::sqrt(o[i]);
  }
  const int ai = a.id;
  const int self = static_cast<int>(a.graph->size());
  return a.graph->record(
      std::move(out), {ai}, [ai, self, plane](Graph& g, const Tensor& dy) {
        const Tensor& x = g.value(ai);
        const Tensor& norm = g.value(self);
        Tensor& gx = g.grad_slot(ai);
        for (int b = 0; b < x.n(); ++b) {
          const double* nv = norm.plane(b, 0);
          const double* d = dy.plane(b, 0);
          for (int c = 0; c < x.c(); ++c) {
            const double* p = x.plane(b, c);
            double* gp = gx.plane(b, c);
            for (std::size_t i = 0; i < plane; ++i) {
              if (nv[i] > 0.0) gp[i] += d[i] * p[i] / nv[i];
            }
          }
        }
      });
}

namespace {

// Source index pair and interpolation weight per output coordinate.
struct AxisTap {
  int i0, i1;
  double t;
};

std::vector<AxisTap> resize_taps(int in, int out) {
  std::vector<AxisTap> taps(out);
  const double ratio = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * ratio - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, s - i0};
  }
  return taps;
}

}  // namespace

namespace kernels {

Tensor resize_bilinear(const Tensor& a, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1 || a.h() < 1 || a.w() < 1) {
    throw DimensionError("resize_bilinear: empty extent");
  }
  const auto ty = resize_taps(a.h(), out_h);
  const auto tx = resize_taps(a.w(), out_w);
  Tensor out({a.n(), a.c(), out_h, out_w});
  for (int b = 0; b < a.n(); ++b) {
    for (int c = 0; c < a.c(); ++c) {
      for (int y = 0; y < out_h; ++y) {
        const AxisTap& r = ty[y];
        for (int x = 0; x < out_w; ++x) {
          const AxisTap& q = tx[x];
          const double top = (1 - q.t) * a.at(b, c, r.i0, q.i0) +
                             q.t * a.at(b, c, r.i0, q.i1);
          const double bot = (1 - q.t) * a.at(b, c, r.i1, q.i0) +
                             q.t * a.at(b, c, r.i1, q.i1);
          out.at(b, c, y, x) = (1 - r.t) * top + r.t * bot;
        }
      }
    }
  }
  return out;
}

Tensor avg_pool2(const Tensor& a) {
  if (a.h() % 2 != 0 || a.w() % 2 != 0) {
    throw DimensionError("avg_pool2: odd extent " + a.shape().str());
  }
  Tensor out({a.n(), a.c(), a.h() / 2, a.w() / 2});
  for (int b = 0; b < a.n(); ++b) {
    for (int c = 0; c < a.c(); ++c) {
      for (int y = 0; y < out.h(); ++y) {
        for (int x = 0; x < out.w(); ++x) {
          out.at(b, c, y, x) =
              0.25 * (a.at(b, c, 2 * y, 2 * x) + a.at(b, c, 2 * y, 2 * x + 1) +
                      a.at(b, c, 2 * y + 1, 2 * x) +
                      a.at(b, c, 2 * y + 1, 2 * x + 1));
        }
      }
    }
  }
  return out;
}

}  // namespace kernels

Var resize_bilinear(Var a, int out_h, int out_w) {
  Tensor out = kernels::resize_bilinear(a.value(), out_h, out_w);
  const int ai = a.id;
  return a.graph->record(
      std::move(out), {ai}, [ai, out_h, out_w](Graph& g, const Tensor& dy) {
        Tensor& gx = g.grad_slot(ai);
        const auto ty = resize_taps(gx.h(), out_h);
        const auto tx = resize_taps(gx.w(), out_w);
        for (int b = 0; b < gx.n(); ++b) {
          for (int c = 0; c < gx.c(); ++c) {
            for (int y = 0; y < out_h; ++y) {
              const AxisTap& r = ty[y];
              for (int x = 0; x < out_w; ++x) {
                const AxisTap& q = tx[x];
                const double d = dy.at(b, c, y, x);
                gx.at(b, c, r.i0, q.i0) += (1 - r.t) * (1 - q.t) * d;
                gx.at(b, c, r.i0, q.i1) += (1 - r.t) * q.t * d;
                gx.at(b, c, r.i1, q.i0) += r.t * (1 - q.t) * d;
                gx.at(b, c, r.i1, q.i1) += r.t * q.t * d;
              }
            }
          }
        }
      });
}

Var crop(Var a, int h, int w) {
  const Tensor& x = a.value();
  if (h > x.h() || w > x.w() || h < 1 || w < 1) {
    throw DimensionError("crop: " + std::to_string(h) + "x" +
                         std::to_string(w) + " outside " + x.shape().str());
  }
  Tensor out({x.n(), x.c(), h, w});
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) out.at(b, c, y, xx) = x.at(b, c, y, xx);
      }
    }
  }
  const int ai = a.id;
  return a.graph->record(std::move(out), {ai},
                         [ai](Graph& g, const Tensor& dy) {
                           Tensor& gx = g.grad_slot(ai);
                           for (int b = 0; b < dy.n(); ++b) {
                             for (int c = 0; c < dy.c(); ++c) {
                               for (int y = 0; y < dy.h(); ++y) {
                                 for (int x = 0; x < dy.w(); ++x) {
                                   gx.at(b, c, y, x) += dy.at(b, c, y, x);
                                 }
                               }
                             }
                           }
                         });
}

}  // namespace lfn
