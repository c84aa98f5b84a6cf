#include "lfn/layers.hpp"

namespace lfn {

Parameter& ParamStore::add(const std::string& name, Shape shape) {
  auto [it, inserted] = params_.try_emplace(name, name, Tensor(shape));
  if (!inserted) throw StateError("duplicate parameter " + name);
  return it->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw StateError("unknown parameter " + name);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw StateError("unknown parameter " + name);
  return it->second;
}

std::size_t ParamStore::total_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.count();
  return n;
}

std::vector<Parameter*> ParamStore::with_prefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (auto& [name, p] : params_) {
    if (name.compare(0, prefix.size(), prefix) == 0) out.push_back(&p);
  }
  return out;
}

std::vector<Parameter*> ParamStore::all() { return with_prefix(""); }

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  for (const auto& [name, p] : params_) out.push_back(&p);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

Var ConvLayer::apply(Graph& g, Var x, double slope) const {
  Var y = conv2d(x, g.param(*weight), g.param(*bias), stride, kernel / 2);
  return activation ? leaky_relu(y, slope) : y;
}

ConvLayer make_conv(ParamStore& store, const std::string& name, int in_ch,
                    int out_ch, int kernel, int stride, bool activation) {
  ConvLayer layer;
  layer.name = name;
  layer.in_ch = in_ch;
  layer.out_ch = out_ch;
  layer.kernel = kernel;
  layer.stride = stride;
  layer.activation = activation;
  layer.weight = &store.add(name + ".weight", {out_ch, in_ch, kernel, kernel});
  layer.bias = &store.add(name + ".bias", {1, 1, 1, out_ch});
  return layer;
}

std::vector<Var> apply_stack(Graph& g, const std::vector<ConvLayer>& layers,
                             Var x, double slope) {
  std::vector<Var> outs;
  outs.reserve(layers.size());
  for (const ConvLayer& layer : layers) {
    x = layer.apply(g, x, slope);
    outs.push_back(x);
  }
  return outs;
}

}  // namespace lfn
