#pragma once

#include <map>
#include <string>
#include <vector>

#include "lfn/autodiff.hpp"

namespace lfn {

// Flat, name-sorted parameter storage. Node-based, so Parameter addresses
// stay valid across insertions and moves of the store.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Shape shape);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const {
    return params_.count(name) != 0;
  }

  std::size_t total_count() const;
  // Parameters whose name starts with `prefix`.
  std::vector<Parameter*> with_prefix(const std::string& prefix);
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void zero_grad();

 private:
  std::map<std::string, Parameter> params_;
};

// Square-kernel convolution with bias and optional leaky ReLU. "Same"
// padding (k / 2) so stride-1 layers keep the spatial extent.
struct ConvLayer {
  std::string name;
  int in_ch = 0;
  int out_ch = 0;
  int kernel = 3;
  int stride = 1;
  bool activation = true;
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;

  Var apply(Graph& g, Var x, double slope) const;
  std::size_t count() const {
    return static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel + out_ch;
  }
};

// Registers weight "<name>.weight" and bias "<name>.bias" in the store.
ConvLayer make_conv(ParamStore& store, const std::string& name, int in_ch,
                    int out_ch, int kernel, int stride, bool activation);

// Runs layers in sequence; returns every layer output in order.
std::vector<Var> apply_stack(Graph& g, const std::vector<ConvLayer>& layers,
                             Var x, double slope);

}  // namespace lfn
