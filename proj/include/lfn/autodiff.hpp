#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lfn/tensor.hpp"

namespace lfn {

// A named trainable array with a gradient slot of identical shape.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
  std::size_t count() const { return value.size(); }
};

class Graph;

// Handle to a node recorded in a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return graph != nullptr && id >= 0; }
};

// Recorded-operation tape for reverse-mode differentiation. Nodes are
// appended in evaluation order, so the tape is already topologically sorted.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf that never receives a gradient.
  Var constant(Tensor value);
  // Leaf whose gradient is kept on the node (read back with grad()).
  Var input(Tensor value);
  // Leaf bound to a Parameter; backward accumulates into param.grad when
  // the parameter is trainable.
  Var param(Parameter& p);

  Var record(Tensor value, std::vector<int> inputs, BackwardFn backward);

  const Tensor& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  const std::vector<int>& inputs(int id) const { return nodes_[id].inputs; }
  // Parameter bound to a leaf, nullptr otherwise.
  const Parameter* parameter(int id) const { return nodes_[id].param; }
  // Gradient accumulated on a node by the last backward pass (zeros if the
  // node was not reached).
  const Tensor& grad(Var v);
  // Mutable gradient slot for use inside backward functions.
  Tensor& grad_slot(int id);
  void accumulate(int id, const Tensor& g);

  // Propagates `seed` (same shape as out) back through the tape.
  void backward(Var out, const Tensor& seed);
  // Scalar convenience: seeds with ones.
  void backward(Var out);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };
  std::deque<Node> nodes_;
};

// Core differentiable operators. All tensors are N x C x H x W.

// Cross-correlation with per-output-channel bias; weight is
// (out_ch, in_ch, k, k), zero padding.
Var conv2d(Var input, Var weight, Var bias, int stride, int pad);
Var conv2d(Var input, Var weight, int stride, int pad);

enum class Border { kZero, kReplicate };

// Fractionally strided convolution with a 4x4 kernel and 2x upsampling.
// weight is (in_ch, out_ch, 4, 4). kReplicate clamps input taps that fall
// outside the image instead of treating them as zero.
Var transposed_conv2d(Var input, Var weight, int stride,
                      Border border = Border::kZero);

Var leaky_relu(Var input, double slope);
Var concat_channels(const std::vector<Var>& inputs);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
// Per-sample, per-channel spatial mean: N x C x 1 x 1.
Var spatial_mean(Var a);
// a + m where m is N x C x 1 x 1, broadcast over space.
Var add_broadcast(Var a, Var m);
// Sum over all elements: 1 x 1 x 1 x 1.
Var sum_all(Var a);
Var mean_all(Var a);
// Weighted sum sum_i w_i a_i with a fixed weight tensor.
Var weighted_sum(Var a, const Tensor& weights);
// Euclidean norm across channels: N x 1 x H x W. Gradient is zero where
// the norm is zero.
Var channel_norm(Var a);
// Bilinear resize with half-pixel centres and edge clamping.
Var resize_bilinear(Var a, int out_h, int out_w);
// Crop to [0, h) x [0, w).
Var crop(Var a, int h, int w);

// Plain-tensor kernels shared by the graph ops and by non-differentiable
// callers (image pyramids, ground-truth preparation).
namespace kernels {
Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor* bias,
                      int stride, int pad);
Tensor transposed_conv2d_forward(const Tensor& x, const Tensor& w, int stride,
                                 Border border);
Tensor resize_bilinear(const Tensor& a, int out_h, int out_w);
Tensor avg_pool2(const Tensor& a);
}  // namespace kernels

}  // namespace lfn
