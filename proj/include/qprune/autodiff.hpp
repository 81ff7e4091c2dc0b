#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qprune/tensor.hpp"

namespace qprune {

// Handle to a node in a Graph. Only meaningful for the graph that issued it.
struct Var {
  std::size_t id = 0;
};

// Tape-based reverse-mode differentiation. Nodes are appended in
// construction order; backward visits them in exact reverse order, so
// gradients are bit-reproducible.
class Graph {
 public:
  Var parameter(Tensor value, std::string name = {});
  Var constant(Tensor value, std::string name = {});

  // Cross-correlation of x[N,Cin,H,W] with w[Cout,Cin,kh,kw], optional bias[Cout].
  Var conv2d(Var x, Var weight, const Var* bias, std::size_t stride, std::size_t padding,
             std::string name = {});
  // x[N,D] times w[O,D]^T plus bias[O].
  Var dense(Var x, Var weight, const Var* bias, std::string name = {});
  Var relu(Var x, std::string name = {});
  // Non-overlapping window max pooling (stride == window).
  Var max_pool2d(Var x, std::size_t window, std::string name = {});
  // [N, ...] -> [N, prod(...)]
  Var flatten(Var x, std::string name = {});
  // Mean cross-entropy over the batch; logits [N,K].
  Var softmax_cross_entropy(Var logits, std::span<const int> labels, std::string name = {});
  Var sum(Var x, std::string name = {});
  Var half_squared_norm(Var x, std::string name = {});

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  const std::string& name(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Seeds d(root) = seed and propagates. Root must be a single-element tensor.
  void backward(Var root, double seed = 1.0);
  bool has_gradients() const noexcept { return backward_done_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::string name;
    bool requires_grad = false;
    std::function<void(Graph&, std::size_t)> backward;
  };

  Var push(Tensor value, std::string name, bool requires_grad,
           std::function<void(Graph&, std::size_t)> backward);
  Node& node(Var v);
  const Node& node(Var v) const;
  Tensor& grad_of(std::size_t id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace qprune
