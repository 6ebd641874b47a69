#pragma once

// Minimal tape-based reverse-mode differentiation over dense tensors. It
// covers exactly what the pruning loop trains: conv2d, fully connected, ReLU
// and softmax cross-entropy, in double precision.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace bpunch::ad {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s);
  Tensor(std::vector<std::size_t> s, std::vector<double> d);

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
};

class Tape;

/// Handle to a tape node.
struct Var {
  std::size_t id = 0;
};

class Tape {
 public:
  /// Leaves with requires_grad = false (input data) get no gradient pass.
  Var leaf(Tensor value, bool requires_grad = true);

  /// x: [B, N, H, W], w: [M, N, Kh, Kw], b: [M] -> [B, M, Ho, Wo]
  Var conv2d(Var x, Var w, Var b, std::size_t stride, std::size_t padding);
  /// x: [B, ...] flattened to [B, K], w: [M, K], b: [M] -> [B, M]
  Var linear(Var x, Var w, Var b);
  Var relu(Var x);
  /// Mean softmax cross-entropy of logits [B, K] against class labels.
  Var softmax_cross_entropy(Var logits, std::span<const int> labels);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() root w.r.t. v (zeros when unreachable).
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

  /// Seeds d(root)/d(root) = 1 for a scalar root and propagates.
  void backward(Var root);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void()> backward;
    bool requires_grad = true;
  };

  Var push(Tensor value, std::function<void()> backward = {});
  Tensor& grad_of(std::size_t id);

  std::vector<Node> nodes_;
};

}  // namespace bpunch::ad
