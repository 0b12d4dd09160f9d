#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "core/tensor.hpp"

// Minimal define-by-run reverse-mode differentiation over Tensor values.
// A Var is a shared handle to a graph node; ops record their backward
// closure only when grad mode is on and at least one input requires grad.
namespace mduit::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  // Zero-initialized on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad();
  Var detach() const { return Var(node_->value, false); }
  double item() const { return node_->value.item(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  friend Var make_op(Tensor, const std::vector<Var>&,
                     std::function<void(Node&)>);
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Wraps a freshly computed value as an op output. `backward` reads
// out.grad and accumulates into out.parents[i]->grad_buffer() for
// parents that require grad. Undefined inputs are skipped.
Var make_op(Tensor value, const std::vector<Var>& inputs,
            std::function<void(Node&)> backward);

// Seeds d(root)/d(root) = 1 for a single-element root and propagates.
void backward(const Var& root);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var reshape(const Var& a, Shape shape);
Var sum(const Var& a);
Var mean(const Var& a);

// x: (C_in, H, W); w: (C_out, C_in / groups, k, k); bias: (C_out) or undefined.
Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad,
           int groups = 1);
Var upsample_nearest2x(const Var& x);
Var concat_channels(const Var& a, const Var& b);
// (C, H, W) -> (C)
Var global_avg_pool(const Var& x);
// x: (n); w: (m, n); b: (m) -> (m)
Var linear(const Var& x, const Var& w, const Var& b);
// Generalized mean over the spatial dims of (C, H, W) with trainable
// exponent p (shape (1)); entries are clamped to >= eps before pow.
Var gem_pool(const Var& x, const Var& p, double eps);
Var l2_normalize(const Var& x);
// Contiguous range [offset, offset + length) of a rank-1 tensor.
Var slice(const Var& x, int offset, int length);

}  // namespace mduit::ag
