#ifndef WAVERORA_AUTOGRAD_HPP
#define WAVERORA_AUTOGRAD_HPP

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "waverora/tensor.hpp"

namespace waverora {

/// A named learnable tensor. `grad` always has the shape of `value` and is
/// accumulated by Tape::backward; only the trainer zeroes or consumes it.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  mutable Tensor grad;

  void zero_grad() const { grad.fill(0.0); }
};

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Records a computation for reverse-mode differentiation. Nodes are appended
/// in evaluation order, so the creation order is a valid topological order.
/// A tape constructed with `record = false` evaluates values only.
class Tape {
 public:
  /// Receives the node's own value and the gradient flowing into it.
  using Backward = std::function<void(Tape&, const Tensor& out, const Tensor& grad_out)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor value);
  Var param(const Parameter& p);

  /// Appends a derived node. `inputs` decide whether the node needs a gradient;
  /// `backward` is dropped when nothing upstream does.
  Var push(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var push(Tensor value, std::span<const Var> inputs, Backward backward);

  const Tensor& value(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Adds `g` into the gradient of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Tensor& g);
  void accumulate(const Var& v, const Tensor& g) { accumulate(v.id, g); }

  /// Seeds d(loss)/d(loss) = 1 for a one-element node and propagates.
  void backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    const Parameter* param = nullptr;
    Tensor grad;
    bool needs_grad = false;
    Backward backward;
  };

  bool record_;
  std::deque<Node> nodes_;
};

// Differentiable operations. Each mirrors the kernel of the same name in ops.
namespace ad {

Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);
Var matmul_tn(const Var& a, const Var& b);
/// x · Wᵀ + b with W shaped out×in and b of length out (bias optional).
Var linear(const Var& x, const Var& weight, const Var* bias);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_row(const Var& x, const Var& row);
Var mul_row(const Var& x, const Var& row);
Var div_col(const Var& x, const Var& col);
Var sum_rows(const Var& x);

Var silu(const Var& x);
Var gelu(const Var& x);
Var elu_plus_one(const Var& x);
/// Softmax over the last axis of a matrix.
Var softmax_rows(const Var& x);

Var slice_cols(const Var& x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);

/// Normalizes each contiguous `segment`-wide slice of every row to zero mean
/// and unit variance: (x − mean) / sqrt(var + eps).
Var segment_normalize(const Var& x, std::size_t segment, double eps);

/// x · Aᵀ for a constant matrix A; the backward pass applies A.
Var apply_linear_map(const Var& x, const Tensor& map);

/// Mean of squared differences against a constant target; returns a 1-element node.
Var mse_loss(const Var& prediction, const Tensor& target);
/// Sum of elements, 1-element node.
Var sum(const Var& x);

}  // namespace ad
}  // namespace waverora

#endif  // WAVERORA_AUTOGRAD_HPP
