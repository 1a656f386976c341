#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "posesdf/tensor.hpp"

namespace posesdf::ad {

enum class Kind : uint8_t {
  Leaf,
  Affine,
  Relu,
  Tanh,
  Add,
  Sub,
  Mul,
  Scale,
  ConcatRows,
  Slice,
  ReplicateCols,
  Softmax,
  CoordSum,
  L1Mean,
  L2Mean,
  Rotate,
};

// Names of the differentiable ops. Lookup of anything else fails loudly.
const std::vector<std::string>& op_set();
Kind op_kind(const std::string& name);

struct Node {
  Kind kind = Kind::Leaf;
  std::array<int32_t, 3> in{-1, -1, -1};
  Tensor value;
  bool requires_grad = false;
  double c = 0.0;                      // Scale factor
  int64_t i0 = 0, i1 = 0;              // Slice offset/len, ReplicateCols ncols
  std::shared_ptr<const Tensor> aux;   // CoordSum coordinate table [n,3]
};

// Define-by-run reverse-mode tape over dense double tensors. Forward values
// are computed eagerly at record time; backward() runs one reverse sweep with
// a fixed per-element summation order, so repeated sweeps are bitwise equal.
class Tape {
 public:
  int32_t constant(Tensor v) { return leaf(std::move(v), false); }
  int32_t param(Tensor v) { return leaf(std::move(v), true); }
  int32_t leaf(Tensor v, bool requires_grad);

  // W [m,n] @ x [n] + b [m] -> [m], or W [m,n] @ X [n,p] + b -> [m,p].
  int32_t affine(int32_t w, int32_t x, int32_t b);
  int32_t relu(int32_t x);
  int32_t tanh_(int32_t x);
  int32_t add(int32_t a, int32_t b);
  int32_t sub(int32_t a, int32_t b);
  int32_t mul(int32_t a, int32_t b);
  int32_t scale(int32_t x, double c);
  // Rank-1: [a],[b] -> [a+b]. Rank-2: [r1,c],[r2,c] -> [r1+r2,c].
  int32_t concat_rows(int32_t a, int32_t b);
  int32_t slice(int32_t x, int64_t offset, int64_t len);
  int32_t replicate_cols(int32_t v, int64_t ncols);
  int32_t softmax(int32_t logits);
  // probs [n] with coords [n,3] -> [3]; coords are a shared constant.
  int32_t coord_sum(int32_t probs, std::shared_ptr<const Tensor> coords);
  int32_t l1_mean(int32_t a, int32_t b);
  int32_t l2_mean(int32_t a, int32_t b);
  // axis_angle [3] rotating x ([3] or [3,p] column points).
  int32_t rotate(int32_t axis_angle, int32_t x);

  const Tensor& value(int32_t id) const { return nodes_[static_cast<size_t>(id)].value; }
  double value_scalar(int32_t id) const;
  bool requires_grad(int32_t id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }

  // Reverse sweep from a scalar loss. Gradients of earlier sweeps are
  // discarded first; only nodes that lead to a parameter receive gradients.
  void backward(int32_t loss);
  const Tensor& grad(int32_t id) const;
  // False when the last sweep never reached the node; grad() would throw.
  bool has_grad(int32_t id) const {
    return swept_ && grads_[static_cast<size_t>(id)].numel() > 0;
  }

  const std::vector<int32_t>& params() const { return params_; }
  size_t size() const { return nodes_.size(); }

 private:
  int32_t push(Node n);
  const Node& node(int32_t id) const { return nodes_[static_cast<size_t>(id)]; }

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<int32_t> params_;
  bool swept_ = false;
};

}  // namespace posesdf::ad
