#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bmpnet/tensor.hpp"

// Reverse-mode automatic differentiation on a tape.
//
// A Graph records every primitive in creation order, which is already a
// topological order, so backward() walks node ids in reverse and visits each
// node once. Graphs are single-threaded; build one per thread.
namespace bmp::ad {

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  Transpose,
  Add,
  Sub,
  Mul,
  AddBias,
  Scale,
  AddScalar,
  ConcatRows,
  GatherRows,
  Tanh,
  LeakyRelu,
  Exp,
  Log,
  Softplus,
  MaskedSoftmax,
  LogSoftmax,
  Pick,
  EuclideanDistance,
  SquaredL2,
  Reparameterize,
  BatchedMatVec,
  Sum,
  Mean,
};

std::string_view op_name(Op op);

// Handle to a node of one particular Graph.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

inline constexpr double kLeakySlope = 0.1;

template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var leaf(Tensor<T> value, bool requires_grad = true);
  Var constant(Tensor<T> value) { return leaf(std::move(value), false); }
  // Registers a tensor owned by the caller without copying it. The tensor
  // must outlive the graph and stay unchanged while the graph is in use.
  // Registering the same tensor again returns the existing node.
  Var param(const Tensor<T>& value);
  // Node of a registered tensor, or an invalid Var.
  Var find_param(const Tensor<T>& value) const;

  Var matmul(Var a, Var b);
  Var transpose(Var a);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  // [m,n] + [n], the bias repeated on every row.
  Var add_bias(Var a, Var bias);
  Var scale(Var a, T factor);
  Var add_scalar(Var a, T shift);
  Var concat_rows(std::span<const Var> parts);
  Var gather_rows(Var a, std::vector<std::size_t> rows);
  Var tanh(Var a);
  Var leaky_relu(Var a, T slope = T(kLeakySlope));
  Var exp(Var a);
  Var log(Var a);
  Var softplus(Var a);
  // Softmax along the last axis, normalized separately inside each group.
  // `boundaries` are the start offsets of groups after the first, e.g. {3}
  // splits a width-5 row into [0,3) and [3,5). `blocked` (optional, same
  // size as the input) removes entries before normalization: they output
  // exactly 0 and receive no gradient. A group with every entry blocked
  // outputs zeros.
  Var masked_softmax(Var logits, std::vector<std::size_t> boundaries = {},
                     std::vector<std::uint8_t> blocked = {});
  Var log_softmax(Var logits);
  // out[i] = a[i, columns[i]].
  Var pick(Var a, std::vector<std::size_t> columns);
  // Row-wise Euclidean distance; rank-1 inputs give a scalar.
  Var euclidean_distance(Var a, Var b);
  // Row-wise sum of squares; rank-1 input gives a scalar.
  Var squared_l2(Var a);
  // mu + exp(logvar / 2) * noise with the noise frozen into the node. mu and
  // logvar are either [n] (shared by every row of noise [m,n]) or [m,n].
  Var reparameterize(Var mu, Var logvar, Tensor<T> noise);
  // [n,p,q] x [n,q] -> [n,p], one matrix-vector product per leading index.
  Var batched_matvec(Var mats, Var vecs);
  Var sum(Var a);
  Var mean(Var a);

  const Tensor<T>& value(Var v) const;
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  Op op(Var v) const { return nodes_.at(v.id).op; }
  std::size_t size() const { return nodes_.size(); }

  // Accumulates d(loss)/d(node) for every node that requires a gradient.
  // Gradients from an earlier backward() are discarded.
  void backward(Var loss);
  // Zero-filled for nodes the loss does not reach. Throws for nodes that do
  // not require a gradient.
  const Tensor<T>& grad(Var v) const;
  // Moves a gradient out of the graph; grad(v) is empty afterwards.
  Tensor<T> take_grad(Var v);

  // Re-evaluates every non-leaf node from current leaf values. Masks, indices
  // and frozen noise are reused as recorded.
  void recompute();
  // Writable leaf value; a caller-owned param is copied into the graph first.
  Tensor<T>& mutable_leaf(Var v);

 private:
  struct Node {
    Op op = Op::Leaf;
    std::vector<std::size_t> inputs;
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    bool requires_grad = false;
    T scalar{};
    std::vector<std::size_t> index;
    std::vector<std::uint8_t> mask;
    Tensor<T> frozen;

    const Tensor<T>& value() const { return external ? *external : owned; }
  };

  Var push(Node node);
  const Node& node(Var v) const;
  void forward(Node& n);
  void backward_node(std::size_t id);
  Tensor<T>& grad_buffer(std::size_t id) { return grads_[id]; }

  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  std::unordered_map<const Tensor<T>*, std::size_t> params_;
};

extern template class Graph<float>;
extern template class Graph<double>;

// Largest |analytic - central difference| / max(1, |analytic|) over the
// components of `leaf`. Runs backward() on `loss` itself.
double finite_difference_check(Graph<double>& graph, Var loss, Var leaf, double epsilon);

}  // namespace bmp::ad
