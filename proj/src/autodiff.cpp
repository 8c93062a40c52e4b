#include "bmpnet/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "bmpnet/error.hpp"

namespace bmp::ad {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
ConstMapMat<T> as_matrix(const Tensor<T>& t) {
  return ConstMapMat<T>(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                        static_cast<Eigen::Index>(t.dim(1)));
}

template <typename T>
MapMat<T> as_matrix(Tensor<T>& t) {
  return MapMat<T>(t.data().data(), static_cast<Eigen::Index>(t.dim(0)),
                   static_cast<Eigen::Index>(t.dim(1)));
}

[[noreturn]] void shape_fail(Op op, const Shape& a, const Shape& b, const std::string& why) {
  throw ShapeError(std::string(op_name(op)) + ": " + why + " (" + shape_str(a) + " vs " +
                   shape_str(b) + ")");
}

[[noreturn]] void shape_fail(Op op, const Shape& a, const std::string& why) {
  throw ShapeError(std::string(op_name(op)) + ": " + why + " (" + shape_str(a) + ")");
}

// Row count and width of a tensor read as rows along its last axis.
struct RowView {
  std::size_t rows;
  std::size_t width;
};

RowView last_axis_rows(const Shape& s) {
  if (s.empty()) return {1, 1};
  const std::size_t width = s.back();
  return {width == 0 ? 0 : shape_numel(s) / width, width};
}

Shape reduce_last_axis(const Shape& s) { return Shape(s.begin(), s.end() - 1); }

template <typename T>
T softplus_value(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Group [begin, end) offsets along a row of width n.
std::vector<std::pair<std::size_t, std::size_t>> groups_of(const std::vector<std::size_t>& boundaries,
                                                           std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t begin = 0;
  for (std::size_t b : boundaries) {
    out.emplace_back(begin, b);
    begin = b;
  }
  out.emplace_back(begin, n);
  return out;
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Add: return "add";
    case Op::Sub: return "subtract";
    case Op::Mul: return "multiply";
    case Op::AddBias: return "add-bias";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add-scalar";
    case Op::ConcatRows: return "concat";
    case Op::GatherRows: return "gather-rows";
    case Op::Tanh: return "tanh";
    case Op::LeakyRelu: return "leaky-relu";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Softplus: return "softplus";
    case Op::MaskedSoftmax: return "grouped-masked-softmax";
    case Op::LogSoftmax: return "log-softmax";
    case Op::Pick: return "pick";
    case Op::EuclideanDistance: return "euclidean-distance";
    case Op::SquaredL2: return "squared-l2";
    case Op::Reparameterize: return "gaussian-reparameterize";
    case Op::BatchedMatVec: return "batched-matvec";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
  }
  return "unknown";
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
  if (v.id >= nodes_.size()) throw Error("graph: invalid variable handle");
  return nodes_[v.id];
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  return node(v).value();
}

template <typename T>
Var Graph<T>::push(Node n) {
  if (n.op != Op::Leaf) {
    for (std::size_t in : n.inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
    forward(n);
  }
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::param(const Tensor<T>& value) {
  if (const auto it = params_.find(&value); it != params_.end()) return Var{it->second};
  Node n;
  n.external = &value;
  n.requires_grad = true;
  const Var v = push(std::move(n));
  params_.emplace(&value, v.id);
  return v;
}

template <typename T>
Var Graph<T>::find_param(const Tensor<T>& value) const {
  const auto it = params_.find(&value);
  return it == params_.end() ? Var{} : Var{it->second};
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b) {
  const Shape& sa = shape(a);
  const Shape& sb = shape(b);
  if (sa.size() != 2 || sb.size() != 2) shape_fail(Op::MatMul, sa, sb, "operands must be rank 2");
  if (sa[1] != sb[0]) shape_fail(Op::MatMul, sa, sb, "inner dimensions differ");
  Node n;
  n.op = Op::MatMul;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::transpose(Var a) {
  if (shape(a).size() != 2) shape_fail(Op::Transpose, shape(a), "operand must be rank 2");
  Node n;
  n.op = Op::Transpose;
  n.inputs = {a.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  if (shape(a) != shape(b)) shape_fail(Op::Add, shape(a), shape(b), "shapes differ");
  Node n;
  n.op = Op::Add;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::sub(Var a, Var b) {
  if (shape(a) != shape(b)) shape_fail(Op::Sub, shape(a), shape(b), "shapes differ");
  Node n;
  n.op = Op::Sub;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
  if (shape(a) != shape(b)) shape_fail(Op::Mul, shape(a), shape(b), "shapes differ");
  Node n;
  n.op = Op::Mul;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::add_bias(Var a, Var bias) {
  const Shape& sa = shape(a);
  const Shape& sb = shape(bias);
  if (sa.size() != 2 || sb.size() != 1 || sa[1] != sb[0]) {
    shape_fail(Op::AddBias, sa, sb, "expected [m,n] and [n]");
  }
  Node n;
  n.op = Op::AddBias;
  n.inputs = {a.id, bias.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::scale(Var a, T factor) {
  Node n;
  n.op = Op::Scale;
  n.inputs = {a.id};
  n.scalar = factor;
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::add_scalar(Var a, T shift) {
  Node n;
  n.op = Op::AddScalar;
  n.inputs = {a.id};
  n.scalar = shift;
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = shape(parts[0]);
  if (first.empty()) shape_fail(Op::ConcatRows, first, "operands must have rank >= 1");
  Node n;
  n.op = Op::ConcatRows;
  for (Var p : parts) {
    const Shape& s = shape(p);
    if (s.size() != first.size() || !std::equal(s.begin() + 1, s.end(), first.begin() + 1)) {
      shape_fail(Op::ConcatRows, first, s, "trailing dimensions differ");
    }
    n.inputs.push_back(p.id);
  }
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::gather_rows(Var a, std::vector<std::size_t> rows) {
  const Shape& s = shape(a);
  if (s.empty()) shape_fail(Op::GatherRows, s, "operand must have rank >= 1");
  for (std::size_t r : rows) {
    if (r >= s[0]) shape_fail(Op::GatherRows, s, "row index " + std::to_string(r) + " out of range");
  }
  Node n;
  n.op = Op::GatherRows;
  n.inputs = {a.id};
  n.index = std::move(rows);
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::tanh(Var a) {
  Node n;
  n.op = Op::Tanh;
  n.inputs = {a.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::leaky_relu(Var a, T slope) {
  Node n;
  n.op = Op::LeakyRelu;
  n.inputs = {a.id};
  n.scalar = slope;
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::exp(Var a) {
  Node n;
  n.op = Op::Exp;
  n.inputs = {a.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::log(Var a) {
  Node n;
  n.op = Op::Log;
  n.inputs = {a.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::softplus(Var a) {
  Node n;
  n.op = Op::Softplus;
  n.inputs = {a.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::masked_softmax(Var logits, std::vector<std::size_t> boundaries,
                             std::vector<std::uint8_t> blocked) {
  const Shape& s = shape(logits);
  if (s.empty() || s.size() > 2) shape_fail(Op::MaskedSoftmax, s, "logits must be rank 1 or 2");
  const std::size_t width = s.back();
  std::size_t prev = 0;
  for (std::size_t b : boundaries) {
    if (b <= prev || b >= width) {
      shape_fail(Op::MaskedSoftmax, s, "group boundary " + std::to_string(b) + " out of order");
    }
    prev = b;
  }
  if (!blocked.empty() && blocked.size() != shape_numel(s)) {
    shape_fail(Op::MaskedSoftmax, s, Shape{blocked.size()}, "mask size differs from logits");
  }
  Node n;
  n.op = Op::MaskedSoftmax;
  n.inputs = {logits.id};
  n.index = std::move(boundaries);
  n.mask = std::move(blocked);
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::log_softmax(Var logits) {
  const Shape& s = shape(logits);
  if (s.empty() || s.size() > 2) shape_fail(Op::LogSoftmax, s, "logits must be rank 1 or 2");
  Node n;
  n.op = Op::LogSoftmax;
  n.inputs = {logits.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::pick(Var a, std::vector<std::size_t> columns) {
  const Shape& s = shape(a);
  if (s.empty() || s.size() > 2) shape_fail(Op::Pick, s, "operand must be rank 1 or 2");
  const RowView rv = last_axis_rows(s);
  if (columns.size() != rv.rows) {
    shape_fail(Op::Pick, s, Shape{columns.size()}, "one column index per row required");
  }
  for (std::size_t c : columns) {
    if (c >= rv.width) shape_fail(Op::Pick, s, "column index " + std::to_string(c) + " out of range");
  }
  Node n;
  n.op = Op::Pick;
  n.inputs = {a.id};
  n.index = std::move(columns);
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::euclidean_distance(Var a, Var b) {
  const Shape& sa = shape(a);
  if (sa != shape(b)) shape_fail(Op::EuclideanDistance, sa, shape(b), "shapes differ");
  if (sa.empty() || sa.size() > 2) shape_fail(Op::EuclideanDistance, sa, "operands must be rank 1 or 2");
  Node n;
  n.op = Op::EuclideanDistance;
  n.inputs = {a.id, b.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::squared_l2(Var a) {
  const Shape& s = shape(a);
  if (s.empty() || s.size() > 2) shape_fail(Op::SquaredL2, s, "operand must be rank 1 or 2");
  Node n;
  n.op = Op::SquaredL2;
  n.inputs = {a.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::reparameterize(Var mu, Var logvar, Tensor<T> noise) {
  const Shape& sm = shape(mu);
  if (sm != shape(logvar)) shape_fail(Op::Reparameterize, sm, shape(logvar), "mean and log-variance differ");
  const Shape& sn = noise.shape();
  const bool shared = sm.size() == 1 && sn.size() == 2 && sn[1] == sm[0];
  if (!shared && sm != sn) shape_fail(Op::Reparameterize, sm, sn, "noise does not match mean");
  Node n;
  n.op = Op::Reparameterize;
  n.inputs = {mu.id, logvar.id};
  n.frozen = std::move(noise);
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::batched_matvec(Var mats, Var vecs) {
  const Shape& sm = shape(mats);
  const Shape& sv = shape(vecs);
  if (sm.size() != 3 || sv.size() != 2 || sm[0] != sv[0] || sm[2] != sv[1]) {
    shape_fail(Op::BatchedMatVec, sm, sv, "expected [n,p,q] and [n,q]");
  }
  Node n;
  n.op = Op::BatchedMatVec;
  n.inputs = {mats.id, vecs.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::sum(Var a) {
  Node n;
  n.op = Op::Sum;
  n.inputs = {a.id};
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::mean(Var a) {
  if (value(a).size() == 0) shape_fail(Op::Mean, shape(a), "empty operand");
  Node n;
  n.op = Op::Mean;
  n.inputs = {a.id};
  return push(std::move(n));
}

template <typename T>
void Graph<T>::forward(Node& n) {
  auto in = [&](std::size_t i) -> const Tensor<T>& { return nodes_[n.inputs[i]].value(); };
  Tensor<T>& out = n.owned;
  switch (n.op) {
    case Op::Leaf:
      return;
    case Op::MatMul: {
      const auto& a = in(0);
      const auto& b = in(1);
      out = Tensor<T>(Shape{a.dim(0), b.dim(1)});
      if (out.size()) as_matrix(out).noalias() = as_matrix(a) * as_matrix(b);
      return;
    }
    case Op::Transpose: {
      const auto& a = in(0);
      out = Tensor<T>(Shape{a.dim(1), a.dim(0)});
      if (out.size()) as_matrix(out) = as_matrix(a).transpose();
      return;
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      const auto& a = in(0);
      const auto& b = in(1);
      out = Tensor<T>(a.shape());
      T* o = out.data().data();
      const T* pa = a.data().data();
      const T* pb = b.data().data();
      const std::size_t size = out.size();
      if (n.op == Op::Add) {
        for (std::size_t i = 0; i < size; ++i) o[i] = pa[i] + pb[i];
      } else if (n.op == Op::Sub) {
        for (std::size_t i = 0; i < size; ++i) o[i] = pa[i] - pb[i];
      } else {
        for (std::size_t i = 0; i < size; ++i) o[i] = pa[i] * pb[i];
      }
      return;
    }
    case Op::AddBias: {
      const auto& a = in(0);
      const auto& b = in(1);
      out = a;
      const std::size_t w = b.size();
      T* o = out.data().data();
      const T* bb = b.data().data();
      for (std::size_t r = 0; r < out.size(); r += w) {
        for (std::size_t c = 0; c < w; ++c) o[r + c] += bb[c];
      }
      return;
    }
    case Op::Scale:
    case Op::AddScalar: {
      out = in(0);
      const T c = n.scalar;
      if (n.op == Op::Scale) {
        for (T& v : out.values()) v *= c;
      } else {
        for (T& v : out.values()) v += c;
      }
      return;
    }
    case Op::ConcatRows: {
      Shape s = in(0).shape();
      s[0] = 0;
      std::vector<T> data;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        s[0] += in(i).dim(0);
        data.insert(data.end(), in(i).values().begin(), in(i).values().end());
      }
      out = Tensor<T>(std::move(s), std::move(data));
      return;
    }
    case Op::GatherRows: {
      const auto& a = in(0);
      Shape s = a.shape();
      s[0] = n.index.size();
      const std::size_t w = s[0] == 0 ? 0 : shape_numel(s) / s[0];
      out = Tensor<T>(s);
      for (std::size_t r = 0; r < n.index.size(); ++r) {
        std::copy_n(a.data().begin() + n.index[r] * w, w, out.data().begin() + r * w);
      }
      return;
    }
    case Op::Tanh:
    case Op::LeakyRelu:
    case Op::Exp:
    case Op::Log:
    case Op::Softplus: {
      out = in(0);
      auto each = [&](auto f) {
        for (T& v : out.values()) v = f(v);
      };
      switch (n.op) {
        case Op::Tanh: each([](T v) { return std::tanh(v); }); break;
        case Op::LeakyRelu: each([slope = n.scalar](T v) { return v > T(0) ? v : v * slope; }); break;
        case Op::Exp: each([](T v) { return std::exp(v); }); break;
        case Op::Log: each([](T v) { return std::log(v); }); break;
        default: each([](T v) { return softplus_value(v); }); break;
      }
      return;
    }
    case Op::MaskedSoftmax: {
      const auto& z = in(0);
      out = Tensor<T>(z.shape());
      const RowView rv = last_axis_rows(z.shape());
      const auto groups = groups_of(n.index, rv.width);
      for (std::size_t r = 0; r < rv.rows; ++r) {
        const std::size_t base = r * rv.width;
        for (auto [g0, g1] : groups) {
          T mx = -std::numeric_limits<T>::infinity();
          for (std::size_t j = g0; j < g1; ++j) {
            if (n.mask.empty() || !n.mask[base + j]) mx = std::max(mx, z[base + j]);
          }
          if (mx == -std::numeric_limits<T>::infinity()) continue;  // fully blocked: zeros
          T total = 0;
          for (std::size_t j = g0; j < g1; ++j) {
            if (n.mask.empty() || !n.mask[base + j]) {
              out[base + j] = std::exp(z[base + j] - mx);
              total += out[base + j];
            }
          }
          for (std::size_t j = g0; j < g1; ++j) out[base + j] /= total;
        }
      }
      return;
    }
    case Op::LogSoftmax: {
      const auto& z = in(0);
      out = Tensor<T>(z.shape());
      const RowView rv = last_axis_rows(z.shape());
      for (std::size_t r = 0; r < rv.rows; ++r) {
        const std::size_t base = r * rv.width;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < rv.width; ++j) mx = std::max(mx, z[base + j]);
        T total = 0;
        for (std::size_t j = 0; j < rv.width; ++j) total += std::exp(z[base + j] - mx);
        const T lse = mx + std::log(total);
        for (std::size_t j = 0; j < rv.width; ++j) out[base + j] = z[base + j] - lse;
      }
      return;
    }
    case Op::Pick: {
      const auto& a = in(0);
      const RowView rv = last_axis_rows(a.shape());
      out = Tensor<T>(reduce_last_axis(a.shape()));
      for (std::size_t r = 0; r < rv.rows; ++r) out[r] = a[r * rv.width + n.index[r]];
      return;
    }
    case Op::EuclideanDistance:
    case Op::SquaredL2: {
      const auto& a = in(0);
      const RowView rv = last_axis_rows(a.shape());
      out = Tensor<T>(reduce_last_axis(a.shape()));
      const bool squared = n.op == Op::SquaredL2;
      const T* pb = squared ? nullptr : in(1).data().data();
      for (std::size_t r = 0; r < rv.rows; ++r) {
        const T* ra = a.data().data() + r * rv.width;
        T acc = 0;
        if (squared) {
          for (std::size_t j = 0; j < rv.width; ++j) acc += ra[j] * ra[j];
        } else {
          const T* rb = pb + r * rv.width;
          for (std::size_t j = 0; j < rv.width; ++j) acc += (ra[j] - rb[j]) * (ra[j] - rb[j]);
        }
        out[r] = squared ? acc : std::sqrt(acc);
      }
      return;
    }
    case Op::Reparameterize: {
      const auto& mu = in(0);
      const auto& lv = in(1);
      out = Tensor<T>(n.frozen.shape());
      const std::size_t w = mu.size();
      std::vector<T> sd(w);
      for (std::size_t j = 0; j < w; ++j) sd[j] = std::exp(T(0.5) * lv[j]);
      T* o = out.data().data();
      const T* eps = n.frozen.data().data();
      for (std::size_t r = 0; r < out.size(); r += w) {
        for (std::size_t j = 0; j < w; ++j) o[r + j] = mu[j] + sd[j] * eps[r + j];
      }
      return;
    }
    case Op::BatchedMatVec: {
      const auto& m = in(0);
      const auto& v = in(1);
      const std::size_t count = m.dim(0), p = m.dim(1), q = m.dim(2);
      out = Tensor<T>(Shape{count, p});
      for (std::size_t k = 0; k < count; ++k) {
        ConstMapMat<T> mk(m.data().data() + k * p * q, static_cast<Eigen::Index>(p),
                          static_cast<Eigen::Index>(q));
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> vk(v.data().data() + k * q,
                                                                 static_cast<Eigen::Index>(q));
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> ok(out.data().data() + k * p,
                                                           static_cast<Eigen::Index>(p));
        ok.noalias() = mk * vk;
      }
      return;
    }
    case Op::Sum:
    case Op::Mean: {
      const auto& a = in(0);
      T acc = 0;
      for (T v : a.values()) acc += v;
      if (n.op == Op::Mean) acc /= static_cast<T>(a.size());
      out = Tensor<T>::scalar(acc);
      return;
    }
  }
}

template <typename T>
void Graph<T>::backward(Var loss) {
  const Tensor<T>& lv = value(loss);
  if (lv.size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(lv.shape()));
  }
  grads_.assign(nodes_.size(), Tensor<T>{});
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].requires_grad) grads_[i] = Tensor<T>(nodes_[i].value().shape());
  }
  if (!nodes_[loss.id].requires_grad) return;
  grads_[loss.id][0] = T(1);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    if (nodes_[id].requires_grad && nodes_[id].op != Op::Leaf) backward_node(id);
  }
}

template <typename T>
void Graph<T>::backward_node(std::size_t id) {
  const Node& n = nodes_[id];
  const Tensor<T>& dy = grads_[id];
  const Tensor<T>& y = n.value();
  auto needs = [&](std::size_t i) { return nodes_[n.inputs[i]].requires_grad; };
  auto in = [&](std::size_t i) -> const Tensor<T>& { return nodes_[n.inputs[i]].value(); };
  auto gin = [&](std::size_t i) -> Tensor<T>& { return grads_[n.inputs[i]]; };
  auto gp = [&](std::size_t i) { return grads_[n.inputs[i]].data().data(); };
  auto ip = [&](std::size_t i) { return nodes_[n.inputs[i]].value().data().data(); };
  const T* d = dy.data().data();
  const T* py = y.data().data();
  const std::size_t size = dy.size();

  switch (n.op) {
    case Op::Leaf:
      return;
    case Op::MatMul:
      if (needs(0) && dy.size()) as_matrix(gin(0)).noalias() += as_matrix(dy) * as_matrix(in(1)).transpose();
      if (needs(1) && dy.size()) as_matrix(gin(1)).noalias() += as_matrix(in(0)).transpose() * as_matrix(dy);
      return;
    case Op::Transpose:
      if (needs(0) && dy.size()) as_matrix(gin(0)) += as_matrix(dy).transpose();
      return;
    case Op::Add:
    case Op::Sub:
      if (needs(0)) {
        T* g0 = gp(0);
        for (std::size_t i = 0; i < size; ++i) g0[i] += d[i];
      }
      if (needs(1)) {
        T* g1 = gp(1);
        if (n.op == Op::Add) {
          for (std::size_t i = 0; i < size; ++i) g1[i] += d[i];
        } else {
          for (std::size_t i = 0; i < size; ++i) g1[i] -= d[i];
        }
      }
      return;
    case Op::Mul:
      if (needs(0)) {
        T* g0 = gp(0);
        const T* b = ip(1);
        for (std::size_t i = 0; i < size; ++i) g0[i] += d[i] * b[i];
      }
      if (needs(1)) {
        T* g1 = gp(1);
        const T* a = ip(0);
        for (std::size_t i = 0; i < size; ++i) g1[i] += d[i] * a[i];
      }
      return;
    case Op::AddBias:
      if (needs(0)) {
        T* g0 = gp(0);
        for (std::size_t i = 0; i < size; ++i) g0[i] += d[i];
      }
      if (needs(1)) {
        const std::size_t w = in(1).size();
        T* gb = gp(1);
        for (std::size_t r = 0; r < dy.size(); r += w) {
          for (std::size_t c = 0; c < w; ++c) gb[c] += d[r + c];
        }
      }
      return;
    case Op::Scale: {
      T* g0 = gp(0);
      const T c = n.scalar;
      for (std::size_t i = 0; i < size; ++i) g0[i] += c * d[i];
      return;
    }
    case Op::AddScalar: {
      T* g0 = gp(0);
      for (std::size_t i = 0; i < size; ++i) g0[i] += d[i];
      return;
    }
    case Op::ConcatRows: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t len = in(k).size();
        if (needs(k)) {
          T* gk = gp(k);
          for (std::size_t i = 0; i < len; ++i) gk[i] += d[offset + i];
        }
        offset += len;
      }
      return;
    }
    case Op::GatherRows: {
      const std::size_t w = n.index.empty() ? 0 : dy.size() / n.index.size();
      T* g0 = gp(0);
      for (std::size_t r = 0; r < n.index.size(); ++r) {
        T* dst = g0 + n.index[r] * w;
        const T* src = d + r * w;
        for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
      }
      return;
    }
    case Op::Tanh: {
      T* g0 = gp(0);
      for (std::size_t i = 0; i < size; ++i) g0[i] += d[i] * (T(1) - py[i] * py[i]);
      return;
    }
    case Op::LeakyRelu: {
      T* g0 = gp(0);
      const T* x = ip(0);
      const T slope = n.scalar;
      for (std::size_t i = 0; i < size; ++i) g0[i] += x[i] > T(0) ? d[i] : slope * d[i];
      return;
    }
    case Op::Exp: {
      T* g0 = gp(0);
      for (std::size_t i = 0; i < size; ++i) g0[i] += d[i] * py[i];
      return;
    }
    case Op::Log: {
      T* g0 = gp(0);
      const T* x = ip(0);
      for (std::size_t i = 0; i < size; ++i) g0[i] += d[i] / x[i];
      return;
    }
    case Op::Softplus: {
      T* g0 = gp(0);
      const T* x = ip(0);
      for (std::size_t i = 0; i < size; ++i) g0[i] += d[i] * sigmoid(x[i]);
      return;
    }
    case Op::MaskedSoftmax: {
      const RowView rv = last_axis_rows(y.shape());
      const auto groups = groups_of(n.index, rv.width);
      Tensor<T>& g = gin(0);
      for (std::size_t r = 0; r < rv.rows; ++r) {
        const std::size_t base = r * rv.width;
        for (auto [g0, g1] : groups) {
          T dot = 0;
          for (std::size_t j = g0; j < g1; ++j) dot += y[base + j] * dy[base + j];
          for (std::size_t j = g0; j < g1; ++j) {
            if (!n.mask.empty() && n.mask[base + j]) continue;
            g[base + j] += y[base + j] * (dy[base + j] - dot);
          }
        }
      }
      return;
    }
    case Op::LogSoftmax: {
      const RowView rv = last_axis_rows(y.shape());
      Tensor<T>& g = gin(0);
      for (std::size_t r = 0; r < rv.rows; ++r) {
        const std::size_t base = r * rv.width;
        T total = 0;
        for (std::size_t j = 0; j < rv.width; ++j) total += dy[base + j];
        for (std::size_t j = 0; j < rv.width; ++j) {
          g[base + j] += dy[base + j] - std::exp(y[base + j]) * total;
        }
      }
      return;
    }
    case Op::Pick: {
      const RowView rv = last_axis_rows(in(0).shape());
      for (std::size_t r = 0; r < rv.rows; ++r) gin(0)[r * rv.width + n.index[r]] += dy[r];
      return;
    }
    case Op::EuclideanDistance: {
      const RowView rv = last_axis_rows(in(0).shape());
      for (std::size_t r = 0; r < rv.rows; ++r) {
        if (y[r] == T(0)) continue;  // subgradient 0 at coincident points
        const T coef = dy[r] / y[r];
        const std::size_t base = r * rv.width;
        const T* a = ip(0) + base;
        const T* b = ip(1) + base;
        if (needs(0)) {
          T* g0 = gp(0) + base;
          for (std::size_t j = 0; j < rv.width; ++j) g0[j] += coef * (a[j] - b[j]);
        }
        if (needs(1)) {
          T* g1 = gp(1) + base;
          for (std::size_t j = 0; j < rv.width; ++j) g1[j] -= coef * (a[j] - b[j]);
        }
      }
      return;
    }
    case Op::SquaredL2: {
      const RowView rv = last_axis_rows(in(0).shape());
      T* g0 = gp(0);
      const T* a = ip(0);
      for (std::size_t r = 0; r < rv.rows; ++r) {
        const T c = T(2) * d[r];
        for (std::size_t j = 0; j < rv.width; ++j) g0[r * rv.width + j] += c * a[r * rv.width + j];
      }
      return;
    }
    case Op::Reparameterize: {
      const auto& lv = in(1);
      const std::size_t w = lv.size();
      const T* eps = n.frozen.data().data();
      if (needs(0)) {
        T* g0 = gp(0);
        for (std::size_t r = 0; r < size; r += w) {
          for (std::size_t j = 0; j < w; ++j) g0[j] += d[r + j];
        }
      }
      if (needs(1)) {
        std::vector<T> acc(w);
        for (std::size_t r = 0; r < size; r += w) {
          for (std::size_t j = 0; j < w; ++j) acc[j] += d[r + j] * eps[r + j];
        }
        T* g1 = gp(1);
        for (std::size_t j = 0; j < w; ++j) g1[j] += acc[j] * T(0.5) * std::exp(T(0.5) * lv[j]);
      }
      return;
    }
    case Op::BatchedMatVec: {
      const auto& m = in(0);
      const auto& v = in(1);
      const std::size_t count = m.dim(0), p = m.dim(1), q = m.dim(2);
      for (std::size_t k = 0; k < count; ++k) {
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> dyk(dy.data().data() + k * p,
                                                                  static_cast<Eigen::Index>(p));
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> vk(v.data().data() + k * q,
                                                                 static_cast<Eigen::Index>(q));
        if (needs(0)) {
          MapMat<T> gm(gin(0).data().data() + k * p * q, static_cast<Eigen::Index>(p),
                       static_cast<Eigen::Index>(q));
          gm.noalias() += dyk * vk.transpose();
        }
        if (needs(1)) {
          ConstMapMat<T> mk(m.data().data() + k * p * q, static_cast<Eigen::Index>(p),
                            static_cast<Eigen::Index>(q));
          Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gv(gin(1).data().data() + k * q,
                                                             static_cast<Eigen::Index>(q));
          gv.noalias() += mk.transpose() * dyk;
        }
      }
      return;
    }
    case Op::Sum:
    case Op::Mean: {
      const T c = n.op == Op::Sum ? dy[0] : dy[0] / static_cast<T>(in(0).size());
      for (T& g : gin(0).values()) g += c;
      return;
    }
  }
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Var v) const {
  if (v.id >= nodes_.size()) throw Error("graph: invalid variable handle");
  if (grads_.size() != nodes_.size()) throw Error("graph: backward() has not run on this graph");
  if (!nodes_[v.id].requires_grad) throw Error("graph: node does not require a gradient");
  return grads_[v.id];
}

template <typename T>
Tensor<T> Graph<T>::take_grad(Var v) {
  grad(v);
  return std::move(grads_[v.id]);
}

template <typename T>
void Graph<T>::recompute() {
  for (Node& n : nodes_) {
    if (n.op != Op::Leaf) forward(n);
  }
}

template <typename T>
Tensor<T>& Graph<T>::mutable_leaf(Var v) {
  if (v.id >= nodes_.size() || nodes_[v.id].op != Op::Leaf) throw Error("graph: not a leaf");
  Node& n = nodes_[v.id];
  if (n.external) {
    n.owned = *n.external;
    n.external = nullptr;
  }
  return n.owned;
}

template class Graph<float>;
template class Graph<double>;

double finite_difference_check(Graph<double>& graph, Var loss, Var leaf, double epsilon) {
  graph.backward(loss);
  const Tensor<double> analytic = graph.grad(leaf);
  Tensor<double>& x = graph.mutable_leaf(leaf);
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + epsilon;
    graph.recompute();
    const double up = graph.value(loss)[0];
    x[i] = saved - epsilon;
    graph.recompute();
    const double down = graph.value(loss)[0];
    x[i] = saved;
    const double numeric = (up - down) / (2 * epsilon);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
  }
  graph.recompute();
  return worst;
}

}  // namespace bmp::ad
