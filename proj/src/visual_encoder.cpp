#include "bmpnet/visual_encoder.hpp"

#include <cmath>

#include "bmpnet/error.hpp"

namespace bmp {

template <typename T>
Linear<T> Linear<T>::init(std::size_t in, std::size_t out, Rng& rng) {
  return {rng.normal<T>({in, out}, 1.0 / std::sqrt(static_cast<double>(in))), Tensor<T>(Shape{out})};
}

template <typename T>
Mlp<T> Mlp<T>::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  Mlp m;
  m.first = Linear<T>::init(in, hidden, rng);
  m.second = Linear<T>::init(hidden, out, rng);
  return m;
}

template <typename T>
VisualParams<T> VisualParams<T>::init(std::size_t input_dim, std::size_t dim, bool conditional,
                                      Rng& rng) {
  VisualParams p;
  p.transform = Mlp<T>::init(input_dim, dim, dim, rng);
  p.residue_mu = Tensor<T>(Shape{dim});
  p.residue_logvar = Tensor<T>(Shape{dim}, T(kInitialLogVar));
  p.conditional = conditional;
  if (conditional) {
    p.residue_mu_head = {Tensor<T>(Shape{dim, dim}), Tensor<T>(Shape{dim})};
    p.residue_logvar_head = {Tensor<T>(Shape{dim, dim}), Tensor<T>(Shape{dim}, T(kInitialLogVar))};
  }
  p.attr_head = Mlp<T>::init(dim, dim, dim, rng);
  p.obj_head = Mlp<T>::init(dim, dim, dim, rng);
  return p;
}

template <typename T>
VisualGraph<T>::VisualGraph(ad::Graph<T>& graph, const VisualParams<T>& params, bool use_residue)
    : graph_(graph), params_(params), use_residue_(use_residue) {
  transform_ = bind(params.transform);
  if (params.conditional) {
    mu_head_ = bind(params.residue_mu_head);
    logvar_head_ = bind(params.residue_logvar_head);
  } else {
    mu_ = graph_.param(params.residue_mu);
    logvar_ = graph_.param(params.residue_logvar);
  }
  attr_head_ = bind(params.attr_head);
  obj_head_ = bind(params.obj_head);
}

template <typename T>
typename VisualGraph<T>::LinearVars VisualGraph<T>::bind(const Linear<T>& l) {
  return {graph_.param(l.weight), graph_.param(l.bias)};
}

template <typename T>
typename VisualGraph<T>::MlpVars VisualGraph<T>::bind(const Mlp<T>& m) {
  return {bind(m.first), bind(m.second)};
}

template <typename T>
ad::Var VisualGraph<T>::linear(const LinearVars& l, ad::Var x) {
  return graph_.add_bias(graph_.matmul(x, l.weight), l.bias);
}

template <typename T>
ad::Var VisualGraph<T>::mlp(const MlpVars& m, ad::Var x) {
  return linear(m.second, graph_.leaky_relu(linear(m.first, x)));
}

template <typename T>
ad::Var VisualGraph<T>::encode_composite(ad::Var features, EncodeMode mode, const Tensor<T>* noise) {
  const Shape& s = graph_.shape(features);
  if (s.size() != 2 || s[1] != params_.input_dim()) {
    throw ShapeError("encode_composite: expected features [m," + std::to_string(params_.input_dim()) +
                     "], got " + shape_str(s));
  }
  const ad::Var transformed = mlp(transform_, features);
  if (!use_residue_) return transformed;

  ad::Var mu = mu_;
  ad::Var logvar = logvar_;
  if (params_.conditional) {
    mu = linear(mu_head_, transformed);
    logvar = linear(logvar_head_, transformed);
  }
  if (mode == EncodeMode::Infer) {
    return params_.conditional ? graph_.sub(transformed, mu)
                               : graph_.add_bias(transformed, graph_.scale(mu, T(-1)));
  }
  if (!noise) throw Error("encode_composite: train mode needs a noise draw");
  if (noise->shape() != graph_.shape(transformed)) {
    throw ShapeError("encode_composite: noise " + shape_str(noise->shape()) + " does not match " +
                     shape_str(graph_.shape(transformed)));
  }
  return graph_.sub(transformed, graph_.reparameterize(mu, logvar, *noise));
}

namespace {

template <typename T>
Tensor<T> as_rows(const Tensor<T>& t) {
  if (t.rank() == 1) return Tensor<T>({1, t.size()}, t.values());
  return t;
}

template <typename T>
Tensor<T> match_rank(const Tensor<T>& out, const Tensor<T>& like) {
  if (like.rank() == 1) return Tensor<T>({out.size()}, out.values());
  return out;
}

}  // namespace

template <typename T>
Tensor<T> encode_composite(const Tensor<T>& features, const VisualParams<T>& params, EncodeMode mode,
                           const Tensor<T>* noise) {
  ad::Graph<T> g;
  VisualGraph<T> vg(g, params);
  Tensor<T> rows_noise;
  if (noise) rows_noise = as_rows(*noise);
  const ad::Var x = vg.encode_composite(g.constant(as_rows(features)), mode, noise ? &rows_noise : nullptr);
  return match_rank(g.value(x), features);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> extract_primitives(const Tensor<T>& composite,
                                                   const VisualParams<T>& params) {
  const Tensor<T> rows = as_rows(composite);
  if (rows.rank() != 2 || rows.dim(1) != params.dim()) {
    throw ShapeError("extract_primitives: expected width " + std::to_string(params.dim()) + ", got " +
                     shape_str(composite.shape()));
  }
  ad::Graph<T> g;
  VisualGraph<T> vg(g, params);
  auto [a, o] = vg.extract_primitives(g.constant(rows));
  return {match_rank(g.value(a), composite), match_rank(g.value(o), composite)};
}

template struct Linear<float>;
template struct Linear<double>;
template struct Mlp<float>;
template struct Mlp<double>;
template struct VisualParams<float>;
template struct VisualParams<double>;
template class VisualGraph<float>;
template class VisualGraph<double>;
template Tensor<float> encode_composite(const Tensor<float>&, const VisualParams<float>&, EncodeMode,
                                        const Tensor<float>*);
template Tensor<double> encode_composite(const Tensor<double>&, const VisualParams<double>&, EncodeMode,
                                         const Tensor<double>*);
template std::pair<Tensor<float>, Tensor<float>> extract_primitives(const Tensor<float>&,
                                                                    const VisualParams<float>&);
template std::pair<Tensor<double>, Tensor<double>> extract_primitives(const Tensor<double>&,
                                                                      const VisualParams<double>&);

}  // namespace bmp
