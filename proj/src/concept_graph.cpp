#include "bmpnet/concept_graph.hpp"

#include <cmath>

#include "bmpnet/error.hpp"

namespace bmp {

template <typename T>
ConceptParams<T> ConceptParams<T>::init(std::size_t num_attributes, std::size_t num_objects,
                                        std::size_t dim, Rng& rng) {
  const std::size_t n = num_attributes + num_objects;
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  ConceptParams p;
  p.keys = rng.normal<T>({n, dim}, sd);
  p.queries = rng.normal<T>({n, dim}, sd);
  p.values = rng.normal<T>({n, dim}, sd);
  p.transforms = rng.normal<T>({n, dim, dim}, 0.01);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < dim; ++i) p.transforms[(k * dim + i) * dim + i] += T(1);
  }
  p.biases = Tensor<T>(Shape{n, dim});
  p.attr_key_transform = rng.normal<T>({dim, dim}, sd);
  p.obj_key_transform = rng.normal<T>({dim, dim}, sd);
  return p;
}

template <typename T>
ConceptGraph<T>::ConceptGraph(ad::Graph<T>& graph, const ConceptParams<T>& params,
                              const PairUniverse& universe, bool allow_naive)
    : graph_(graph), params_(params), universe_(universe), allow_naive_(allow_naive) {
  if (params.num_concepts() != universe.num_concepts()) {
    throw ShapeError("concept graph: parameters cover " + std::to_string(params.num_concepts()) +
                     " concepts but the vocabulary has " + std::to_string(universe.num_concepts()));
  }
  keys_ = graph_.param(params.keys);
  queries_ = graph_.param(params.queries);
  values_ = graph_.param(params.values);
  transforms_ = graph_.param(params.transforms);
  biases_ = graph_.param(params.biases);
  attr_w_ = graph_.param(params.attr_key_transform);
  obj_w_ = graph_.param(params.obj_key_transform);
}

template <typename T>
ad::Var ConceptGraph<T>::messages() {
  if (!messages_.valid()) {
    messages_ = graph_.add(graph_.batched_matvec(transforms_, values_), biases_);
  }
  return messages_;
}

template <typename T>
ad::Var ConceptGraph<T>::transformed_keys(ConceptKind kind) {
  ad::Var& cached = kind == ConceptKind::Attribute ? attr_keys_ : obj_keys_;
  if (!cached.valid()) {
    const ad::Var w = kind == ConceptKind::Attribute ? attr_w_ : obj_w_;
    cached = graph_.tanh(graph_.matmul(keys_, graph_.transpose(w)));
  }
  return cached;
}

template <typename T>
ad::Var ConceptGraph<T>::query_rows(ConceptKind kind, std::span<const std::uint32_t> ids) {
  if (!tanh_queries_.valid()) tanh_queries_ = graph_.tanh(queries_);
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (std::uint32_t id : ids) {
    universe_.check_concept(kind, id);
    rows.push_back(universe_.concept_index(kind, id));
  }
  return graph_.gather_rows(tanh_queries_, std::move(rows));
}

template <typename T>
ad::Var ConceptGraph<T>::logits(ConceptKind kind, std::span<const std::uint32_t> ids) {
  const ad::Var q = query_rows(kind, ids);
  return graph_.matmul(q, graph_.transpose(transformed_keys(kind)));
}

template <typename T>
ad::Var ConceptGraph<T>::attention(ConceptKind kind, std::span<const std::uint32_t> ids,
                                   std::vector<std::uint8_t> blocked) {
  std::vector<std::size_t> boundaries;
  if (universe_.num_attributes() > 0 && universe_.num_objects() > 0) {
    boundaries.push_back(universe_.num_attributes());
  }
  return graph_.masked_softmax(logits(kind, ids), std::move(boundaries), std::move(blocked));
}

template <typename T>
ad::Var ConceptGraph<T>::gather(ad::Var beta) {
  return graph_.leaky_relu(graph_.matmul(beta, messages()));
}

template <typename T>
ad::Var ConceptGraph<T>::naive_features(ConceptKind kind, std::span<const std::uint32_t> ids) {
  if (!allow_naive_) throw Error("concept graph: naive message passing is disabled here");
  naive_calls_ += ids.size();
  return gather(attention(kind, ids));
}

template <typename T>
ad::Var ConceptGraph<T>::blocked_features(ConceptKind kind, std::span<const Pair> pairs) {
  std::vector<std::uint32_t> ids;
  std::vector<std::uint8_t> mask;
  ids.reserve(pairs.size());
  mask.reserve(pairs.size() * universe_.num_concepts());
  for (Pair p : pairs) {
    const std::uint32_t id = kind == ConceptKind::Attribute ? p.attr : p.obj;
    ids.push_back(id);
    const auto row = universe_.blocking_mask(kind, id, p);
    mask.insert(mask.end(), row.begin(), row.end());
  }
  return gather(attention(kind, ids, std::move(mask)));
}

namespace {

template <typename T>
AttentionResult<T> attention_impl(const ConceptParams<T>& params, const PairUniverse& universe,
                                  ConceptKind kind, std::uint32_t id, const Pair* input) {
  universe.check_concept(kind, id);
  ad::Graph<T> g;
  ConceptGraph<T> cg(g, params, universe);
  std::vector<std::uint8_t> mask = input ? universe.blocking_mask(kind, id, *input)
                                         : std::vector<std::uint8_t>(universe.num_concepts(), 0);
  const std::uint32_t ids[] = {id};
  const ad::Var beta = cg.attention(kind, ids, mask);
  return {g.value(beta).values(), std::move(mask)};
}

}  // namespace

template <typename T>
AttentionResult<T> attention_naive(const ConceptParams<T>& params, const PairUniverse& universe,
                                   ConceptKind kind, std::uint32_t id) {
  return attention_impl(params, universe, kind, id, nullptr);
}

template <typename T>
AttentionResult<T> attention_blocked(const ConceptParams<T>& params, const PairUniverse& universe,
                                     ConceptKind kind, std::uint32_t id, std::uint32_t partner) {
  const ConceptKind other = kind == ConceptKind::Attribute ? ConceptKind::Object : ConceptKind::Attribute;
  universe.check_concept(other, partner);
  const Pair input = kind == ConceptKind::Attribute ? Pair{id, partner} : Pair{partner, id};
  return attention_impl(params, universe, kind, id, &input);
}

template <typename T>
Tensor<T> gather_feature(const AttentionResult<T>& attention, const ConceptParams<T>& params) {
  if (attention.beta.size() != params.num_concepts()) {
    throw ShapeError("gather_feature: attention has " + std::to_string(attention.beta.size()) +
                     " entries but there are " + std::to_string(params.num_concepts()) + " concepts");
  }
  ad::Graph<T> g;
  const ad::Var beta = g.constant(Tensor<T>({1, attention.beta.size()}, attention.beta));
  const ad::Var messages = g.add(g.batched_matvec(g.param(params.transforms), g.param(params.values)),
                                 g.param(params.biases));
  const ad::Var x = g.leaky_relu(g.matmul(beta, messages));
  return Tensor<T>({params.dim()}, g.value(x).values());
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> pair_concept_features(Pair pair, const PairUniverse& universe,
                                                      const ConceptParams<T>& params,
                                                      MessagePassing mode) {
  if (!universe.contains(pair)) {
    throw Error("pair_concept_features: " + universe.pair_name(pair) + " is not a candidate pair");
  }
  ad::Graph<T> g;
  ConceptGraph<T> cg(g, params, universe);
  ad::Var xa, xo;
  if (mode == MessagePassing::Naive) {
    const std::uint32_t a[] = {pair.attr};
    const std::uint32_t o[] = {pair.obj};
    xa = cg.naive_features(ConceptKind::Attribute, a);
    xo = cg.naive_features(ConceptKind::Object, o);
  } else {
    const Pair p[] = {pair};
    xa = cg.blocked_features(ConceptKind::Attribute, p);
    xo = cg.blocked_features(ConceptKind::Object, p);
  }
  const std::size_t d = params.dim();
  return {Tensor<T>({d}, g.value(xa).values()), Tensor<T>({d}, g.value(xo).values())};
}

template struct ConceptParams<float>;
template struct ConceptParams<double>;
template class ConceptGraph<float>;
template class ConceptGraph<double>;

#define BMP_INSTANTIATE(T)                                                                        \
  template AttentionResult<T> attention_naive(const ConceptParams<T>&, const PairUniverse&,      \
                                              ConceptKind, std::uint32_t);                       \
  template AttentionResult<T> attention_blocked(const ConceptParams<T>&, const PairUniverse&,    \
                                                ConceptKind, std::uint32_t, std::uint32_t);      \
  template Tensor<T> gather_feature(const AttentionResult<T>&, const ConceptParams<T>&);         \
  template std::pair<Tensor<T>, Tensor<T>> pair_concept_features(Pair, const PairUniverse&,      \
                                                                 const ConceptParams<T>&,        \
                                                                 MessagePassing);
BMP_INSTANTIATE(float)
BMP_INSTANTIATE(double)
#undef BMP_INSTANTIATE

}  // namespace bmp
