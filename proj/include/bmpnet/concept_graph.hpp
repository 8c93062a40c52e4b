#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bmpnet/autodiff.hpp"
#include "bmpnet/random.hpp"
#include "bmpnet/universe.hpp"

namespace bmp {

enum class MessagePassing { Naive, Blocked };

// Learnable bundle for every primitive concept (rows follow the universe's
// concept index) plus the two shared key transforms.
template <typename T>
struct ConceptParams {
  Tensor<T> keys;                // [N, d]
  Tensor<T> queries;             // [N, d]
  Tensor<T> values;              // [N, d]
  Tensor<T> transforms;          // [N, d, d]
  Tensor<T> biases;              // [N, d]
  Tensor<T> attr_key_transform;  // [d, d], applied to keys for attribute queries
  Tensor<T> obj_key_transform;   // [d, d], applied to keys for object queries

  static ConceptParams init(std::size_t num_attributes, std::size_t num_objects, std::size_t dim,
                            Rng& rng);

  std::size_t num_concepts() const { return keys.dim(0); }
  std::size_t dim() const { return keys.dim(1); }

  template <typename F>
  void for_each(F&& f) {
    f("concept.keys", keys);
    f("concept.queries", queries);
    f("concept.values", values);
    f("concept.transforms", transforms);
    f("concept.biases", biases);
    f("concept.attr_key_transform", attr_key_transform);
    f("concept.obj_key_transform", obj_key_transform);
  }
};

template <typename T>
struct AttentionResult {
  std::vector<T> beta;                // attribute half then object half
  std::vector<std::uint8_t> blocked;  // 1 where the edge was removed
};

// Message passing over one parameter snapshot inside a graph. Intermediates
// shared by every query (transformed keys, per-concept messages) are built
// once on first use.
template <typename T>
class ConceptGraph {
 public:
  ConceptGraph(ad::Graph<T>& graph, const ConceptParams<T>& params, const PairUniverse& universe,
               bool allow_naive = true);

  // Attention logits of the given concepts over all concepts, [P, N].
  ad::Var logits(ConceptKind kind, std::span<const std::uint32_t> ids);
  // Normalized attention, each half separately; blocked entries removed.
  ad::Var attention(ConceptKind kind, std::span<const std::uint32_t> ids,
                    std::vector<std::uint8_t> blocked = {});
  // LeakyReLU(beta · (U_k v_k + b_k)), [P, d].
  ad::Var gather(ad::Var beta);

  ad::Var naive_features(ConceptKind kind, std::span<const std::uint32_t> ids);
  // Feature of each pair's `kind` member with edge blocking for that pair.
  ad::Var blocked_features(ConceptKind kind, std::span<const Pair> pairs);

  // Number of naive attention evaluations performed through this object.
  std::size_t naive_calls() const { return naive_calls_; }

  ad::Graph<T>& graph() { return graph_; }

 private:
  ad::Var messages();
  ad::Var transformed_keys(ConceptKind kind);
  ad::Var query_rows(ConceptKind kind, std::span<const std::uint32_t> ids);

  ad::Graph<T>& graph_;
  const ConceptParams<T>& params_;
  const PairUniverse& universe_;
  bool allow_naive_;
  std::size_t naive_calls_ = 0;

  ad::Var keys_, queries_, values_, transforms_, biases_, attr_w_, obj_w_;
  ad::Var tanh_queries_, attr_keys_, obj_keys_, messages_;
};

template <typename T>
AttentionResult<T> attention_naive(const ConceptParams<T>& params, const PairUniverse& universe,
                                   ConceptKind kind, std::uint32_t id);

template <typename T>
AttentionResult<T> attention_blocked(const ConceptParams<T>& params, const PairUniverse& universe,
                                     ConceptKind kind, std::uint32_t id, std::uint32_t partner);

template <typename T>
Tensor<T> gather_feature(const AttentionResult<T>& attention, const ConceptParams<T>& params);

// (attribute feature, object feature) of a candidate pair.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> pair_concept_features(Pair pair, const PairUniverse& universe,
                                                      const ConceptParams<T>& params,
                                                      MessagePassing mode);

}  // namespace bmp
