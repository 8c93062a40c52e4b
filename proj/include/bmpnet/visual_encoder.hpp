#pragma once

#include <string>
#include <utility>

#include "bmpnet/autodiff.hpp"
#include "bmpnet/random.hpp"

namespace bmp {

enum class EncodeMode { Train, Infer };

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;    // [out]

  static Linear init(std::size_t in, std::size_t out, Rng& rng);
  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }

  template <typename F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

// Linear -> LeakyReLU(0.1) -> Linear.
template <typename T>
struct Mlp {
  Linear<T> first;
  Linear<T> second;

  static Mlp init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);

  template <typename F>
  void for_each(const std::string& prefix, F&& f) {
    first.for_each(prefix + ".first", f);
    second.for_each(prefix + ".second", f);
  }
};

// Composite transform g, residue distribution and the attribute/object
// extraction heads. With `conditional` set, the residue mean and
// log-variance are linear functions of g's output instead of free vectors.
template <typename T>
struct VisualParams {
  Mlp<T> transform;
  Tensor<T> residue_mu;      // [d]
  Tensor<T> residue_logvar;  // [d]
  bool conditional = false;
  Linear<T> residue_mu_head;
  Linear<T> residue_logvar_head;
  Mlp<T> attr_head;
  Mlp<T> obj_head;

  static constexpr double kInitialLogVar = -4.0;

  static VisualParams init(std::size_t input_dim, std::size_t dim, bool conditional, Rng& rng);

  std::size_t input_dim() const { return transform.first.in_dim(); }
  std::size_t dim() const { return transform.second.out_dim(); }

  template <typename F>
  void for_each(F&& f) {
    transform.for_each("visual.transform", f);
    if (conditional) {
      residue_mu_head.for_each("visual.residue_mu_head", f);
      residue_logvar_head.for_each("visual.residue_logvar_head", f);
    } else {
      f("visual.residue_mu", residue_mu);
      f("visual.residue_logvar", residue_logvar);
    }
    attr_head.for_each("visual.attr_head", f);
    obj_head.for_each("visual.obj_head", f);
  }
};

template <typename T>
class VisualGraph {
 public:
  VisualGraph(ad::Graph<T>& graph, const VisualParams<T>& params, bool use_residue = true);

  // features [m, input_dim] -> x_ij [m, d]. Train mode draws the residue as
  // mu + sigma * noise (noise [m, d], required); infer mode subtracts mu.
  ad::Var encode_composite(ad::Var features, EncodeMode mode, const Tensor<T>* noise = nullptr);
  ad::Var attr_features(ad::Var composite) { return mlp(attr_head_, composite); }
  ad::Var obj_features(ad::Var composite) { return mlp(obj_head_, composite); }
  std::pair<ad::Var, ad::Var> extract_primitives(ad::Var composite) {
    return {attr_features(composite), obj_features(composite)};
  }

 private:
  struct LinearVars {
    ad::Var weight, bias;
  };
  struct MlpVars {
    LinearVars first, second;
  };
  LinearVars bind(const Linear<T>& l);
  MlpVars bind(const Mlp<T>& m);
  ad::Var linear(const LinearVars& l, ad::Var x);
  ad::Var mlp(const MlpVars& m, ad::Var x);

  ad::Graph<T>& graph_;
  const VisualParams<T>& params_;
  bool use_residue_;
  MlpVars transform_, attr_head_, obj_head_;
  LinearVars mu_head_, logvar_head_;
  ad::Var mu_, logvar_;
};

// Convenience wrappers over a throwaway graph. `features` is [m, input_dim]
// or a single [input_dim] vector.
template <typename T>
Tensor<T> encode_composite(const Tensor<T>& features, const VisualParams<T>& params, EncodeMode mode,
                           const Tensor<T>* noise = nullptr);

template <typename T>
std::pair<Tensor<T>, Tensor<T>> extract_primitives(const Tensor<T>& composite,
                                                   const VisualParams<T>& params);

}  // namespace bmp
