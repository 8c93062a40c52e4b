#pragma once

#include <string>
#include <vector>

#include "bmpnet/concept_graph.hpp"
#include "bmpnet/visual_encoder.hpp"

namespace bmp {

struct ModelConfig {
  std::size_t dim = 512;        // concept and visual feature width
  std::size_t input_dim = 512;  // backbone feature width
  bool conditional_residue = false;
  bool use_residue = true;
  bool edge_blocking = true;  // false: naive message passing in training and inference
};

// Softmax classifiers over attributes and objects fed with concept features.
template <typename T>
struct AuxClassifiers {
  Linear<T> attr;
  Linear<T> obj;

  template <typename F>
  void for_each(F&& f) {
    attr.for_each("aux.attr", f);
    obj.for_each("aux.obj", f);
  }
};

template <typename T>
struct Model {
  ModelConfig config;
  std::size_t num_attributes = 0;
  std::size_t num_objects = 0;
  ConceptParams<T> concepts;
  VisualParams<T> visual;
  AuxClassifiers<T> classifiers;

  static Model init(const ModelConfig& config, std::size_t num_attributes, std::size_t num_objects,
                    Rng& rng);

  // Visits every learnable tensor in a fixed order: (name, tensor&).
  template <typename F>
  void for_each(F&& f) {
    concepts.for_each(f);
    visual.for_each(f);
    classifiers.for_each(f);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<Model*>(this)->for_each([&](const std::string& name, Tensor<T>& t) {
      f(name, static_cast<const Tensor<T>&>(t));
    });
  }

  std::size_t parameter_count() const;
};

extern template struct Model<float>;
extern template struct Model<double>;

}  // namespace bmp
