#include "bmpnet/model.hpp"

namespace bmp {

template <typename T>
Model<T> Model<T>::init(const ModelConfig& config, std::size_t num_attributes, std::size_t num_objects,
                        Rng& rng) {
  Model m;
  m.config = config;
  m.num_attributes = num_attributes;
  m.num_objects = num_objects;
  m.concepts = ConceptParams<T>::init(num_attributes, num_objects, config.dim, rng);
  m.visual = VisualParams<T>::init(config.input_dim, config.dim, config.conditional_residue, rng);
  m.classifiers.attr = Linear<T>::init(config.dim, num_attributes, rng);
  m.classifiers.obj = Linear<T>::init(config.dim, num_objects, rng);
  return m;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
  return n;
}

template struct Model<float>;
template struct Model<double>;

}  // namespace bmp
