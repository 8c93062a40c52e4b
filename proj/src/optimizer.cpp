#include "bmpnet/optimizer.hpp"

#include <cmath>

#include "bmpnet/error.hpp"

namespace bmp {

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const Model<T>& model) {
  AdamState s;
  model.for_each([&](const std::string&, const Tensor<T>& t) {
    s.first.emplace_back(t.shape());
    s.second.emplace_back(t.shape());
  });
  return s;
}

template <typename T>
void adam_update(Model<T>& model, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
                 const AdamConfig& config) {
  if (grads.size() != state.first.size()) throw Error("adam: gradient count does not match slots");
  ++state.steps;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.steps));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.steps));
  const T b1 = T(config.beta1), b2 = T(config.beta2);
  const T step = T(config.learning_rate / c1);
  const T inv_c2 = T(1.0 / c2);
  const T eps = T(config.epsilon);
  std::size_t k = 0;
  model.for_each([&](const std::string& name, Tensor<T>& p) {
    const Tensor<T>& g = grads[k];
    if (g.shape() != p.shape()) throw ShapeError("adam: gradient shape mismatch for " + name);
    T* pm = state.first[k].data().data();
    T* pv = state.second[k].data().data();
    T* pp = p.data().data();
    const T* pg = g.data().data();
    const std::size_t n = p.size();
    for (std::size_t i = 0; i < n; ++i) {
      pm[i] = b1 * pm[i] + (T(1) - b1) * pg[i];
      pv[i] = b2 * pv[i] + (T(1) - b2) * pg[i] * pg[i];
      pp[i] -= step * pm[i] / (std::sqrt(pv[i] * inv_c2) + eps);
    }
    ++k;
  });
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_update(Model<float>&, const std::vector<Tensor<float>>&, AdamState<float>&,
                          const AdamConfig&);
template void adam_update(Model<double>&, const std::vector<Tensor<double>>&, AdamState<double>&,
                          const AdamConfig&);

}  // namespace bmp
