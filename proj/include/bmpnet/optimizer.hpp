#pragma once

#include <cstdint>
#include <vector>

#include "bmpnet/model.hpp"

namespace bmp {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First and second moment slots, one per model tensor in for_each order.
template <typename T>
struct AdamState {
  std::vector<Tensor<T>> first;
  std::vector<Tensor<T>> second;
  std::uint64_t steps = 0;

  static AdamState zeros_like(const Model<T>& model);
};

template <typename T>
void adam_update(Model<T>& model, const std::vector<Tensor<T>>& grads, AdamState<T>& state,
                 const AdamConfig& config);

}  // namespace bmp
