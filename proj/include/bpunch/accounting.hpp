#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bpunch/graph.hpp"

namespace bpunch {

struct LayerWeightCount {
  std::string layer_id;
  std::size_t weights = 0;     // M·N·Kh·Kw
  std::size_t parameters = 0;  // weights + per-filter affine terms
  bool is_3x3 = false;
};

struct WeightCount {
  std::vector<LayerWeightCount> layers;  // weight layers, model order
  std::size_t total_weights = 0;
  std::size_t total_parameters = 0;
  std::size_t weights_3x3 = 0;

  double fraction_3x3() const {
    return total_weights ? static_cast<double>(weights_3x3) / static_cast<double>(total_weights) : 0.0;
  }
};

WeightCount count_weights(const ModelGraph& model);

struct LayerFlops {
  std::string layer_id;
  double flops = 0;  // 2 per multiply-accumulate
  bool is_3x3 = false;
};

/// FLOPs of the weight layers. Element-wise layers are reported separately
/// and excluded from the totals and the 3x3 split.
struct FlopCount {
  std::vector<LayerFlops> layers;
  double total = 0;
  double flops_3x3 = 0;
  double flops_other = 0;
  double elementwise = 0;

  double fraction_3x3() const { return total > 0 ? flops_3x3 / total : 0.0; }
  double fraction_other() const { return total > 0 ? flops_other / total : 0.0; }
};

FlopCount count_flops(const ModelGraph& model);
FlopCount count_flops(const ModelGraph& model, Shape3 input);

}  // namespace bpunch
