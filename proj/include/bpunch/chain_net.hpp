#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bpunch/dataset.hpp"
#include "bpunch/graph.hpp"
#include "bpunch/mask.hpp"
#include "bpunch/weights.hpp"

namespace bpunch {

/// Trainable view of a chain-shaped model: every layer is conv or fc, takes
/// the previous layer as its only input, and is followed by an implicit ReLU
/// except the last, whose outputs are class logits.
class ChainNet {
 public:
  struct Layer {
    LayerSpec spec;
    std::vector<double> weights;  // (M, N, Kh, Kw) row-major
    std::vector<double> bias;     // M
  };

  struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> bias;
  };

  explicit ChainNet(const ModelGraph& model);

  Shape3 input_shape() const { return input_; }
  std::size_t classes() const { return layers_.back().spec.filters; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t parameter_count() const;

  /// He-uniform weights, zero bias.
  void init(std::uint64_t seed);

  /// Copies weights, and biases where the map carries them.
  void set_weights(const WeightMap& weights);
  WeightMap weights() const;

  /// Mean cross-entropy over the selected samples. Fills `grads` (resized as
  /// needed) when non-null.
  double loss(const Dataset& data, std::span<const std::size_t> samples, Gradients* grads = nullptr) const;

  std::vector<double> logits(std::span<const float> image) const;
  double accuracy(const Dataset& data) const;

  Gradients zero_gradients() const;

 private:
  Shape3 input_;
  std::vector<Layer> layers_;
};

}  // namespace bpunch
