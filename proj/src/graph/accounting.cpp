#include "bpunch/accounting.hpp"

namespace bpunch {

WeightCount count_weights(const ModelGraph& model) {
  WeightCount out;
  for (const auto& l : model.layers()) {
    if (!l.has_weights()) continue;
    LayerWeightCount c{l.id, l.weight_count(), l.weight_count() + l.affine_count(), l.is_3x3()};
    out.total_weights += c.weights;
    out.total_parameters += c.parameters;
    if (c.is_3x3) out.weights_3x3 += c.weights;
    out.layers.push_back(std::move(c));
  }
  return out;
}

FlopCount count_flops(const ModelGraph& model) { return count_flops(model, model.input_shape()); }

FlopCount count_flops(const ModelGraph& model, Shape3 input) {
  const auto shapes = model.infer_shapes(input);
  FlopCount out;
  const auto& layers = model.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const Shape3 s = shapes[i];
    if (l.has_weights()) {
      const double positions = static_cast<double>(s.h * s.w);
      const double flops = 2.0 * static_cast<double>(l.weight_count()) * positions;
      out.layers.push_back({l.id, flops, l.is_3x3()});
      out.total += flops;
      (l.is_3x3() ? out.flops_3x3 : out.flops_other) += flops;
    } else if (l.kind == LayerKind::kAdd || l.kind == LayerKind::kMul) {
      const std::size_t operands = l.scalar ? 1 : l.inputs.size() - 1;
      out.elementwise += static_cast<double>(operands * s.size());
    }
  }
  return out;
}

}  // namespace bpunch
