#include "bpunch/compression_report.hpp"

#include <limits>

#include "bpunch/accounting.hpp"
#include "bpunch/error.hpp"

namespace bpunch {

double pattern_ceiling(double prunable_fraction) {
  if (prunable_fraction < 0.0 || prunable_fraction > 1.0) throw Error("prunable fraction must lie in [0, 1]");
  if (prunable_fraction == 1.0) return std::numeric_limits<double>::infinity();
  return 1.0 / (1.0 - prunable_fraction);
}

double compression_rate(double before, double after) {
  if (after <= 0.0) return std::numeric_limits<double>::infinity();
  return before / after;
}

CompressionReport compression_report(const ModelGraph& model, const std::map<std::string, std::size_t>& kept_weights) {
  const WeightCount wc = count_weights(model);
  const FlopCount fc = count_flops(model);
  CompressionReport r;
  r.weights_before = wc.total_weights;
  r.parameters_before = wc.total_parameters;
  r.flops_before = fc.total;
  r.prunable_fraction = wc.fraction_3x3();
  r.pattern_ceiling = pattern_ceiling(r.prunable_fraction);

  for (std::size_t i = 0; i < wc.layers.size(); ++i) {
    const auto& lw = wc.layers[i];
    std::size_t kept = lw.weights;
    if (auto it = kept_weights.find(lw.layer_id); it != kept_weights.end()) {
      if (it->second > lw.weights) throw ShapeError("layer '" + lw.layer_id + "' keeps more weights than it has");
      kept = it->second;
    }
    r.weights_after += kept;
    // count_weights and count_flops list weight layers in the same order.
    r.flops_after += fc.layers[i].flops * static_cast<double>(kept) / static_cast<double>(lw.weights);
  }
  for (const auto& [id, _] : kept_weights)
    if (!model.index_of(id)) throw ShapeError("mask for unknown layer '" + id + "'");
  r.parameters_after = r.parameters_before - (r.weights_before - r.weights_after);
  r.rate = compression_rate(static_cast<double>(r.weights_before), static_cast<double>(r.weights_after));
  return r;
}

CompressionReport compression_report(const ModelGraph& model, const MaskSet& masks) {
  std::map<std::string, std::size_t> kept;
  for (const auto& [id, m] : masks) kept[id] = m.kept_weights();
  return compression_report(model, kept);
}

CompressionReport compression_report(const ModelGraph& model, const std::map<std::string, ElementMask>& masks) {
  std::map<std::string, std::size_t> kept;
  for (const auto& [id, m] : masks) kept[id] = m.kept_count();
  return compression_report(model, kept);
}

}  // namespace bpunch
