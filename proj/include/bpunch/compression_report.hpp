#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "bpunch/graph.hpp"
#include "bpunch/mask.hpp"

namespace bpunch {

struct CompressionReport {
  std::size_t weights_before = 0;
  std::size_t weights_after = 0;
  std::size_t parameters_before = 0;
  std::size_t parameters_after = 0;
  double rate = 1.0;
  double flops_before = 0.0;
  double flops_after = 0.0;
  /// Weight fraction held by 3x3 layers, the only ones a 3x3 kernel-pattern
  /// scheme can prune.
  double prunable_fraction = 0.0;
  double pattern_ceiling = 1.0;
};

/// 1 / (1 - f): best rate reachable when only a fraction f of the weights
/// can be removed.
double pattern_ceiling(double prunable_fraction);

double compression_rate(double before, double after);

/// Layers absent from `kept_weights` count as dense. FLOPs of a layer scale
/// with its kept weight fraction.
CompressionReport compression_report(const ModelGraph& model, const std::map<std::string, std::size_t>& kept_weights);
CompressionReport compression_report(const ModelGraph& model, const MaskSet& masks);
CompressionReport compression_report(const ModelGraph& model, const std::map<std::string, ElementMask>& masks);

}  // namespace bpunch
