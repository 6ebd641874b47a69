#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "bpunch/mask.hpp"

namespace bpunch {

/// Hard projection onto the block-punched set: ranks every block column of
/// the layer by squared norm (descending; ties to the lower column index,
/// then the lower row band) and keeps the first `kept_columns` of them.
PruneMask project_mask(const GroupNorms& norms, std::string layer_id, std::size_t kept_columns);
PruneMask project_mask(const WeightTensor& weights, BlockConfig cfg, std::size_t kept_columns);

enum class BaselineScheme { kUnstructured, kFilter };

std::string_view to_string(BaselineScheme scheme);

/// Keeps the `kept` largest-magnitude weights (ties to the lower flat index).
ElementMask unstructured_mask(const WeightTensor& weights, std::size_t kept);
/// Keeps the `kept_rows` filters with the largest L2 norm (ties to the lower
/// row).
ElementMask filter_mask(const WeightTensor& weights, std::size_t kept_rows);

/// Rate-driven baselines; the kept unit count is round(total / rate), at
/// least 1.
ElementMask baseline_prune(const WeightTensor& weights, BaselineScheme scheme, double rate);

}  // namespace bpunch
