#include "bpunch/projection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bpunch/error.hpp"

namespace bpunch {

PruneMask project_mask(const GroupNorms& norms, std::string layer_id, std::size_t kept_columns) {
  const BlockGrid& grid = norms.grid;
  const std::size_t cols = grid.cols();
  const std::size_t total = norms.values.size();
  if (kept_columns > total)
    throw InfeasibleTarget("layer '" + layer_id + "': budget of " + std::to_string(kept_columns) +
                           " columns exceeds the " + std::to_string(total) + " available");

  // Group g = band * cols + col.
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto better = [&](std::size_t a, std::size_t b) {
    if (norms.values[a] != norms.values[b]) return norms.values[a] > norms.values[b];
    const std::size_t ca = a % cols, cb = b % cols;
    if (ca != cb) return ca < cb;
    return a / cols < b / cols;
  };
  if (kept_columns < total) {
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kept_columns), order.end(), better);
  }
  order.resize(kept_columns);
  std::sort(order.begin(), order.end());  // band-major, then column

  PruneMask mask(std::move(layer_id), grid);
  const BlockConfig cfg = grid.config();
  std::size_t i = 0;
  for (std::size_t br = 0; br < grid.block_rows(); ++br) {
    for (std::size_t bc = 0; bc < grid.block_cols(); ++bc) {
      std::vector<std::uint16_t> kept;
      const std::size_t end = br * cols + std::min(cols, (bc + 1) * cfg.gn);
      while (i < order.size() && order[i] < end) {
        kept.push_back(static_cast<std::uint16_t>(order[i] % cols - bc * cfg.gn));
        ++i;
      }
      mask.set_kept(br, bc, std::move(kept));
    }
  }
  return mask;
}

PruneMask project_mask(const WeightTensor& weights, BlockConfig cfg, std::size_t kept_columns) {
  return project_mask(group_norms(weights, cfg), weights.layer_id, kept_columns);
}

std::string_view to_string(BaselineScheme scheme) {
  return scheme == BaselineScheme::kUnstructured ? "unstructured" : "filter-structured";
}

ElementMask unstructured_mask(const WeightTensor& weights, std::size_t kept) {
  const std::size_t n = weights.values.size();
  kept = std::min(kept, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto better = [&](std::size_t a, std::size_t b) {
    const float ma = std::fabs(weights.values[a]), mb = std::fabs(weights.values[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  };
  if (kept < n) std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kept), order.end(), better);
  ElementMask out{weights.layer_id, weights.rows(), weights.cols(), std::vector<std::uint8_t>(n, 0)};
  for (std::size_t i = 0; i < kept; ++i) out.keep[order[i]] = 1;
  return out;
}

ElementMask filter_mask(const WeightTensor& weights, std::size_t kept_rows) {
  const std::size_t rows = weights.rows(), cols = weights.cols();
  kept_rows = std::min(kept_rows, rows);
  std::vector<double> norm(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = weights.at(r, c);
      norm[r] += v * v;
    }
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norm[a] > norm[b]; });
  ElementMask out{weights.layer_id, rows, cols, std::vector<std::uint8_t>(rows * cols, 0)};
  for (std::size_t i = 0; i < kept_rows; ++i)
    std::fill_n(out.keep.begin() + static_cast<std::ptrdiff_t>(order[i] * cols), cols, std::uint8_t{1});
  return out;
}

ElementMask baseline_prune(const WeightTensor& weights, BaselineScheme scheme, double rate) {
  if (!(rate >= 1.0)) throw InfeasibleTarget("compression rate must be >= 1");
  const auto units = [&](std::size_t total) {
    const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(total) / rate));
    return std::clamp<std::size_t>(k, 1, total);
  };
  if (scheme == BaselineScheme::kUnstructured) return unstructured_mask(weights, units(weights.values.size()));
  return filter_mask(weights, units(weights.rows()));
}

}  // namespace bpunch
