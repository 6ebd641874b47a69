#include "bpunch/budget.hpp"

#include <algorithm>
#include <cmath>

#include "bpunch/error.hpp"

namespace bpunch {

const LayerBudget& BudgetPlan::at(const std::string& id) const {
  for (const auto& l : layers)
    if (l.layer_id == id) return l;
  throw ShapeError("no budget for layer '" + id + "'");
}

BudgetPlan allocate_budgets(const ModelGraph& model, const CompressionTarget& target, BlockConfig cfg) {
  if (!(target.rate >= 1.0) || !std::isfinite(target.rate))
    throw InfeasibleTarget("compression rate must be a finite value >= 1");
  if (!(target.rho > 0.0) || !std::isfinite(target.rho)) throw InfeasibleTarget("kernel-size rate ratio must be > 0");
  for (const auto& [id, rate] : target.overrides) {
    if (!model.index_of(id) || !model.layer(id).has_weights())
      throw InfeasibleTarget("override for unknown weight layer '" + id + "'");
    if (!(rate >= 1.0)) throw InfeasibleTarget("override rate for '" + id + "' must be >= 1");
  }

  BudgetPlan plan;
  double free_3x3 = 0.0, free_other = 0.0, fixed_kept = 0.0;
  for (const auto& l : model.layers()) {
    if (!l.has_weights()) continue;
    const auto w = static_cast<double>(l.weight_count());
    plan.total_weights += w;
    if (auto it = target.overrides.find(l.id); it != target.overrides.end()) {
      fixed_kept += w / it->second;
    } else {
      (l.is_3x3() ? free_3x3 : free_other) += w;
    }
  }

  const double total_kept = plan.total_weights / target.rate;
  const double free_kept = total_kept - fixed_kept;
  const double free_total = free_3x3 + free_other;
  if (free_total > 0.0) {
    if (!(free_kept > 0.0) || free_kept > free_total * (1.0 + 1e-12))
      throw InfeasibleTarget("overrides are inconsistent with the global rate");
    // free_3x3 / (rho·r1) + free_other / r1 = free_kept
    double r_other = (free_3x3 / target.rho + free_other) / free_kept;
    double r_3x3 = target.rho * r_other;
    if (free_3x3 == 0.0) {
      r_other = free_total / free_kept;
      r_3x3 = r_other;
    } else if (free_other == 0.0) {
      r_3x3 = free_total / free_kept;
      r_other = r_3x3;
    } else if (r_other < 1.0) {
      r_other = 1.0;
      r_3x3 = free_3x3 / (free_kept - free_other);
    }
    if (r_3x3 < 1.0 - 1e-12) throw InfeasibleTarget("rate ratio forces a 3x3 rate below 1");
    plan.rate_3x3 = std::max(1.0, r_3x3);
    plan.rate_other = std::max(1.0, r_other);
  } else if (std::fabs(free_kept) > 1e-9 * plan.total_weights) {
    throw InfeasibleTarget("overrides are inconsistent with the global rate");
  }

  for (const auto& l : model.layers()) {
    if (!l.has_weights()) continue;
    LayerBudget b;
    b.layer_id = l.id;
    b.weights = l.weight_count();
    b.is_3x3 = l.is_3x3();
    if (auto it = target.overrides.find(l.id); it != target.overrides.end()) {
      b.rate = it->second;
    } else {
      b.rate = b.is_3x3 ? plan.rate_3x3 : plan.rate_other;
    }
    b.kept_weights = static_cast<double>(b.weights) / b.rate;

    const BlockGrid grid(l.filters, l.gemm_cols(), cfg);
    b.total_columns = grid.block_rows() * grid.cols();
    // Fewer than M kept weights means less than one column per band.
    if (b.kept_weights < static_cast<double>(l.filters) * (1.0 - 1e-9))
      throw InfeasibleTarget("layer '" + l.id + "': rate " + std::to_string(b.rate) +
                             " keeps less than one column per block row band");
    const double per_column = static_cast<double>(l.filters) / static_cast<double>(grid.block_rows());
    const auto cols = static_cast<std::size_t>(std::llround(b.kept_weights / per_column));
    b.kept_columns = std::clamp(cols, grid.block_rows(), b.total_columns);
    plan.total_kept += b.kept_weights;
    plan.layers.push_back(std::move(b));
  }
  return plan;
}

}  // namespace bpunch
