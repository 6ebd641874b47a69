#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "bpunch/blocks.hpp"
#include "bpunch/graph.hpp"

namespace bpunch {

/// Global compression goal. rho is the ratio between the rate applied to
/// 3x3 layers and the rate applied to all other weight layers.
struct CompressionTarget {
  double rate = 1.0;
  double rho = 1.15;
  std::map<std::string, double> overrides;  // layer id -> fixed rate
};

struct LayerBudget {
  std::string layer_id;
  std::size_t weights = 0;
  double rate = 1.0;
  double kept_weights = 0.0;      // real-valued, sums to total / rate
  std::size_t kept_columns = 0;   // block columns handed to project_mask
  std::size_t total_columns = 0;  // block_rows x C
  bool is_3x3 = false;
};

struct BudgetPlan {
  std::vector<LayerBudget> layers;
  double rate_3x3 = 1.0;
  double rate_other = 1.0;
  double total_weights = 0.0;
  double total_kept = 0.0;

  const LayerBudget& at(const std::string& id) const;
};

/// Splits a global rate into per-layer rates with rate_3x3 = rho·rate_other
/// such that total / Σ(kept) equals the global rate. When that would need
/// rate_other < 1 the non-3x3 layers stay dense and the 3x3 layers absorb
/// the whole budget. Throws InfeasibleTarget when a layer would keep less
/// than one column per row band on average or a rate would drop below 1.
BudgetPlan allocate_budgets(const ModelGraph& model, const CompressionTarget& target, BlockConfig cfg);

}  // namespace bpunch
