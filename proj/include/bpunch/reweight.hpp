#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bpunch/blocks.hpp"

namespace bpunch {

/// Penalty state of reweighted group regularisation. One alpha per block
/// column group, laid out like GroupNorms::values.
struct ReweightState {
  double epsilon = 1e-3;
  double lambda = 1e-4;
  std::size_t round = 0;
  std::map<std::string, std::vector<double>> alpha;
};

/// alpha_g = 1 / (norm2_g + epsilon).
std::vector<double> update_penalties(std::span<const double> norms2, double epsilon);

/// Recomputes alpha for every layer from its current group norms and
/// advances the round counter.
void update_penalties(ReweightState& state, const std::map<std::string, GroupNorms>& norms);

/// Group norms of a row-major rows x cols matrix, accumulated in double.
template <typename T>
std::vector<double> group_norms(std::span<const T> values, std::size_t rows, std::size_t cols, BlockConfig cfg) {
  const std::size_t bands = (rows + cfg.gm - 1) / cfg.gm;
  std::vector<double> out(bands * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double* band = out.data() + (r / cfg.gm) * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = static_cast<double>(values[r * cols + c]);
      band[c] += v * v;
    }
  }
  return out;
}

/// Sum over groups of alpha_g · ||W_g||², without lambda.
template <typename T>
double block_regularizer(std::span<const T> values, std::size_t rows, std::size_t cols, std::span<const double> alpha,
                         BlockConfig cfg) {
  const auto norms = group_norms(values, rows, cols, cfg);
  double acc = 0.0;
  for (std::size_t g = 0; g < norms.size(); ++g) acc += alpha[g] * norms[g];
  return acc;
}

/// grad += 2·lambda·alpha_g·w for every weight w in group g.
template <typename T>
void add_block_regularizer_gradient(std::span<const T> values, std::size_t rows, std::size_t cols,
                                    std::span<const double> alpha, BlockConfig cfg, double lambda,
                                    std::span<T> grad) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* a = alpha.data() + (r / cfg.gm) * cols;
    for (std::size_t c = 0; c < cols; ++c)
      grad[r * cols + c] += static_cast<T>(2.0 * lambda * a[c] * static_cast<double>(values[r * cols + c]));
  }
}

/// task_loss + lambda · Σ_layers Σ_groups alpha_g·||W_g||². Layers missing
/// from state.alpha are not regularised.
double regularized_loss(double task_loss, const WeightMap& weights, const ReweightState& state, BlockConfig cfg);

}  // namespace bpunch
