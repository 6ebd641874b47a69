#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "bpunch/blocks.hpp"
#include "bpunch/kernels.hpp"
#include "bpunch/mask.hpp"
#include "bpunch/weights.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& name) {
  return std::filesystem::path(BPUNCH_FIXTURE_DIR) / name;
}

inline bpunch::WeightTensor random_tensor(std::mt19937_64& rng, const std::string& id, bpunch::WeightDims d) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  bpunch::WeightTensor w(id, d);
  for (auto& v : w.values) v = u(rng);
  return w;
}

/// Random block mask whose weight sparsity is at least `sparsity`: groups are
/// visited in random order and kept while they fit the kept-weight budget.
inline bpunch::PruneMask random_mask(std::mt19937_64& rng, const std::string& id, const bpunch::BlockGrid& grid,
                                     double sparsity) {
  std::vector<std::pair<std::size_t, std::size_t>> groups;
  for (std::size_t br = 0; br < grid.block_rows(); ++br)
    for (std::size_t c = 0; c < grid.cols(); ++c) groups.emplace_back(br, c);
  std::shuffle(groups.begin(), groups.end(), rng);
  const double budget = (1.0 - sparsity) * static_cast<double>(grid.rows() * grid.cols());
  std::vector<std::vector<std::vector<std::uint16_t>>> kept(grid.block_rows(),
                                                            std::vector<std::vector<std::uint16_t>>(grid.block_cols()));
  double used = 0.0;
  for (auto [br, c] : groups) {
    const double h = static_cast<double>(grid.band_height(br));
    if (used + h > budget) continue;
    used += h;
    kept[br][c / grid.config().gn].push_back(static_cast<std::uint16_t>(c % grid.config().gn));
  }
  bpunch::PruneMask mask(id, grid);
  for (std::size_t br = 0; br < grid.block_rows(); ++br)
    for (std::size_t bc = 0; bc < grid.block_cols(); ++bc) {
      auto& k = kept[br][bc];
      std::sort(k.begin(), k.end());
      mask.set_kept(br, bc, k);
    }
  return mask;
}

inline bpunch::Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  bpunch::Matrix m(rows, cols);
  for (auto& v : m.data) v = u(rng);
  return m;
}

inline std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

}  // namespace testing
