#pragma once

// Sparse GEMM wall time as the kept-column fraction of a square layer drops.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "bpunch/autotune.hpp"
#include "bpunch/kernels.hpp"
#include "bpunch/packed.hpp"

namespace bench {

struct SweepPoint {
  double kept_fraction = 0.0;
  double ms = 0.0;  // median
};

/// Every band keeps the same number of randomly chosen columns.
inline bpunch::PackedSparseLayer layer_with_fraction(std::size_t n, double fraction, bpunch::BlockConfig cfg,
                                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  bpunch::WeightTensor w("sweep", {n, n, 1, 1});
  for (auto& v : w.values) v = u(rng);
  const bpunch::BlockGrid grid(n, n, cfg);
  bpunch::PruneMask mask("sweep", grid);
  const auto keep = static_cast<std::size_t>(fraction * static_cast<double>(n) + 0.5);
  std::vector<std::size_t> cols(n);
  for (std::size_t br = 0; br < grid.block_rows(); ++br) {
    std::iota(cols.begin(), cols.end(), 0);
    std::shuffle(cols.begin(), cols.end(), rng);
    std::vector<std::vector<std::uint16_t>> kept(grid.block_cols());
    for (std::size_t i = 0; i < keep; ++i) kept[cols[i] / cfg.gn].push_back(static_cast<std::uint16_t>(cols[i] % cfg.gn));
    for (std::size_t bc = 0; bc < grid.block_cols(); ++bc) {
      std::sort(kept[bc].begin(), kept[bc].end());
      mask.set_kept(br, bc, kept[bc]);
    }
  }
  return bpunch::reorder_blocks(bpunch::encode(w, mask));
}

template <typename F>
double median_ms(F&& f, std::size_t repeats) {
  std::vector<double> ms;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::nth_element(ms.begin(), ms.begin() + static_cast<std::ptrdiff_t>(ms.size() / 2), ms.end());
  return ms[ms.size() / 2];
}

inline std::vector<SweepPoint> kept_fraction_sweep(std::size_t n = 1024, std::size_t batch = 64,
                                                   std::size_t repeats = 9) {
  std::mt19937_64 rng(7);
  bpunch::Matrix x(n, batch);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : x.data) v = u(rng);
  const bpunch::TuningConfig tuning = bpunch::default_tuning(bpunch::Lane::kG);
  std::vector<SweepPoint> out;
  for (int step = 10; step >= 1; --step) {
    const double f = step / 10.0;
    const auto layer = layer_with_fraction(n, f, {8, 4}, 100 + static_cast<std::uint64_t>(step));
    bpunch::sparse_gemm(layer, x, tuning);  // warm-up
    out.push_back({f, median_ms([&] { bpunch::sparse_gemm(layer, x, tuning); }, repeats)});
  }
  return out;
}

}  // namespace bench
