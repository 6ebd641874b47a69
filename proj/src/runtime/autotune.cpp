#include "bpunch/autotune.hpp"

#include <algorithm>

#include <omp.h>

namespace bpunch {

namespace {
constexpr int kRepeats = 3;
using Clock = std::chrono::steady_clock;
}  // namespace

std::size_t hardware_workers() { return static_cast<std::size_t>(std::max(omp_get_num_procs(), 1)); }

TuningConfig default_tuning(Lane lane) { return {1, 64, lane == Lane::kG ? hardware_workers() : 1}; }

std::vector<TuningConfig> tuning_candidates(Lane lane, std::size_t bands, std::size_t cols) {
  std::vector<TuningConfig> out{clamp(default_tuning(lane), bands, cols)};
  const std::size_t max_workers = lane == Lane::kG ? hardware_workers() : 1;
  for (std::size_t rt : {1, 2, 4, 8})
    for (std::size_t ct : {16, 32, 64})
      for (std::size_t w = 1; w <= max_workers; ++w) {
        const TuningConfig c = clamp({rt, ct, w}, bands, cols);
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
      }
  return out;
}

Autotuner::Key Autotuner::key_of(const PackedSparseLayer& packed, const Matrix& x, Lane lane) {
  const BlockConfig cfg = packed.grid().config();
  return {packed.rows(), packed.cols(), cfg.gm, cfg.gn, x.cols, lane};
}

std::optional<TuningConfig> Autotuner::cached(const Key& key) const {
  const auto it = cache_.find(key);
  if (it == cache_.end()) return std::nullopt;
  return it->second;
}

double Autotuner::measure(const PackedSparseLayer& packed, const Matrix& x, const TuningConfig& cfg) {
  std::vector<double> t;
  for (int i = 0; i < kRepeats; ++i) {
    const auto start = Clock::now();
    const Matrix y = sparse_gemm(packed, x, cfg);
    t.push_back(std::chrono::duration<double>(Clock::now() - start).count());
    ++timed_runs_;
  }
  std::nth_element(t.begin(), t.begin() + kRepeats / 2, t.end());
  return t[kRepeats / 2];
}

TuningConfig Autotuner::tune(const PackedSparseLayer& packed, const Matrix& x, Lane lane,
                             std::chrono::milliseconds budget) {
  return tune(packed, x, lane, budget, tuning_candidates(lane, packed.grid().block_rows(), x.cols));
}

TuningConfig Autotuner::tune(const PackedSparseLayer& packed, const Matrix& x, Lane lane,
                             std::chrono::milliseconds budget, const std::vector<TuningConfig>& candidates) {
  const Key key = key_of(packed, x, lane);
  if (auto hit = cached(key)) return *hit;

  const std::size_t bands = packed.grid().block_rows();
  std::vector<TuningConfig> set;
  for (const auto& raw : candidates) {
    const TuningConfig c = clamp(raw, bands, x.cols);
    if (std::find(set.begin(), set.end(), c) == set.end()) set.push_back(c);
  }
  // The yardstick is the default configuration when it is a candidate.
  const TuningConfig def = clamp(default_tuning(lane), bands, x.cols);
  if (set.empty()) set.push_back(def);
  const auto def_it = std::find(set.begin(), set.end(), def);
  const TuningConfig base = def_it != set.end() ? def : set.front();

  TuningConfig best = base;
  if (set.size() > 1) {
    const auto deadline = Clock::now() + budget;
    double best_t = measure(packed, x, base);
    for (const auto& c : set) {
      if (Clock::now() >= deadline) break;
      if (c == base) continue;
      const double t = measure(packed, x, c);
      if (t < best_t) best_t = t, best = c;
    }
    // Keep the winner only if it still beats the yardstick when both are
    // timed again; otherwise the difference was noise.
    if (!(best == base)) {
      const double t_best = measure(packed, x, best);
      const double t_base = measure(packed, x, base);
      if (t_best >= t_base * (1.0 - kNoiseMargin)) best = base;
    }
  }
  cache_.emplace(key, best);
  return best;
}

}  // namespace bpunch
