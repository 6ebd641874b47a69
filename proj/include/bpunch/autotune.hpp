#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <optional>
#include <string_view>
#include <tuple>
#include <vector>

#include "bpunch/kernels.hpp"
#include "bpunch/scheduler.hpp"

namespace bpunch {

/// Worker count available to the fast lane.
std::size_t hardware_workers();

/// Kernel configuration used when nothing has been tuned: one band per task,
/// 64-column passes, every hardware worker on G and one worker on C.
TuningConfig default_tuning(Lane lane);

/// Row tiles {1,2,4,8} x column tiles {16,32,64} x workers (1..hardware on G,
/// 1 on C), clamped to the problem and deduplicated, default first.
std::vector<TuningConfig> tuning_candidates(Lane lane, std::size_t bands, std::size_t cols);

/// Empirical search over kernel configurations with a per-shape cache.
class Autotuner {
 public:
  struct Key {
    std::size_t rows, cols, gm, gn, batch;
    Lane lane;
    friend auto operator<=>(const Key&, const Key&) = default;
  };

  /// Relative margin a candidate must beat the default by, on re-measurement,
  /// to replace it.
  static constexpr double kNoiseMargin = 0.05;

  /// Times the candidates on `x` until the budget runs out (the default is
  /// always timed) and returns the fastest. A cached result for the same key
  /// is returned without timing anything.
  TuningConfig tune(const PackedSparseLayer& packed, const Matrix& x, Lane lane, std::chrono::milliseconds budget);
  TuningConfig tune(const PackedSparseLayer& packed, const Matrix& x, Lane lane, std::chrono::milliseconds budget,
                    const std::vector<TuningConfig>& candidates);

  std::optional<TuningConfig> cached(const Key& key) const;
  static Key key_of(const PackedSparseLayer& packed, const Matrix& x, Lane lane);

  /// Kernel executions spent on timing so far.
  std::size_t timed_runs() const { return timed_runs_; }

 private:
  double measure(const PackedSparseLayer& packed, const Matrix& x, const TuningConfig& cfg);

  std::map<Key, TuningConfig> cache_;
  std::size_t timed_runs_ = 0;
};

}  // namespace bpunch
