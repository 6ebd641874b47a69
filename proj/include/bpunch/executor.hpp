#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "bpunch/autotune.hpp"
#include "bpunch/graph.hpp"
#include "bpunch/kernels.hpp"
#include "bpunch/mask.hpp"
#include "bpunch/packed.hpp"
#include "bpunch/scheduler.hpp"
#include "bpunch/weights.hpp"

namespace bpunch {

/// Packs every weight layer of the model. Layers without a mask are packed
/// dense. Bands are reordered when `reorder` is set.
PackedModel pack_model(const ModelGraph& model, const WeightMap& weights, const MaskSet& masks, BlockConfig cfg,
                       bool reorder = true);

struct TraceEntry {
  std::string layer_id;
  std::string structure_id;  // empty outside branch structures
  std::size_t branch = 0;
  Lane lane = Lane::kG;
  double start_ms = 0.0;  // relative to the start of the run
  double duration_ms = 0.0;
};

struct RunOptions {
  TuningConfig fast = default_tuning(Lane::kG);
  TuningConfig general = default_tuning(Lane::kC);
  /// When set, every weight layer is tuned once per lane before use.
  Autotuner* tuner = nullptr;
  std::chrono::milliseconds tune_budget{50};
  /// Keep every layer's output in RunResult::activations.
  bool keep_activations = false;
};

struct RunResult {
  /// Outputs of the layers nothing else consumes; the input itself for a
  /// model without layers.
  std::map<std::string, FeatureMap> outputs;
  std::map<std::string, FeatureMap> activations;
  std::vector<TraceEntry> trace;
  double wall_ms = 0.0;

  /// Sequential layer time plus, per structure, the slower lane's total.
  double critical_path_ms() const;
};

/// Executes the model with sparse kernels. Layers outside branch structures
/// run on lane G; a structure's branches run on the lanes the schedule gives
/// them (all G without a schedule), each lane taking its branches one after
/// another while the C lane runs on its own thread. Throws ShapeError when
/// the schedule does not fit the model or a weight layer is not packed.
RunResult run_model(const ModelGraph& model, const PackedModel& packed, const FeatureMap& input,
                    const Schedule* schedule = nullptr, const RunOptions& options = {});

/// Straightforward execution with dense weights and direct convolution,
/// accumulating in double. Returns every layer's output by id.
std::map<std::string, FeatureMap> run_model_dense(const ModelGraph& model, const WeightMap& weights,
                                                  const FeatureMap& input);

/// ||a - ref|| / ||ref|| (0 when both are zero). Throws ShapeError on a shape
/// mismatch.
double relative_error(const FeatureMap& a, const FeatureMap& ref);

struct ProfileOptions {
  std::size_t repeats = 5;
  RunOptions run;
  /// Buffer sizes used to fit the copy model.
  std::vector<std::size_t> copy_sizes{std::size_t{1} << 16, std::size_t{1} << 20, std::size_t{1} << 23};
};

/// Measures every branch on both lanes (median of `repeats` runs), the
/// sequential remainder, and fits the copy model to timed buffer copies.
DeviceProfile profile_branches(const ModelGraph& model, const PackedModel& packed, const FeatureMap& input,
                               const ProfileOptions& options = {});

}  // namespace bpunch
