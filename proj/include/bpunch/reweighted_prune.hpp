#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bpunch/budget.hpp"
#include "bpunch/chain_net.hpp"
#include "bpunch/dataset.hpp"
#include "bpunch/mask.hpp"
#include "bpunch/projection.hpp"
#include "bpunch/reweight.hpp"

namespace bpunch {

struct PruneHyper {
  double epsilon = 1e-3;
  double lambda = 1e-4;
  double lambda_growth = 2.0;
  std::size_t rounds = 4;
  std::size_t round_epochs = 2;
  std::size_t finetune_epochs = 8;  // rounds · round_epochs
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
};

/// Reads a JSON object; missing keys keep their defaults, unknown keys are
/// rejected.
PruneHyper load_hyper(const std::filesystem::path& path);
PruneHyper parse_hyper(const std::string& json_text, PruneHyper defaults = {});
std::string format_hyper(const PruneHyper& hyper);

struct TrainOptions {
  std::size_t epochs = 10;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
};

/// Penalty added to the task loss during training.
struct Penalty {
  const ReweightState* state = nullptr;
  BlockConfig cfg{};
};

/// Minibatch SGD with momentum. When masks are given, pruned weights are held
/// at zero (gradients masked and weights re-masked after every step). Returns
/// the mean task loss of the last epoch. Throws NumericError on a non-finite
/// loss.
double train(ChainNet& net, const Dataset& data, const TrainOptions& opts, const Penalty& penalty = {},
             const std::map<std::string, ElementMask>* masks = nullptr);

struct RoundRecord {
  std::size_t round = 0;
  double lambda = 0.0;
  double task_loss = 0.0;
  double objective = 0.0;  // task loss + lambda · regularizer at round end
};

struct PruneResult {
  WeightMap weights;  // zero outside the masks
  MaskSet masks;
  BudgetPlan plan;
  std::vector<RoundRecord> rounds;
  /// Σ squared norm of the groups the projection ends up punching, measured
  /// on the pretrained weights ([0]) and after every reweighting round.
  std::vector<double> punched_norm2;
};

/// Reweighted block-column regularisation for `rounds` rounds (penalties
/// fixed within a round, refreshed and lambda scaled between rounds), hard
/// projection onto the per-layer column budgets, then masked fine-tuning.
/// A target that keeps every column returns the input weights unchanged.
PruneResult reweighted_prune(const ModelGraph& model, const WeightMap& pretrained, const Dataset& train_data,
                             const CompressionTarget& target, BlockConfig cfg, const PruneHyper& hyper);

struct BaselineResult {
  WeightMap weights;
  std::map<std::string, ElementMask> masks;
};

/// One-shot baseline pruning to the same per-layer weight budgets followed by
/// masked fine-tuning for the same number of epochs the reweighted run uses
/// in total.
BaselineResult baseline_prune_finetune(const ModelGraph& model, const WeightMap& pretrained,
                                       const Dataset& train_data, BaselineScheme scheme,
                                       const CompressionTarget& target, BlockConfig cfg, const PruneHyper& hyper);

}  // namespace bpunch
