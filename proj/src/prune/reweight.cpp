#include "bpunch/reweight.hpp"

#include "bpunch/error.hpp"

namespace bpunch {

std::vector<double> update_penalties(std::span<const double> norms2, double epsilon) {
  if (!(epsilon > 0.0)) throw Error("reweighting epsilon must be positive");
  std::vector<double> alpha(norms2.size());
  for (std::size_t g = 0; g < norms2.size(); ++g) alpha[g] = 1.0 / (norms2[g] + epsilon);
  return alpha;
}

void update_penalties(ReweightState& state, const std::map<std::string, GroupNorms>& norms) {
  for (const auto& [id, n] : norms) state.alpha[id] = update_penalties(n.values, state.epsilon);
  ++state.round;
}

double regularized_loss(double task_loss, const WeightMap& weights, const ReweightState& state, BlockConfig cfg) {
  double reg = 0.0;
  for (const auto& [id, alpha] : state.alpha) {
    const auto it = weights.find(id);
    if (it == weights.end()) throw ShapeError("penalties for unknown layer '" + id + "'");
    const WeightTensor& w = it->second;
    const std::size_t bands = (w.rows() + cfg.gm - 1) / cfg.gm;
    if (alpha.size() != bands * w.cols()) throw ShapeError("penalty count for '" + id + "' does not match its groups");
    reg += block_regularizer<float>(w.values, w.rows(), w.cols(), alpha, cfg);
  }
  return task_loss + state.lambda * reg;
}

}  // namespace bpunch
