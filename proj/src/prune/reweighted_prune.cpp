#include "bpunch/reweighted_prune.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "bpunch/error.hpp"

namespace bpunch {

using nlohmann::json;

PruneHyper parse_hyper(const std::string& json_text, PruneHyper h) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("hyperparameter file: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("hyperparameter file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "epsilon") h.epsilon = value.get<double>();
      else if (key == "lambda") h.lambda = value.get<double>();
      else if (key == "lambda_growth") h.lambda_growth = value.get<double>();
      else if (key == "rounds") h.rounds = value.get<std::size_t>();
      else if (key == "round_epochs") h.round_epochs = value.get<std::size_t>();
      else if (key == "finetune_epochs") h.finetune_epochs = value.get<std::size_t>();
      else if (key == "learning_rate") h.learning_rate = value.get<double>();
      else if (key == "momentum") h.momentum = value.get<double>();
      else if (key == "batch_size") h.batch_size = value.get<std::size_t>();
      else if (key == "seed") h.seed = value.get<std::uint64_t>();
      else throw ParseError("unknown hyperparameter", 0, key);
    } catch (const json::type_error& e) {
      throw ParseError(e.what(), 0, key);
    }
  }
  if (!(h.epsilon > 0.0)) throw ParseError("must be positive", 0, "epsilon");
  if (h.batch_size == 0) throw ParseError("must be positive", 0, "batch_size");
  return h;
}

PruneHyper load_hyper(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_hyper(ss.str());
}

std::string format_hyper(const PruneHyper& h) {
  const json j = {{"epsilon", h.epsilon},
                  {"lambda", h.lambda},
                  {"lambda_growth", h.lambda_growth},
                  {"rounds", h.rounds},
                  {"round_epochs", h.round_epochs},
                  {"finetune_epochs", h.finetune_epochs},
                  {"learning_rate", h.learning_rate},
                  {"momentum", h.momentum},
                  {"batch_size", h.batch_size},
                  {"seed", h.seed}};
  return j.dump(2);
}

namespace {

std::vector<double> layer_norms(const ChainNet::Layer& l, BlockConfig cfg) {
  return group_norms<double>(l.weights, l.spec.filters, l.spec.gemm_cols(), cfg);
}

void apply_mask(ChainNet& net, const std::map<std::string, ElementMask>& masks) {
  for (auto& l : net.layers()) {
    const auto it = masks.find(l.spec.id);
    if (it == masks.end()) continue;
    for (std::size_t i = 0; i < l.weights.size(); ++i)
      if (!it->second.keep[i]) l.weights[i] = 0.0;
  }
}

bool keeps_everything(const BudgetPlan& plan) {
  return std::all_of(plan.layers.begin(), plan.layers.end(),
                     [](const LayerBudget& b) { return b.kept_columns == b.total_columns; });
}

TrainOptions options(const PruneHyper& h, std::size_t epochs, std::uint64_t stream) {
  return {epochs, h.learning_rate, h.momentum, h.batch_size, h.seed * 1000003u + stream};
}

}  // namespace

double train(ChainNet& net, const Dataset& data, const TrainOptions& opts, const Penalty& penalty,
             const std::map<std::string, ElementMask>* masks) {
  if (data.size() == 0) throw ShapeError("empty training set");
  std::mt19937_64 rng(opts.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  auto velocity = net.zero_gradients();
  ChainNet::Gradients grads;
  auto& layers = net.layers();
  if (masks) apply_mask(net, *masks);

  double epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t n = std::min(opts.batch_size, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, n);
      const double loss = net.loss(data, batch, &grads);
      if (!std::isfinite(loss))
        throw NumericError("non-finite training loss " + std::to_string(loss) + " at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches));
      epoch_loss += loss;
      ++batches;

      for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        auto& gw = grads.weights[i];
        if (penalty.state) {
          const auto it = penalty.state->alpha.find(l.spec.id);
          if (it != penalty.state->alpha.end())
            add_block_regularizer_gradient<double>(l.weights, l.spec.filters, l.spec.gemm_cols(), it->second,
                                                   penalty.cfg, penalty.state->lambda, gw);
        }
        const ElementMask* mask = nullptr;
        if (masks)
          if (auto it = masks->find(l.spec.id); it != masks->end()) mask = &it->second;
        for (std::size_t k = 0; k < l.weights.size(); ++k) {
          if (mask && !mask->keep[k]) continue;
          velocity.weights[i][k] = opts.momentum * velocity.weights[i][k] + gw[k];
          l.weights[k] -= opts.learning_rate * velocity.weights[i][k];
        }
        for (std::size_t k = 0; k < l.bias.size(); ++k) {
          velocity.bias[i][k] = opts.momentum * velocity.bias[i][k] + grads.bias[i][k];
          l.bias[k] -= opts.learning_rate * velocity.bias[i][k];
        }
      }
    }
    epoch_loss /= static_cast<double>(batches);
  }
  for (const auto& l : layers)
    for (double w : l.weights)
      if (!std::isfinite(w)) throw NumericError("non-finite weight in layer '" + l.spec.id + "'");
  return epoch_loss;
}

PruneResult reweighted_prune(const ModelGraph& model, const WeightMap& pretrained, const Dataset& train_data,
                             const CompressionTarget& target, BlockConfig cfg, const PruneHyper& hyper) {
  ChainNet net(model);
  net.set_weights(pretrained);
  PruneResult result;
  result.plan = allocate_budgets(model, target, cfg);

  if (keeps_everything(result.plan)) {
    result.weights = pretrained;
    for (const auto& l : net.layers()) {
      const BlockGrid grid(l.spec.filters, l.spec.gemm_cols(), cfg);
      result.masks.emplace(l.spec.id, PruneMask::full(l.spec.id, grid));
    }
    result.punched_norm2.assign(hyper.rounds + 1, 0.0);
    return result;
  }

  ReweightState state;
  state.epsilon = hyper.epsilon;
  state.lambda = hyper.lambda;

  using Snapshot = std::map<std::string, std::vector<double>>;
  std::vector<Snapshot> snapshots;
  const auto snapshot = [&] {
    Snapshot s;
    for (const auto& l : net.layers()) s[l.spec.id] = layer_norms(l, cfg);
    snapshots.push_back(std::move(s));
  };
  const auto refresh_penalties = [&](const Snapshot& s) {
    for (const auto& [id, norms] : s) state.alpha[id] = update_penalties(norms, state.epsilon);
  };

  snapshot();
  refresh_penalties(snapshots.back());
  for (std::size_t t = 0; t < hyper.rounds; ++t) {
    const double task = train(net, train_data, options(hyper, hyper.round_epochs, t), Penalty{&state, cfg});
    snapshot();
    double reg = 0.0;
    for (const auto& l : net.layers()) {
      const auto& alpha = state.alpha.at(l.spec.id);
      const auto& norms = snapshots.back().at(l.spec.id);
      for (std::size_t g = 0; g < norms.size(); ++g) reg += alpha[g] * norms[g];
    }
    result.rounds.push_back({t, state.lambda, task, task + state.lambda * reg});
    refresh_penalties(snapshots.back());
    ++state.round;
    state.lambda *= hyper.lambda_growth;
  }

  std::map<std::string, ElementMask> element_masks;
  for (const auto& l : net.layers()) {
    const auto& budget = result.plan.at(l.spec.id);
    GroupNorms norms{BlockGrid(l.spec.filters, l.spec.gemm_cols(), cfg), snapshots.back().at(l.spec.id)};
    PruneMask mask = project_mask(norms, l.spec.id, budget.kept_columns);
    element_masks.emplace(l.spec.id, mask.to_elements());
    result.masks.emplace(l.spec.id, std::move(mask));
  }

  for (const auto& s : snapshots) {
    double punched = 0.0;
    for (const auto& [id, norms] : s) {
      const PruneMask& mask = result.masks.at(id);
      const std::size_t cols = mask.grid().cols();
      const BlockConfig bc = mask.grid().config();
      for (std::size_t g = 0; g < norms.size(); ++g) {
        const std::size_t band = g / cols, col = g % cols;
        if (!mask.is_kept(band * bc.gm, col)) punched += norms[g];
      }
    }
    result.punched_norm2.push_back(punched);
  }

  train(net, train_data, options(hyper, hyper.finetune_epochs, hyper.rounds), Penalty{}, &element_masks);
  result.weights = net.weights();
  return result;
}

BaselineResult baseline_prune_finetune(const ModelGraph& model, const WeightMap& pretrained,
                                       const Dataset& train_data, BaselineScheme scheme,
                                       const CompressionTarget& target, BlockConfig cfg, const PruneHyper& hyper) {
  ChainNet net(model);
  net.set_weights(pretrained);
  const BudgetPlan plan = allocate_budgets(model, target, cfg);

  BaselineResult result;
  for (const auto& l : net.layers()) {
    const auto& budget = plan.at(l.spec.id);
    const WeightTensor& w = pretrained.at(l.spec.id);
    ElementMask mask;
    if (scheme == BaselineScheme::kUnstructured) {
      const auto kept = static_cast<std::size_t>(std::llround(budget.kept_weights));
      mask = unstructured_mask(w, std::max<std::size_t>(kept, 1));
    } else {
      const auto rows = static_cast<std::size_t>(std::llround(budget.kept_weights / static_cast<double>(w.cols())));
      mask = filter_mask(w, std::max<std::size_t>(rows, 1));
    }
    result.masks.emplace(l.spec.id, std::move(mask));
  }
  const std::size_t epochs = hyper.rounds * hyper.round_epochs + hyper.finetune_epochs;
  train(net, train_data, options(hyper, epochs, 7777), Penalty{}, &result.masks);
  result.weights = net.weights();
  return result;
}

}  // namespace bpunch
