#pragma once

// Gradient check of the regularised training objective of a small random
// chain net against central finite differences.

#include <cmath>
#include <random>
#include <string>

#include <fmt/format.h>

#include "bpunch/chain_net.hpp"
#include "bpunch/dataset.hpp"
#include "bpunch/model_io.hpp"
#include "bpunch/reweight.hpp"
#include "oracles.hpp"

namespace testing {

struct GradCheck {
  std::size_t parameters = 0;
  double rel_error = 0.0;
};

/// Random chain: 1-2 convs (1x1 or 3x3, optional stride 2) and an fc head.
inline bpunch::ModelGraph random_small_net(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> ch(1, 3), side(4, 6), filters(2, 5), convs(1, 2), coin(0, 1);
  const std::size_t c0 = ch(rng), s = side(rng);
  std::string text = fmt::format("bpmodel 1\ninput {} {} {}\n", c0, s, s);
  std::size_t c = c0, h = s;
  std::string prev = "input";
  const std::size_t n = convs(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t m = filters(rng), k = coin(rng) ? 3 : 1, stride = (i == 0 && coin(rng)) ? 2 : 1;
    const std::size_t pad = k / 2;
    const std::string id = fmt::format("c{}", i);
    text += fmt::format("layer {} conv filters={} channels={} kernel={}x{} stride={} pad={} affine=bias inputs={}\n",
                        id, m, c, k, k, stride, pad, prev);
    h = (h + 2 * pad - k) / stride + 1;
    c = m;
    prev = id;
  }
  text += fmt::format("layer fc fc filters=3 channels={} affine=bias inputs={}\n", c * h * h, prev);
  return bpunch::parse_model(text);
}

inline GradCheck check_regularized_gradient(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const bpunch::ModelGraph model = random_small_net(rng);
  bpunch::ChainNet net(model);
  net.init(seed);
  // Random biases so ReLU inputs are not clustered at a shared offset.
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& l : net.layers())
    for (auto& b : l.bias) b = u(rng);

  bpunch::SyntheticSpec spec;
  spec.count = 6;
  spec.classes = 3;
  spec.shape = net.input_shape();
  const bpunch::Dataset data = bpunch::gen_synthetic(seed, spec);
  const std::vector<std::size_t> samples{0, 1, 2, 3, 4, 5};

  const bpunch::BlockConfig cfg{2, 2};
  const double lambda = std::uniform_real_distribution<double>(1e-3, 1e-1)(rng);
  std::vector<std::vector<double>> alpha;
  for (const auto& l : net.layers()) {
    const auto norms = bpunch::group_norms<double>(l.weights, l.spec.filters, l.spec.gemm_cols(), cfg);
    alpha.push_back(bpunch::update_penalties(norms, 1e-3 + std::abs(u(rng) * u(rng))));
    for (auto& a : alpha.back()) a = std::min(a, 50.0);
  }

  // Flatten weights then biases, layer by layer.
  const auto flatten = [](const bpunch::ChainNet& n) {
    std::vector<double> x;
    for (const auto& l : n.layers()) x.insert(x.end(), l.weights.begin(), l.weights.end());
    for (const auto& l : n.layers()) x.insert(x.end(), l.bias.begin(), l.bias.end());
    return x;
  };
  const auto assign = [](bpunch::ChainNet& n, const std::vector<double>& x) {
    std::size_t at = 0;
    for (auto& l : n.layers())
      for (auto& w : l.weights) w = x[at++];
    for (auto& l : n.layers())
      for (auto& b : l.bias) b = x[at++];
  };
  const auto objective = [&](const std::vector<double>& x) {
    bpunch::ChainNet n = net;
    assign(n, x);
    double obj = n.loss(data, samples);
    for (std::size_t i = 0; i < n.layers().size(); ++i) {
      const auto& l = n.layers()[i];
      obj += lambda * bpunch::block_regularizer<double>(l.weights, l.spec.filters, l.spec.gemm_cols(), alpha[i], cfg);
    }
    return obj;
  };

  bpunch::ChainNet::Gradients g;
  net.loss(data, samples, &g);
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    bpunch::add_block_regularizer_gradient<double>(l.weights, l.spec.filters, l.spec.gemm_cols(), alpha[i], cfg,
                                                   lambda, g.weights[i]);
  }
  std::vector<double> analytic;
  for (const auto& w : g.weights) analytic.insert(analytic.end(), w.begin(), w.end());
  for (const auto& b : g.bias) analytic.insert(analytic.end(), b.begin(), b.end());

  const std::vector<double> x = flatten(net);
  const std::vector<double> fd = oracle::central_differences(objective, x, 1e-6);
  double num = 0, den_a = 0, den_f = 0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    num += (analytic[i] - fd[i]) * (analytic[i] - fd[i]);
    den_a += analytic[i] * analytic[i];
    den_f += fd[i] * fd[i];
  }
  return {x.size(), std::sqrt(num) / std::max({std::sqrt(den_a), std::sqrt(den_f), 1e-300})};
}

}  // namespace testing
