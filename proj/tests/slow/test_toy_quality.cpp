#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fmt/format.h>

#include "bpunch/model_io.hpp"
#include "bpunch/reweighted_prune.hpp"
#include "test_support.hpp"

using namespace bpunch;

TEST_CASE("two-class toy task at 8x over five seeds") {
  const ModelGraph model = load_model(testing::fixture("toy_cnn.model"));
  CompressionTarget target;
  target.rate = 8.0;
  target.overrides = {{"conv1", 1.0}};
  const std::size_t seeds = 5;
  double dense_sum = 0.0, pruned_sum = 0.0;
  std::vector<double> punched_mean;

  for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
    SyntheticSpec spec;
    const Dataset train_data = gen_synthetic(seed, spec);
    spec.count = 1000;
    const Dataset test_data = gen_synthetic(seed + 1000003, spec);

    ChainNet net(model);
    net.init(seed);
    TrainOptions t;
    t.seed = seed;
    train(net, train_data, t);
    const double dense = net.accuracy(test_data);

    PruneHyper h;
    h.seed = seed;
    const PruneResult r = reweighted_prune(model, net.weights(), train_data, target, {8, 4}, h);
    ChainNet pruned(model);
    pruned.set_weights(r.weights);
    const double acc = pruned.accuracy(test_data);
    MESSAGE(fmt::format("seed {}: dense {:.4f} pruned {:.4f}", seed, dense, acc));
    dense_sum += dense;
    pruned_sum += acc;

    punched_mean.resize(r.punched_norm2.size(), 0.0);
    for (std::size_t k = 0; k < r.punched_norm2.size(); ++k) punched_mean[k] += r.punched_norm2[k] / seeds;
    CHECK(r.punched_norm2.back() < r.punched_norm2.front());
  }
  const double dense = dense_sum / seeds, pruned = pruned_sum / seeds;
  CHECK(dense >= 0.95);
  CHECK((dense - pruned) * 100.0 <= 3.0);
  REQUIRE(punched_mean.size() == PruneHyper{}.rounds + 1);
  for (std::size_t k = 1; k < punched_mean.size(); ++k) CHECK(punched_mean[k] <= punched_mean[k - 1]);
}
