#include <doctest.h>

#include "bpunch/autodiff.hpp"
#include "bpunch/error.hpp"
#include "bpunch/reweighted_prune.hpp"
#include "gradcheck.hpp"
#include "test_support.hpp"

using namespace bpunch;

TEST_CASE("autodiff conv2d matches a direct convolution") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  ad::Tensor x({1, 2, 5, 6}), w({3, 2, 3, 3}), b({3});
  for (auto& v : x.data) v = u(rng);
  for (auto& v : w.data) v = u(rng);
  ad::Tape tape;
  const auto y = tape.conv2d(tape.leaf(x, false), tape.leaf(w), tape.leaf(b), 2, 1);
  std::size_t ho = 0, wo = 0;
  const auto ref = oracle::direct_conv(w.data, 3, 2, 3, 3, x.data, 5, 6, 2, 1, &ho, &wo);
  CHECK(tape.value(y).shape == std::vector<std::size_t>{1, 3, ho, wo});
  CHECK(oracle::rel_error(tape.value(y).data, ref) < 1e-14);
}

TEST_CASE("regularised objective gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = testing::check_regularized_gradient(seed);
    CAPTURE(seed);
    CHECK(r.parameters <= 1000);
    CHECK(r.rel_error < 1e-4);
  }
}

TEST_CASE("synthetic data") {
  SyntheticSpec spec;
  spec.count = 101;
  const Dataset a = gen_synthetic(9, spec);
  CHECK(serialize_dataset(a) == serialize_dataset(gen_synthetic(9, spec)));
  CHECK(serialize_dataset(a) != serialize_dataset(gen_synthetic(10, spec)));
  const auto ones = std::count(a.labels.begin(), a.labels.end(), 1);
  CHECK(std::abs(2 * ones - 101) <= 1);
  CHECK(parse_dataset(serialize_dataset(a)).images == a.images);

  spec.classes = 1;
  CHECK_THROWS(gen_synthetic(1, spec));
  auto bytes = serialize_dataset(a);
  bytes.pop_back();
  CHECK_THROWS_AS(parse_dataset(bytes), ParseError);
}

TEST_CASE("hyperparameter file") {
  const PruneHyper h = parse_hyper(R"({"lambda": 0.01, "rounds": 2})");
  CHECK(h.lambda == 0.01);
  CHECK(h.rounds == 2);
  CHECK(h.epsilon == 1e-3);
  CHECK(parse_hyper(format_hyper(h)).lambda == 0.01);
  CHECK_THROWS_AS(parse_hyper(R"({"lamda": 1})"), ParseError);
  CHECK_THROWS_AS(parse_hyper(R"({"rounds": "x"})"), ParseError);
  CHECK_THROWS_AS(parse_hyper("[1]"), ParseError);
}

TEST_CASE("dense baseline learns the two-class task") {
  const ModelGraph toy = load_model(testing::fixture("toy_cnn.model"));
  SyntheticSpec spec;
  const Dataset train_set = gen_synthetic(100, spec);
  spec.count = 1000;
  const Dataset test_set = gen_synthetic(900, spec);
  ChainNet net(toy);
  net.init(0);
  TrainOptions o;
  train(net, train_set, o);
  CHECK(net.accuracy(test_set) >= 0.95);
}

TEST_CASE("non-finite training is reported") {
  const ModelGraph toy = load_model(testing::fixture("toy_cnn.model"));
  SyntheticSpec spec;
  spec.count = 32;
  ChainNet net(toy);
  net.init(0);
  TrainOptions o;
  o.learning_rate = 1e30;
  o.epochs = 3;
  CHECK_THROWS_AS(train(net, gen_synthetic(1, spec), o), NumericError);
}
