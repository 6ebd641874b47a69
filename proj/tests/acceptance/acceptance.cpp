// Acceptance checks. `acceptance <n>` runs one criterion, no argument runs
// all of them. Each prints a single PASS/FAIL line; details go before it.

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "bpunch/accounting.hpp"
#include "bpunch/budget.hpp"
#include "bpunch/compression_report.hpp"
#include "bpunch/kernels.hpp"
#include "bpunch/model_io.hpp"
#include "bpunch/packed.hpp"
#include "bpunch/projection.hpp"
#include "bpunch/reproduce.hpp"
#include "bpunch/scheduler.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "sweep.hpp"
#include "test_support.hpp"

using namespace bpunch;

namespace {

struct Outcome {
  bool pass = false;
  std::string summary;
  bool report_only = false;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Outcome compression_accounting_rates() {
  const auto t0 = Clock::now();
  const AccountingTable t = compression_accounting(load_model(testing::fixture("yolov4.model")));
  const double secs = seconds_since(t0);
  bool ok = secs < 10.0;
  std::string worst;
  for (const auto& r : t.rows) {
    const double diff = std::abs(r.rate - r.published.rate);
    const bool row_ok = diff <= 0.01;
    ok = ok && row_ok;
    fmt::print("  {:.2f}M kept: {:.4f}x, published {:.2f}x, |diff| {:.4f} {}\n", r.kept_weights / 1e6, r.rate,
               r.published.rate, diff, row_ok ? "ok" : "outside 0.01");
    if (!row_ok) worst += fmt::format(" {:.2f}M->{:.3f}x (published {:.2f}x)", r.kept_weights / 1e6, r.rate,
                                      r.published.rate);
  }
  return {ok, fmt::format("{} parameters, {:.2f}s{}", t.parameters, secs,
                          worst.empty() ? "" : ";" + worst)};
}

Outcome ceiling_formula() {
  const auto rows = ceiling_table(load_model(testing::fixture("yolov4.model")));
  bool ok = true;
  for (const auto& r : rows) {
    fmt::print("  {}: fraction {:.4f} -> {:.4f}x\n", r.source, r.prunable_fraction, r.ceiling);
    ok = ok && std::abs(r.ceiling - 5.99) <= 0.01;
  }
  return {ok, fmt::format("0.8331 -> {:.4f}x", rows[1].ceiling)};
}

Outcome flops_accounting() {
  const ModelGraph m = load_model(testing::fixture("yolov4.model"));
  const double flops = count_flops(m).total;
  const double frac = count_weights(m).fraction_3x3() * 100.0;
  const double rel = (flops - 35.8e9) / 35.8e9;
  const bool ok = std::abs(rel) <= 0.02 && std::abs(frac - 83.31) <= 0.1;
  return {ok, fmt::format("{:.3f}G ({:+.2f}% from 35.8G), 3x3 fraction {:.4f}%", flops / 1e9, rel * 100, frac)};
}

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(404);
  const std::size_t gms[] = {1, 2, 4, 8, 16}, gns[] = {1, 2, 4, 8};
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const BlockConfig cfg{gms[rng() % 5], gns[rng() % 4]};
    const double sparsity = std::uniform_real_distribution<double>(0.0, 0.95)(rng);
    const TuningConfig tuning{1 + rng() % 8, 1 + rng() % 64, 1 + rng() % 4};
    if (i % 2 == 0) {
      const std::size_t m = 1 + rng() % 128, c = 1 + rng() % 512, b = 1 + rng() % 64;
      const WeightTensor w = testing::random_tensor(rng, "w", {m, c, 1, 1});
      const PruneMask mask = testing::random_mask(rng, "w", BlockGrid(m, c, cfg), sparsity);
      WeightTensor masked = w;
      mask.apply(masked);
      const Matrix x = testing::random_matrix(rng, c, b);
      const Matrix y = sparse_gemm(reorder_blocks(encode(w, mask)), x, tuning);
      worst = std::max(worst, oracle::rel_error(testing::to_double(y.data),
                                                oracle::dense_gemm(testing::to_double(masked.values),
                                                                   testing::to_double(x.data), m, c, b)));
    } else {
      const std::size_t m = 1 + rng() % 48, n = 1 + rng() % 16, k = 1 + 2 * (rng() % 2);
      const std::size_t h = k + rng() % 14, wd = k + rng() % 14, stride = 1 + rng() % 2, pad = rng() % 2;
      const WeightTensor w = testing::random_tensor(rng, "w", {m, n, k, k});
      const PruneMask mask = testing::random_mask(rng, "w", BlockGrid(m, n * k * k, cfg), sparsity);
      WeightTensor masked = w;
      mask.apply(masked);
      FeatureMap x({n, h, wd});
      for (auto& v : x.data) v = std::uniform_real_distribution<float>(-1, 1)(rng);
      const FeatureMap y = sparse_conv(reorder_blocks(encode(w, mask)), x, stride, pad, tuning);
      const auto ref = oracle::direct_conv(testing::to_double(masked.values), m, n, k, k, testing::to_double(x.data),
                                           h, wd, stride, pad);
      worst = std::max(worst, oracle::rel_error(testing::to_double(y.data), ref));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-5 && secs < 300, fmt::format("200 cases, worst rel error {:.2e}, {:.2f}s", worst, secs)};
}

std::vector<Lane> preferred_lanes(const oracle::Enumerated& e, std::size_t k) {
  std::vector<bool> best;
  std::uint32_t best_bits = 0;
  int best_g = 1 << 30;
  for (std::uint32_t a : e.optimal) {
    std::vector<bool> on_g(k);
    for (std::size_t i = 0; i < k; ++i) on_g[i] = a >> i & 1u;
    const int g = std::popcount(a);
    if (g < best_g || (g == best_g && on_g < best)) {
      best = on_g;
      best_bits = a;
      best_g = g;
    }
  }
  std::vector<Lane> lanes(k);
  for (std::size_t i = 0; i < k; ++i) lanes[i] = (best_bits >> i & 1u) ? Lane::kG : Lane::kC;
  return lanes;
}

Outcome scheduler_exactness() {
  std::mt19937_64 rng(505);
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t k = 1 + rng() % 12;
    // Half integer-valued so that ties are exercised.
    const bool ints = i % 2 == 0;
    std::vector<double> tg(k), tc(k);
    std::vector<BranchCost> costs(k);
    for (std::size_t b = 0; b < k; ++b) {
      tg[b] = ints ? static_cast<double>(rng() % 6) : std::uniform_real_distribution<double>(0, 10)(rng);
      tc[b] = ints ? static_cast<double>(rng() % 6) : std::uniform_real_distribution<double>(0, 10)(rng);
      costs[b] = {tg[b], tc[b]};
    }
    const auto e = oracle::enumerate_assignments(tg, tc);
    const NonConvDecision d = decide_nonconv_branches(costs);
    if (d.makespan != e.makespan || d.lanes != preferred_lanes(e, k)) ++mismatches;

    // Two-branch conv rule against its two candidate placements.
    const double tau = ints ? static_cast<double>(rng() % 4) : std::uniform_real_distribution<double>(0, 3)(rng);
    const std::array<BranchCost, 2> pair{BranchCost{tg[0], tc[0]},
                                         BranchCost{k > 1 ? tg[1] : tg[0], k > 1 ? tc[1] : tc[0]}};
    const std::size_t heavy = pair[1].t_g > pair[0].t_g ? 1 : 0;
    const double par = std::max(pair[heavy].t_g, pair[1 - heavy].t_c + tau);
    const double ser = pair[0].t_g + pair[1].t_g;
    const ConvDecision c = decide_conv_branch(pair, tau);
    if (c.makespan != std::min(par, ser) || c.parallel != (par <= ser)) ++mismatches;
  }
  const ConvDecision ex2 = decide_conv_branch({BranchCost{10, 12}, BranchCost{4, 5}}, 2);
  const std::vector<BranchCost> three{{4, 3}, {4, 3}, {4, 3}};
  const NonConvDecision ex3 = decide_nonconv_branches(three);
  const bool ok = mismatches == 0 && ex2.parallel && ex2.makespan == 10 && ex3.makespan == 6;
  return {ok, fmt::format("1000 profiles, {} mismatches; 2-branch {} makespan {}; 3-branch makespan {}", mismatches,
                          ex2.parallel ? "parallel" : "serial", ex2.makespan, ex3.makespan)};
}

Outcome gradient_checks() {
  double worst = 0.0;
  for (std::uint64_t seed = 1000; seed < 1050; ++seed)
    worst = std::max(worst, testing::check_regularized_gradient(seed).rel_error);
  return {worst < 1e-4, fmt::format("50 nets, worst rel error {:.2e}", worst)};
}

Outcome structural_invariant() {
  const ModelGraph model = load_model(testing::fixture("yolov4.model"));
  std::mt19937_64 rng(707);
  const BlockConfig cfg{8, 4};
  double worst = 0.0;
  bool uniform = true;
  for (int i = 0; i < 20; ++i) {
    CompressionTarget target;
    target.rate = std::uniform_real_distribution<double>(1.5, 20.0)(rng);
    const BudgetPlan plan = allocate_budgets(model, target, cfg);
    MaskSet masks;
    for (const auto& l : plan.layers) {
      const LayerSpec& spec = model.layer(l.layer_id);
      const WeightDims d = dims_of(spec);
      GroupNorms norms{BlockGrid(d.rows(), d.cols(), cfg), {}};
      norms.values.resize(norms.grid.block_rows() * d.cols());
      std::exponential_distribution<double> e(1.0);
      for (auto& v : norms.values) v = e(rng);
      PruneMask m = project_mask(norms, l.layer_id, l.kept_columns);
      uniform = uniform && punched_uniform(m.to_elements(), cfg);
      masks.emplace(l.layer_id, std::move(m));
    }
    const double achieved = compression_report(model, masks).rate;
    const double rel = std::abs(achieved - target.rate) / target.rate;
    worst = std::max(worst, rel);
    fmt::print("  target {:.3f}x achieved {:.3f}x ({:.3f}%)\n", target.rate, achieved, rel * 100);
  }
  return {uniform && worst <= 0.02,
          fmt::format("20 targets, masks {}uniform, worst deviation {:.3f}%", uniform ? "" : "NOT ", worst * 100)};
}

Outcome toy_quality_ordering() {
  SchemeOptions o;
  o.seeds = 5;
  o.rate = 8.0;
  o.overrides = {{"conv1", 1.0}};
  o.measure_latency = false;
  const SchemeComparison cmp = scheme_comparison(load_model(testing::fixture("toy_cnn8.model")), o);
  for (const auto& r : cmp.rows) {
    std::string accs;
    for (double a : r.accuracy) accs += fmt::format(" {:.3f}", a);
    fmt::print("  {:<14} mean {:.4f} rate {:.2f}x |{}\n", r.scheme, r.mean_accuracy, r.rate, accs);
  }
  const double u = cmp.row("unstructured").mean_accuracy, b = cmp.row("block-punched").mean_accuracy,
               f = cmp.row("filter").mean_accuracy;
  return {u >= b && b >= f, fmt::format("unstructured {:.4f} >= block-punched {:.4f} >= filter {:.4f}", u, b, f)};
}

Outcome packed_format() {
  std::mt19937_64 rng(909);
  const std::size_t gms[] = {2, 4, 8, 16}, gns[] = {4, 8};
  std::size_t exact = 0, smaller = 0;
  double min_margin = 1.0;
  for (int i = 0; i < 100; ++i) {
    const BlockConfig cfg{gms[rng() % 4], gns[rng() % 2]};
    const WeightDims d{1 + rng() % 128, 1 + rng() % 64, 1 + 2 * (rng() % 2), 1 + 2 * (rng() % 2)};
    const double sparsity = std::uniform_real_distribution<double>(0.5, 0.95)(rng);
    const WeightTensor w = testing::random_tensor(rng, "layer" + std::to_string(i), d);
    const PruneMask mask = testing::random_mask(rng, w.layer_id, BlockGrid(d.rows(), d.cols(), cfg), sparsity);
    const PackedSparseLayer p = reorder_blocks(encode(w, mask));
    const auto bytes = serialize_packed(p);
    const PackedSparseLayer back = parse_packed(bytes);
    exact += back == p && serialize_packed(back) == bytes;
    const std::size_t csr = csr_index_bytes(d.rows(), mask.kept_weights());
    smaller += p.index_bytes() < csr;
    min_margin = std::min(min_margin, 1.0 - static_cast<double>(p.index_bytes()) / static_cast<double>(csr));
  }
  return {exact == 100 && smaller == 100,
          fmt::format("{}/100 byte-exact, {}/100 smaller than CSR (smallest saving {:.1f}%)", exact, smaller,
                      min_margin * 100)};
}

Outcome sparse_gemm_scaling() {
  const auto points = bench::kept_fraction_sweep();
  std::vector<double> f, ms;
  for (const auto& p : points) {
    fmt::print("  kept {:.1f}: {:.3f} ms\n", p.kept_fraction, p.ms);
    f.push_back(p.kept_fraction);
    ms.push_back(p.ms);
  }
  // Time against kept fraction; falling time as the fraction drops is a
  // positive correlation here, i.e. rank correlation against sparsity < -0.9.
  std::vector<double> sparsity;
  for (double v : f) sparsity.push_back(1.0 - v);
  const double rho = oracle::spearman(sparsity, ms);
  return {rho < -0.9, fmt::format("Spearman rho(sparsity, time) {:.3f} (environment-dependent)", rho), true};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> list{
      {"compression accounting", compression_accounting_rates},
      {"ceiling formula", ceiling_formula},
      {"flops accounting", flops_accounting},
      {"oracle equivalence", oracle_equivalence},
      {"scheduler exactness", scheduler_exactness},
      {"gradient checks", gradient_checks},
      {"structural invariant", structural_invariant},
      {"toy quality ordering", toy_quality_ordering},
      {"packed format", packed_format},
      {"sparse gemm scaling", sparse_gemm_scaling},
  };
  return list;
}

int run(std::size_t n) {
  const auto& [name, fn] = criteria().at(n - 1);
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  fmt::print("criterion {:>2} {:<24} {}{}: {}\n", n, name, o.pass ? "PASS" : "FAIL",
             o.report_only ? " (report-only)" : "", o.summary);
  std::fflush(stdout);
  return o.pass || o.report_only ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) {
    const long n = std::strtol(argv[1], nullptr, 10);
    if (n < 1 || n > static_cast<long>(criteria().size())) {
      std::fprintf(stderr, "usage: acceptance [1-%zu]\n", criteria().size());
      return 2;
    }
    return run(static_cast<std::size_t>(n));
  }
  int failures = 0;
  for (std::size_t n = 1; n <= criteria().size(); ++n) failures += run(n);
  return failures == 0 ? 0 : 1;
}
