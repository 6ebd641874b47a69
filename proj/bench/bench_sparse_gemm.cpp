// Serial reference against the OpenMP kernel, then the kept-fraction sweep.

#include <cstdio>
#include <random>
#include <vector>

#include <fmt/format.h>

#include "bpunch/autotune.hpp"
#include "oracles.hpp"
#include "sweep.hpp"

int main() {
  using namespace bpunch;
  const std::size_t n = 1024, batch = 64;
  std::mt19937_64 rng(3);
  Matrix x(n, batch);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : x.data) v = u(rng);

  fmt::print("{} workers available\n\n", hardware_workers());
  fmt::print("{:>6} {:>12} {:>12} {:>12} {:>8}\n", "kept", "serial ms", "openmp ms", "tuned ms", "speedup");
  for (double f : {1.0, 0.5, 0.25, 0.125}) {
    const auto layer = bench::layer_with_fraction(n, f, {8, 4}, 11);
    Autotuner tuner;
    const TuningConfig tuned = tuner.tune(layer, x, Lane::kG, std::chrono::milliseconds(300));
    const double serial = bench::median_ms([&] { sparse_gemm_reference(layer, x); }, 7);
    const double omp = bench::median_ms([&] { sparse_gemm(layer, x, default_tuning(Lane::kG)); }, 7);
    const double best = bench::median_ms([&] { sparse_gemm(layer, x, tuned); }, 7);
    fmt::print("{:>6.3f} {:>12.3f} {:>12.3f} {:>12.3f} {:>7.2f}x   tuned rt={} ct={} w={}\n", f, serial, omp, best,
               serial / std::min(omp, best), tuned.row_tile, tuned.col_tile, tuned.workers);
  }

  fmt::print("\n{:>6} {:>10}\n", "kept", "ms");
  std::vector<double> sparsity, ms;
  for (const auto& p : bench::kept_fraction_sweep(n, batch)) {
    fmt::print("{:>6.1f} {:>10.3f}\n", p.kept_fraction, p.ms);
    sparsity.push_back(1.0 - p.kept_fraction);
    ms.push_back(p.ms);
  }
  fmt::print("Spearman rho(sparsity, time) {:.3f}\n", oracle::spearman(sparsity, ms));
}
