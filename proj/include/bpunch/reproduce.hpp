#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bpunch/blocks.hpp"
#include "bpunch/graph.hpp"
#include "bpunch/reweighted_prune.hpp"

namespace bpunch {

/// Kept-weight counts and rates listed in the published accounting table.
struct PublishedAccountingRow {
  double kept_weights;
  double rate;
  double flops;
};
const std::vector<PublishedAccountingRow>& published_accounting_rows();

struct AccountingRow {
  double kept_weights = 0.0;
  double rate = 0.0;   // parameters of the dense model / kept_weights
  double flops = 0.0;  // after allocating the same kept count across layers
  PublishedAccountingRow published{};
};

struct AccountingTable {
  std::size_t weights = 0;
  std::size_t parameters = 0;
  double flops = 0.0;
  double fraction_3x3 = 0.0;
  double rho = 1.15;
  std::vector<AccountingRow> rows;
};

AccountingTable compression_accounting(const ModelGraph& model, double rho = 1.15);

struct CeilingRow {
  std::string source;  // "model" or "published"
  double prunable_fraction = 0.0;
  double ceiling = 0.0;
};

/// Ceiling for the model's own 3x3 fraction and for the published fraction.
std::vector<CeilingRow> ceiling_table(const ModelGraph& model);

struct SchemeOptions {
  std::size_t seeds = 5;
  std::uint64_t first_seed = 1;
  double rate = 8.0;
  double rho = 1.15;
  std::map<std::string, double> overrides;
  BlockConfig block{8, 4};
  SyntheticSpec data;  // shape and class count come from the model
  std::size_t test_count = 1000;
  std::size_t dense_epochs = 10;
  PruneHyper hyper;
  /// Time the dense and block-punched models with the sparse runtime.
  bool measure_latency = true;
};

struct SchemeRow {
  std::string scheme;
  std::vector<double> accuracy;  // one per seed
  double mean_accuracy = 0.0;
  double rate = 0.0;   // achieved, mean over seeds
  double flops = 0.0;  // mean over seeds
  std::optional<double> latency_ms;  // environment-dependent
  std::optional<double> published_map;
};

struct SchemeComparison {
  SchemeOptions options;
  std::vector<SchemeRow> rows;  // dense, unstructured, block-punched, filter
  /// Per seed, the punched group norm after each reweighting round.
  std::vector<std::vector<double>> punched_norm2;

  const SchemeRow& row(const std::string& scheme) const;
};

/// Trains the dense chain model per seed, then prunes it to the same target
/// with the reweighted block-punched method and the two one-shot baselines.
SchemeComparison scheme_comparison(const ModelGraph& model, const SchemeOptions& options);

std::string to_json(const AccountingTable& table);
std::string to_json(const std::vector<CeilingRow>& rows);
std::string to_json(const SchemeComparison& cmp);

std::string format_table(const AccountingTable& table);
std::string format_table(const std::vector<CeilingRow>& rows);
std::string format_table(const SchemeComparison& cmp);

}  // namespace bpunch
