#include "bpunch/reproduce.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "bpunch/accounting.hpp"
#include "bpunch/budget.hpp"
#include "bpunch/compression_report.hpp"
#include "bpunch/error.hpp"
#include "bpunch/executor.hpp"

namespace bpunch {

const std::vector<PublishedAccountingRow>& published_accounting_rows() {
  static const std::vector<PublishedAccountingRow> rows{
      {16.11e6, 3.99, 10.48e9}, {8.04e6, 8.09, 6.33e9}, {6.37e6, 10.1, 5.48e9}, {4.59e6, 14.02, 3.95e9}};
  return rows;
}

AccountingTable compression_accounting(const ModelGraph& model, double rho) {
  const WeightCount wc = count_weights(model);
  const FlopCount fc = count_flops(model);
  AccountingTable t;
  t.weights = wc.total_weights;
  t.parameters = wc.total_parameters;
  t.flops = fc.total;
  t.fraction_3x3 = wc.fraction_3x3();
  t.rho = rho;
  for (const auto& p : published_accounting_rows()) {
    AccountingRow row;
    row.kept_weights = p.kept_weights;
    row.rate = static_cast<double>(wc.total_parameters) / p.kept_weights;
    row.published = p;
    CompressionTarget target;
    target.rate = static_cast<double>(wc.total_weights) / p.kept_weights;
    target.rho = rho;
    const BudgetPlan plan = allocate_budgets(model, target, {8, 4});
    std::map<std::string, std::size_t> kept;
    for (const auto& l : plan.layers) kept[l.layer_id] = static_cast<std::size_t>(std::llround(l.kept_weights));
    row.flops = compression_report(model, kept).flops_after;
    t.rows.push_back(row);
  }
  return t;
}

std::vector<CeilingRow> ceiling_table(const ModelGraph& model) {
  const double f = count_weights(model).fraction_3x3();
  return {{"model", f, pattern_ceiling(f)}, {"published", 0.8331, pattern_ceiling(0.8331)}};
}

const SchemeRow& SchemeComparison::row(const std::string& scheme) const {
  for (const auto& r : rows)
    if (r.scheme == scheme) return r;
  throw Error("no scheme row '" + scheme + "'");
}

namespace {

double median_run_ms(const ModelGraph& model, const PackedModel& packed, const FeatureMap& input) {
  std::vector<double> ms;
  for (int i = 0; i < 21; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run_model(model, packed, input);
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  std::nth_element(ms.begin(), ms.begin() + 10, ms.end());
  return ms[10];
}

}  // namespace

SchemeComparison scheme_comparison(const ModelGraph& model, const SchemeOptions& options) {
  SchemeComparison cmp;
  cmp.options = options;
  cmp.options.data.shape = model.input_shape();
  cmp.options.data.classes = ChainNet(model).classes();
  for (const char* name : {"dense", "unstructured", "block-punched", "filter"}) cmp.rows.emplace_back().scheme = name;
  cmp.rows[1].published_map = 53.9;
  cmp.rows[2].published_map = 51.4;
  cmp.rows[3].published_map = 38.6;
  double dense_ms = 0.0, block_ms = 0.0;

  CompressionTarget target;
  target.rate = options.rate;
  target.rho = options.rho;
  target.overrides = options.overrides;

  for (std::size_t k = 0; k < options.seeds; ++k) {
    const std::uint64_t seed = options.first_seed + k;
    SyntheticSpec spec = cmp.options.data;
    const Dataset train_data = gen_synthetic(seed, spec);
    spec.count = options.test_count;
    const Dataset test_data = gen_synthetic(seed + 1000003, spec);

    ChainNet net(model);
    net.init(seed);
    TrainOptions topts;
    topts.epochs = options.dense_epochs;
    topts.learning_rate = options.hyper.learning_rate;
    topts.momentum = options.hyper.momentum;
    topts.batch_size = options.hyper.batch_size;
    topts.seed = seed;
    train(net, train_data, topts);
    const WeightMap pretrained = net.weights();

    PruneHyper hyper = options.hyper;
    hyper.seed = seed;
    const auto accuracy = [&](const WeightMap& w) {
      ChainNet n(model);
      n.set_weights(w);
      return n.accuracy(test_data);
    };
    const auto record = [&](SchemeRow& row, double acc, const CompressionReport& rep) {
      row.accuracy.push_back(acc);
      row.rate += rep.rate / static_cast<double>(options.seeds);
      row.flops += rep.flops_after / static_cast<double>(options.seeds);
    };

    record(cmp.rows[0], net.accuracy(test_data), compression_report(model, MaskSet{}));
    const BaselineResult un = baseline_prune_finetune(model, pretrained, train_data, BaselineScheme::kUnstructured,
                                                      target, options.block, hyper);
    record(cmp.rows[1], accuracy(un.weights), compression_report(model, un.masks));
    const PruneResult bp = reweighted_prune(model, pretrained, train_data, target, options.block, hyper);
    record(cmp.rows[2], accuracy(bp.weights), compression_report(model, bp.masks));
    cmp.punched_norm2.push_back(bp.punched_norm2);
    const BaselineResult fi =
        baseline_prune_finetune(model, pretrained, train_data, BaselineScheme::kFilter, target, options.block, hyper);
    record(cmp.rows[3], accuracy(fi.weights), compression_report(model, fi.masks));

    if (options.measure_latency) {
      FeatureMap input(model.input_shape());
      const auto img = test_data.image(0);
      input.data.assign(img.begin(), img.end());
      dense_ms += median_run_ms(model, pack_model(model, pretrained, {}, options.block), input);
      block_ms += median_run_ms(model, pack_model(model, bp.weights, bp.masks, options.block), input);
    }
  }
  for (auto& r : cmp.rows) {
    double sum = 0.0;
    for (double a : r.accuracy) sum += a;
    r.mean_accuracy = r.accuracy.empty() ? 0.0 : sum / static_cast<double>(r.accuracy.size());
  }
  if (options.measure_latency && options.seeds > 0) {
    cmp.rows[0].latency_ms = dense_ms / static_cast<double>(options.seeds);
    cmp.rows[2].latency_ms = block_ms / static_cast<double>(options.seeds);
  }
  return cmp;
}

using nlohmann::json;

std::string to_json(const AccountingTable& t) {
  json j;
  j["table"] = "compression-accounting";
  j["weights"] = t.weights;
  j["parameters"] = t.parameters;
  j["flops"] = t.flops;
  j["fraction_3x3"] = t.fraction_3x3;
  j["rho"] = t.rho;
  j["rows"] = json::array();
  for (const auto& r : t.rows)
    j["rows"].push_back({{"kept_weights", r.kept_weights},
                         {"rate", r.rate},
                         {"flops", r.flops},
                         {"published_rate", r.published.rate},
                         {"published_flops", r.published.flops}});
  return j.dump(2);
}

std::string to_json(const std::vector<CeilingRow>& rows) {
  json j;
  j["table"] = "ceiling";
  j["rows"] = json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"source", r.source}, {"prunable_fraction", r.prunable_fraction}, {"ceiling", r.ceiling}});
  return j.dump(2);
}

std::string to_json(const SchemeComparison& cmp) {
  const auto& o = cmp.options;
  json j;
  j["table"] = "scheme-comparison";
  j["options"] = {{"seeds", o.seeds},
                  {"first_seed", o.first_seed},
                  {"rate", o.rate},
                  {"rho", o.rho},
                  {"overrides", o.overrides},
                  {"block", to_string(o.block)},
                  {"classes", o.data.classes},
                  {"train_count", o.data.count},
                  {"test_count", o.test_count},
                  {"noise", o.data.noise},
                  {"dense_epochs", o.dense_epochs},
                  {"hyper", json::parse(format_hyper(o.hyper))}};
  j["rows"] = json::array();
  for (const auto& r : cmp.rows) {
    json row{{"scheme", r.scheme},
             {"accuracy", r.accuracy},
             {"mean_accuracy", r.mean_accuracy},
             {"rate", r.rate},
             {"flops", r.flops}};
    row["latency_ms"] = r.latency_ms ? json(*r.latency_ms) : json(nullptr);
    row["published_map"] = r.published_map ? json(*r.published_map) : json(nullptr);
    j["rows"].push_back(row);
  }
  j["latency_note"] = "environment-dependent";
  j["punched_norm2"] = cmp.punched_norm2;
  return j.dump(2);
}

std::string format_table(const AccountingTable& t) {
  std::string s = fmt::format("dense: {} weights, {} parameters, {:.3f} GFLOPs, 3x3 weight fraction {:.4f}\n",
                              t.weights, t.parameters, t.flops / 1e9, t.fraction_3x3);
  s += fmt::format("{:>10} {:>8} {:>10} {:>12} {:>12}\n", "kept", "rate", "GFLOPs", "pub. rate", "pub. GFLOPs");
  for (const auto& r : t.rows)
    s += fmt::format("{:>9.2f}M {:>7.3f}x {:>10.2f} {:>11.2f}x {:>12.2f}\n", r.kept_weights / 1e6, r.rate,
                     r.flops / 1e9, r.published.rate, r.published.flops / 1e9);
  return s;
}

std::string format_table(const std::vector<CeilingRow>& rows) {
  std::string s = fmt::format("{:<10} {:>10} {:>8}\n", "source", "fraction", "ceiling");
  for (const auto& r : rows) s += fmt::format("{:<10} {:>10.4f} {:>7.2f}x\n", r.source, r.prunable_fraction, r.ceiling);
  return s;
}

std::string format_table(const SchemeComparison& cmp) {
  std::string s = fmt::format("{:<14} {:>9} {:>8} {:>10} {:>11} {:>9}\n", "scheme", "accuracy", "rate", "MFLOPs",
                              "latency ms", "pub. mAP");
  for (const auto& r : cmp.rows)
    s += fmt::format("{:<14} {:>9.4f} {:>7.2f}x {:>10.3f} {:>11} {:>9}\n", r.scheme, r.mean_accuracy, r.rate,
                     r.flops / 1e6, r.latency_ms ? fmt::format("{:.3f}", *r.latency_ms) : "-",
                     r.published_map ? fmt::format("{:.1f}", *r.published_map) : "-");
  s += "latency is environment-dependent\n";
  return s;
}

}  // namespace bpunch
