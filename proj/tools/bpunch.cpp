// Command-line pipeline: prune, pack, schedule, run and report.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "bpunch/accounting.hpp"
#include "bpunch/budget.hpp"
#include "bpunch/compression_report.hpp"
#include "bpunch/error.hpp"
#include "bpunch/executor.hpp"
#include "bpunch/model_io.hpp"
#include "bpunch/packed.hpp"
#include "bpunch/reproduce.hpp"
#include "bpunch/reweighted_prune.hpp"
#include "bpunch/scheduler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bpunch;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInfeasible = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write '" + path.string() + "'");
}

void emit(const std::string& table, const json& report, const std::string& report_path) {
  std::cout << table;
  if (!report_path.empty()) write_text(report_path, report.dump(2) + "\n");
}

fs::path default_fixture(const char* name) { return fs::path(BPUNCH_FIXTURE_DIR) / name; }

std::map<std::string, double> parse_overrides(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    if (item == "none") continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("override '" + item + "' is not <layer>=<rate>");
    try {
      out[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw UsageError("override '" + item + "' has no numeric rate");
    }
  }
  return out;
}

BlockConfig block_of(const std::string& text) {
  try {
    return parse_block_config(text);
  } catch (const ParseError& e) {
    throw UsageError(e.what());
  }
}

json report_json(const CompressionReport& r) {
  return {{"weights_before", r.weights_before}, {"weights_after", r.weights_after},
          {"parameters_before", r.parameters_before}, {"parameters_after", r.parameters_after},
          {"rate", r.rate}, {"flops_before", r.flops_before}, {"flops_after", r.flops_after},
          {"prunable_fraction", r.prunable_fraction}, {"pattern_ceiling", r.pattern_ceiling}};
}

std::string report_table(const CompressionReport& r) {
  return fmt::format(
      "{:<12} {:>14} {:>14}\n{:<12} {:>14} {:>14}\n{:<12} {:>14.4f} {:>14.4f}\nrate {:.3f}x\n", "", "before",
      "after", "weights", r.weights_before, r.weights_after, "GFLOPs", r.flops_before / 1e9, r.flops_after / 1e9,
      r.rate);
}

// gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::uint64_t seed = 1;
  std::size_t count = 1024;
  std::size_t classes = 2;
  double noise = 0.8;
  std::vector<std::size_t> shape{1, 12, 12};
  std::string model, out, report;
};

int cmd_gen_data(const GenDataArgs& a) {
  SyntheticSpec spec;
  spec.count = a.count;
  spec.classes = a.classes;
  spec.noise = a.noise;
  spec.shape = {a.shape[0], a.shape[1], a.shape[2]};
  if (!a.model.empty()) spec.shape = load_model(a.model).input_shape();
  const Dataset d = gen_synthetic(a.seed, spec);
  save_dataset(d, a.out);
  std::vector<std::size_t> per_class(a.classes, 0);
  for (int l : d.labels) ++per_class[static_cast<std::size_t>(l)];
  json r{{"seed", a.seed}, {"count", d.size()}, {"classes", a.classes}, {"noise", a.noise},
         {"shape", {spec.shape.c, spec.shape.h, spec.shape.w}}, {"per_class", per_class}, {"file", a.out}};
  emit(fmt::format("{} samples, {} classes, {}x{}x{}, written to {}\n", d.size(), a.classes, spec.shape.c,
                   spec.shape.h, spec.shape.w, a.out),
       r, a.report);
  return kOk;
}

// prune ------------------------------------------------------------------

struct PruneArgs {
  std::string model, weights, data, hyper, out;
  std::string method = "reweighted";
  double rate = 0.0, rho = 1.15;
  std::string block = "8x4";
  std::uint64_t seed = 1;
  std::size_t train_epochs = 10;
  std::vector<std::string> overrides;
};

int cmd_prune(const PruneArgs& a) {
  const ModelGraph model = load_model(a.model);
  const BlockConfig cfg = block_of(a.block);
  CompressionTarget target;
  target.rate = a.rate;
  target.rho = a.rho;
  target.overrides = parse_overrides(a.overrides);
  PruneHyper hyper = a.hyper.empty() ? PruneHyper{} : load_hyper(a.hyper);
  hyper.seed = a.seed;

  json r{{"model", a.model}, {"method", a.method}, {"target_rate", a.rate}, {"rho", a.rho},
         {"block", to_string(cfg)}, {"seed", a.seed}, {"overrides", target.overrides}};
  const BudgetPlan plan = allocate_budgets(model, target, cfg);

  WeightMap weights;
  MaskSet masks;
  if (a.method == "projection") {
    weights = a.weights.empty() ? random_weights(model, a.seed) : load_weights(a.weights, model);
    for (auto& [id, w] : weights) {
      PruneMask m = project_mask(w, cfg, plan.at(id).kept_columns);
      m.apply(w);
      masks.emplace(id, std::move(m));
    }
  } else if (a.method == "reweighted") {
    Dataset data;
    if (a.data.empty()) {
      SyntheticSpec spec;
      spec.shape = model.input_shape();
      spec.classes = ChainNet(model).classes();
      data = gen_synthetic(a.seed, spec);
    } else {
      data = load_dataset(a.data);
    }
    WeightMap pretrained;
    if (a.weights.empty()) {
      ChainNet net(model);
      net.init(a.seed);
      TrainOptions t;
      t.epochs = a.train_epochs;
      t.learning_rate = hyper.learning_rate;
      t.momentum = hyper.momentum;
      t.batch_size = hyper.batch_size;
      t.seed = a.seed;
      train(net, data, t);
      r["dense_accuracy"] = net.accuracy(data);
      pretrained = net.weights();
    } else {
      pretrained = load_weights(a.weights, model);
    }
    PruneResult p = reweighted_prune(model, pretrained, data, target, cfg, hyper);
    ChainNet net(model);
    net.set_weights(p.weights);
    r["accuracy"] = net.accuracy(data);
    r["hyper"] = json::parse(format_hyper(hyper));
    json rounds = json::array();
    for (const auto& rr : p.rounds)
      rounds.push_back({{"round", rr.round}, {"lambda", rr.lambda}, {"task_loss", rr.task_loss},
                        {"objective", rr.objective}});
    r["rounds"] = rounds;
    r["punched_norm2"] = p.punched_norm2;
    weights = std::move(p.weights);
    masks = std::move(p.masks);
  } else {
    throw UsageError("unknown method '" + a.method + "' (reweighted, projection)");
  }

  const CompressionReport rep = compression_report(model, masks);
  r["report"] = report_json(rep);
  json layers = json::array();
  bool uniform = true;
  for (const auto& l : plan.layers) {
    const auto it = masks.find(l.layer_id);
    const std::size_t kept = it == masks.end() ? l.weights : it->second.kept_weights();
    if (it != masks.end()) uniform = uniform && punched_uniform(it->second.to_elements(), cfg);
    layers.push_back({{"layer", l.layer_id}, {"weights", l.weights}, {"planned_rate", l.rate},
                      {"kept_columns", l.kept_columns}, {"kept_weights", kept}, {"is_3x3", l.is_3x3}});
  }
  r["layers"] = layers;
  r["punched_uniform"] = uniform;

  const fs::path out(a.out);
  fs::create_directories(out);
  save_weights(weights, out / "weights.bpwt");
  save_masks(masks, out / "masks.bpmask");
  std::string table = report_table(rep);
  if (r.contains("accuracy")) table += fmt::format("accuracy {:.4f}\n", r["accuracy"].get<double>());
  table += fmt::format("written to {}\n", out.string());
  emit(table, r, (out / "report.json").string());
  return kOk;
}

// pack / unpack ----------------------------------------------------------

int cmd_pack(const std::string& model_path, const std::string& weights_path, const std::string& masks_path,
             const std::string& block, bool reorder, const std::string& out, const std::string& report) {
  const ModelGraph model = load_model(model_path);
  const WeightMap weights = load_weights(weights_path, model);
  const MaskSet masks = masks_path.empty() ? MaskSet{} : load_masks(masks_path);
  const PackedModel packed = pack_model(model, weights, masks, block_of(block), reorder);
  save_packed_model(packed, out);

  json layers = json::array();
  std::size_t ours = 0, csr = 0;
  std::string table = fmt::format("{:<24} {:>10} {:>10} {:>12} {:>12}\n", "layer", "weights", "kept", "index B",
                                  "CSR index B");
  for (const auto& [id, p] : packed) {
    const std::size_t c = csr_index_bytes(p.rows(), p.values().size());
    ours += p.index_bytes();
    csr += c;
    layers.push_back({{"layer", id}, {"weights", p.dims().count()}, {"kept", p.values().size()},
                      {"index_bytes", p.index_bytes()}, {"csr_index_bytes", c}});
    table += fmt::format("{:<24} {:>10} {:>10} {:>12} {:>12}\n", id, p.dims().count(), p.values().size(),
                         p.index_bytes(), c);
  }
  table += fmt::format("total index bytes {} (CSR {})\n", ours, csr);
  emit(table, {{"file", out}, {"layers", layers}, {"index_bytes", ours}, {"csr_index_bytes", csr}}, report);
  return kOk;
}

int cmd_unpack(const std::string& packed_path, const std::string& out, const std::string& masks_out) {
  const PackedModel packed = load_packed_model(packed_path);
  WeightMap weights;
  MaskSet masks;
  for (const auto& [id, p] : packed) {
    weights.emplace(id, decode(p));
    masks.emplace(id, mask_of(p));
  }
  save_weights(weights, out);
  if (!masks_out.empty()) save_masks(masks, masks_out);
  std::cout << fmt::format("{} layers written to {}\n", weights.size(), out);
  return kOk;
}

// run --------------------------------------------------------------------

struct RunArgs {
  std::string model, packed, input, schedule, reference, report;
  std::size_t index = 0;
  std::uint64_t seed = 1;
  bool tune = false;
};

int cmd_run(const RunArgs& a) {
  const ModelGraph model = load_model(a.model);
  const PackedModel packed = load_packed_model(a.packed);
  FeatureMap input(model.input_shape());
  if (!a.input.empty()) {
    const Dataset d = load_dataset(a.input);
    if (d.shape != model.input_shape()) throw ShapeError("dataset shape does not match the model input");
    if (a.index >= d.size()) throw UsageError("--index is past the end of the dataset");
    const auto img = d.image(a.index);
    input.data.assign(img.begin(), img.end());
  } else {
    std::mt19937_64 rng(a.seed);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (auto& v : input.data) v = u(rng);
  }
  std::optional<Schedule> sched;
  if (!a.schedule.empty()) sched = load_schedule(a.schedule);
  Autotuner tuner;
  RunOptions opts;
  if (a.tune) opts.tuner = &tuner;
  opts.keep_activations = !a.reference.empty();
  const RunResult res = run_model(model, packed, input, sched ? &*sched : nullptr, opts);

  json r{{"model", a.model}, {"wall_ms", res.wall_ms}, {"critical_path_ms", res.critical_path_ms()},
         {"timing_note", "environment-dependent"}};
  std::string table = fmt::format("{:<24} {:<10} {:>4} {:>10} {:>10}\n", "layer", "structure", "lane", "start ms",
                                  "ms");
  json trace = json::array();
  for (const auto& e : res.trace) {
    table += fmt::format("{:<24} {:<10} {:>4} {:>10.3f} {:>10.3f}\n", e.layer_id, e.structure_id, to_string(e.lane),
                         e.start_ms, e.duration_ms);
    trace.push_back({{"layer", e.layer_id}, {"structure", e.structure_id}, {"branch", e.branch},
                     {"lane", to_string(e.lane)}, {"start_ms", e.start_ms}, {"duration_ms", e.duration_ms}});
  }
  r["trace"] = trace;
  json outputs = json::object();
  for (const auto& [id, f] : res.outputs) {
    double sum = 0.0;
    for (float v : f.data) sum += v;
    outputs[id] = {{"shape", {f.shape.c, f.shape.h, f.shape.w}}, {"sum", sum}};
  }
  r["outputs"] = outputs;
  table += fmt::format("wall {:.3f} ms, critical path {:.3f} ms (environment-dependent)\n", res.wall_ms,
                       res.critical_path_ms());
  if (!a.reference.empty()) {
    const auto dense = run_model_dense(model, load_weights(a.reference, model), input);
    double worst = 0.0;
    for (const auto& [id, f] : res.activations) worst = std::max(worst, relative_error(f, dense.at(id)));
    r["max_relative_error"] = worst;
    table += fmt::format("max relative error against dense weights {:.3g}\n", worst);
  }
  emit(table, r, a.report);
  return kOk;
}

// schedule ---------------------------------------------------------------

int cmd_schedule(const std::string& model_path, const std::string& profile_path, const std::string& packed_path,
                 const std::string& profile_out, std::size_t repeats, const std::string& out,
                 const std::string& report) {
  const ModelGraph model = load_model(model_path);
  DeviceProfile profile;
  if (!profile_path.empty()) {
    profile = load_profile(profile_path);
  } else {
    if (packed_path.empty()) throw UsageError("schedule needs --profile or --packed to measure one");
    FeatureMap input(model.input_shape());
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (auto& v : input.data) v = u(rng);
    ProfileOptions po;
    po.repeats = repeats;
    profile = profile_branches(model, load_packed_model(packed_path), input, po);
    if (!profile_out.empty()) save_profile(profile, profile_out);
  }
  const Schedule s = schedule_model(model, profile);
  if (!out.empty()) save_schedule(s, out);
  emit(format_schedule_table(s), json::parse(schedule_to_json(s)), report);
  return kOk;
}

// reproduce --------------------------------------------------------------

struct ReproduceArgs {
  std::string table, model, report;
  std::size_t seeds = 5;
  std::uint64_t seed = 1;
  double rate = 8.0, rho = 1.15, noise = 0.8;
  std::size_t count = 1024;
  std::vector<std::string> overrides{"conv1=1"};
  bool no_latency = false;
};

int cmd_reproduce(const ReproduceArgs& a) {
  if (a.table == "compression-accounting" || a.table == "ceiling") {
    const ModelGraph model = load_model(a.model.empty() ? default_fixture("yolov4.model") : fs::path(a.model));
    if (a.table == "ceiling") {
      const auto rows = ceiling_table(model);
      emit(format_table(rows), json::parse(to_json(rows)), a.report);
    } else {
      const auto t = compression_accounting(model, a.rho);
      emit(format_table(t), json::parse(to_json(t)), a.report);
    }
    return kOk;
  }
  const ModelGraph model = load_model(a.model.empty() ? default_fixture("toy_cnn8.model") : fs::path(a.model));
  SchemeOptions o;
  o.seeds = a.seeds;
  o.first_seed = a.seed;
  o.rate = a.rate;
  o.rho = a.rho;
  o.overrides = parse_overrides(a.overrides);
  o.data.noise = a.noise;
  o.data.count = a.count;
  o.measure_latency = !a.no_latency;
  const SchemeComparison cmp = scheme_comparison(model, o);
  emit(format_table(cmp), json::parse(to_json(cmp)), a.report);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block-punched pruning, sparse execution and lane scheduling"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic oriented-grating dataset");
  gen->add_option("--seed", gd.seed)->capture_default_str();
  gen->add_option("--count", gd.count)->capture_default_str()->check(CLI::PositiveNumber);
  gen->add_option("--classes", gd.classes)->capture_default_str()->check(CLI::Range(2, 1000));
  gen->add_option("--noise", gd.noise)->capture_default_str()->check(CLI::NonNegativeNumber);
  gen->add_option("--shape", gd.shape, "C H W")->expected(3)->delimiter(',')->capture_default_str();
  gen->add_option("--model", gd.model, "Take the shape from this model's input")->check(CLI::ExistingFile);
  gen->add_option("-o,--out", gd.out)->required();
  gen->add_option("--report", gd.report, "JSON report path");

  PruneArgs pa;
  auto* prune = app.add_subcommand("prune", "Prune a model to a compression target");
  prune->add_option("--model", pa.model)->required()->check(CLI::ExistingFile);
  prune->add_option("--weights", pa.weights, "Pretrained weights; trained from scratch when absent");
  prune->add_option("--data", pa.data, "Training dataset; synthetic from --seed when absent");
  prune->add_option("--rate", pa.rate)->required();
  prune->add_option("--rho", pa.rho, "3x3 rate over the rate of other layers")->capture_default_str();
  prune->add_option("--block", pa.block)->capture_default_str();
  prune->add_option("--seed", pa.seed)->capture_default_str();
  prune->add_option("--override", pa.overrides, "Fixed layer rate, <layer>=<rate>");
  prune->add_option("--hyper", pa.hyper, "JSON hyperparameter file");
  prune->add_option("--method", pa.method, "reweighted or projection")->capture_default_str();
  prune->add_option("--train-epochs", pa.train_epochs)->capture_default_str();
  prune->add_option("-o,--out", pa.out, "Output directory")->required();

  std::string pk_model, pk_weights, pk_masks, pk_block = "8x4", pk_out, pk_report;
  bool pk_no_reorder = false;
  auto* pack = app.add_subcommand("pack", "Encode pruned weights in the packed format");
  pack->add_option("--model", pk_model)->required()->check(CLI::ExistingFile);
  pack->add_option("--weights", pk_weights)->required();
  pack->add_option("--masks", pk_masks, "Layers without a mask are packed dense");
  pack->add_option("--block", pk_block, "Block shape for unmasked layers")->capture_default_str();
  pack->add_flag("--no-reorder", pk_no_reorder, "Keep bands in natural order");
  pack->add_option("-o,--out", pk_out)->required();
  pack->add_option("--report", pk_report);

  std::string up_packed, up_out, up_masks;
  auto* unpack = app.add_subcommand("unpack", "Decode a packed model back to dense weights");
  unpack->add_option("--packed", up_packed)->required();
  unpack->add_option("-o,--out", up_out)->required();
  unpack->add_option("--masks-out", up_masks);

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Execute a packed model");
  run->add_option("--model", ra.model)->required()->check(CLI::ExistingFile);
  run->add_option("--packed", ra.packed)->required();
  run->add_option("--input", ra.input, "Dataset file; a random input from --seed when absent");
  run->add_option("--index", ra.index, "Sample of the dataset")->capture_default_str();
  run->add_option("--seed", ra.seed)->capture_default_str();
  run->add_option("--schedule", ra.schedule, "Schedule JSON; every branch on G when absent");
  run->add_option("--reference", ra.reference, "Dense weights to compare every layer against");
  run->add_flag("--tune", ra.tune, "Autotune kernel tiling per layer");
  run->add_option("--report", ra.report);

  std::string sc_model, sc_profile, sc_packed, sc_profile_out, sc_out, sc_report;
  std::size_t sc_repeats = 5;
  auto* schedule = app.add_subcommand("schedule", "Assign branches to lanes");
  schedule->add_option("--model", sc_model)->required()->check(CLI::ExistingFile);
  schedule->add_option("--profile", sc_profile, "Profile file");
  schedule->add_option("--packed", sc_packed, "Measure a profile with this packed model");
  schedule->add_option("--profile-out", sc_profile_out);
  schedule->add_option("--repeats", sc_repeats)->capture_default_str();
  schedule->add_option("-o,--out", sc_out, "Schedule JSON");
  schedule->add_option("--report", sc_report);

  ReproduceArgs rp;
  auto* reproduce = app.add_subcommand("reproduce", "Desk-scale analogues of the published tables");
  reproduce->add_option("table", rp.table)
      ->required()
      ->check(CLI::IsMember({"compression-accounting", "ceiling", "scheme-comparison"}));
  reproduce->add_option("--model", rp.model, "Defaults to the bundled YOLOv4 or toy fixture");
  reproduce->add_option("--seeds", rp.seeds)->capture_default_str();
  reproduce->add_option("--seed", rp.seed, "First seed")->capture_default_str();
  reproduce->add_option("--rate", rp.rate)->capture_default_str();
  reproduce->add_option("--rho", rp.rho)->capture_default_str();
  reproduce->add_option("--noise", rp.noise)->capture_default_str();
  reproduce->add_option("--count", rp.count, "Training samples per seed")->capture_default_str();
  reproduce->add_option("--override", rp.overrides, "Fixed layer rate, <layer>=<rate>, or none")
      ->capture_default_str();
  reproduce->add_flag("--no-latency", rp.no_latency);
  reproduce->add_option("--report", rp.report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen_data(gd);
    if (*prune) return cmd_prune(pa);
    if (*pack) return cmd_pack(pk_model, pk_weights, pk_masks, pk_block, !pk_no_reorder, pk_out, pk_report);
    if (*unpack) return cmd_unpack(up_packed, up_out, up_masks);
    if (*run) return cmd_run(ra);
    if (*schedule) return cmd_schedule(sc_model, sc_profile, sc_packed, sc_profile_out, sc_repeats, sc_out, sc_report);
    if (*reproduce) return cmd_reproduce(rp);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const InfeasibleTarget& e) {
    std::cerr << "error: infeasible target: " << e.what() << "\n";
    return kInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
