#include "bpunch/executor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <queue>
#include <thread>

#include "bpunch/error.hpp"

namespace bpunch {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

FeatureMap pointwise(const LayerSpec& l, const std::vector<const FeatureMap*>& in) {
  FeatureMap out = *in.front();
  const bool add = l.kind == LayerKind::kAdd;
  if (l.scalar) {
    const auto s = static_cast<float>(*l.scalar);
    for (auto& v : out.data) v = add ? v + s : v * s;
    return out;
  }
  for (std::size_t k = 1; k < in.size(); ++k) {
    const auto& d = in[k]->data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = add ? out.data[i] + d[i] : out.data[i] * d[i];
  }
  return out;
}

FeatureMap concat(const std::vector<const FeatureMap*>& in) {
  Shape3 s{0, in.front()->shape.h, in.front()->shape.w};
  for (const auto* x : in) s.c += x->shape.c;
  FeatureMap out(s);
  std::size_t at = 0;
  for (const auto* x : in) {
    std::copy(x->data.begin(), x->data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(at));
    at += x->data.size();
  }
  return out;
}

FeatureMap upsample(const FeatureMap& x, std::size_t f) {
  const Shape3 s = x.shape;
  FeatureMap out({s.c, s.h * f, s.w * f});
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t y = 0; y < s.h * f; ++y)
      for (std::size_t z = 0; z < s.w * f; ++z)
        out.data[(c * s.h * f + y) * s.w * f + z] = x.data[(c * s.h + y / f) * s.w + z / f];
  return out;
}

FeatureMap maxpool(const FeatureMap& x, std::size_t size, std::size_t stride, std::size_t padding) {
  const Shape3 s = x.shape;
  const std::size_t ho = (s.h + 2 * padding - size) / stride + 1;
  const std::size_t wo = (s.w + 2 * padding - size) / stride + 1;
  FeatureMap out({s.c, ho, wo});
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        float m = -std::numeric_limits<float>::infinity();
        for (std::size_t i = 0; i < size; ++i)
          for (std::size_t j = 0; j < size; ++j) {
            const auto y = static_cast<std::ptrdiff_t>(oy * stride + i) - pad;
            const auto z = static_cast<std::ptrdiff_t>(ox * stride + j) - pad;
            if (y < 0 || z < 0 || y >= static_cast<std::ptrdiff_t>(s.h) || z >= static_cast<std::ptrdiff_t>(s.w))
              continue;
            m = std::max(m, x.data[(c * s.h + static_cast<std::size_t>(y)) * s.w + static_cast<std::size_t>(z)]);
          }
        out.data[(c * ho + oy) * wo + ox] = m;
      }
  return out;
}

// (c, h, w) -> (h, w, c): element (c, y, z) moves to (y, z, c).
FeatureMap transpose_reshape(const FeatureMap& x) {
  const Shape3 s = x.shape;
  FeatureMap out({s.h, s.w, s.c});
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t z = 0; z < s.w; ++z) out.data[(y * s.w + z) * s.c + c] = x.data[(c * s.h + y) * s.w + z];
  return out;
}

// Runs a non-weight layer, or calls `weighted` for conv/fc.
template <typename Weighted>
FeatureMap execute(const LayerSpec& l, const std::vector<const FeatureMap*>& in, Weighted&& weighted) {
  switch (l.kind) {
    case LayerKind::kConv:
    case LayerKind::kFc:
      return weighted(l, *in.front());
    case LayerKind::kAdd:
    case LayerKind::kMul:
      return pointwise(l, in);
    case LayerKind::kConcat:
      return concat(in);
    case LayerKind::kUpsample:
      return upsample(*in.front(), l.factor);
    case LayerKind::kMaxPool:
      return maxpool(*in.front(), l.size, l.stride, l.padding);
    case LayerKind::kTransposeReshape:
      return transpose_reshape(*in.front());
  }
  throw ShapeError("unhandled layer kind");
}

struct Step {
  bool structure = false;
  std::size_t index = 0;  // layer index or structure index
};

// Topological order of the graph with every branch structure collapsed into
// one node.
std::vector<Step> contracted_order(const ModelGraph& model) {
  const auto& layers = model.layers();
  const std::size_t nl = layers.size(), ns = model.structures().size();
  const auto node_of = [&](std::size_t layer) {
    const auto s = model.structure_of(layer);
    return s ? nl + *s : layer;
  };
  std::vector<std::vector<std::size_t>> succ(nl + ns);
  std::vector<std::size_t> indeg(nl + ns, 0);
  std::vector<std::size_t> rank(nl + ns, std::numeric_limits<std::size_t>::max());
  std::vector<bool> present(nl + ns, false);
  for (std::size_t i = 0; i < nl; ++i) {
    const std::size_t v = node_of(i);
    present[v] = true;
    rank[v] = std::min(rank[v], i);
    for (const auto& id : layers[i].inputs) {
      if (id == kInputId) continue;
      const std::size_t u = node_of(*model.index_of(id));
      if (u == v) continue;
      succ[u].push_back(v);
      ++indeg[v];
    }
  }
  using Item = std::pair<std::size_t, std::size_t>;  // (rank, node)
  std::priority_queue<Item, std::vector<Item>, std::greater<>> ready;
  for (std::size_t v = 0; v < nl + ns; ++v)
    if (present[v] && indeg[v] == 0) ready.emplace(rank[v], v);
  std::vector<Step> order;
  while (!ready.empty()) {
    const std::size_t v = ready.top().second;
    ready.pop();
    order.push_back(v >= nl ? Step{true, v - nl} : Step{false, v});
    for (std::size_t w : succ[v])
      if (--indeg[w] == 0) ready.emplace(rank[w], w);
  }
  const auto expected = static_cast<std::size_t>(std::count(present.begin(), present.end(), true));
  if (order.size() != expected)
    throw ShapeError("branch structures cannot be run as units: a structure feeds a layer it depends on");
  return order;
}

class Runner {
 public:
  Runner(const ModelGraph& model, const PackedModel& packed, const FeatureMap& input, const RunOptions& opts)
      : model_(model), packed_(packed), input_(input), opts_(opts), acts_(model.layers().size()) {
    const auto shapes = model.infer_shapes(input.shape);
    (void)shapes;
    for (const auto& l : model.layers())
      if (l.has_weights()) {
        const auto it = packed.find(l.id);
        if (it == packed.end()) throw ShapeError("weight layer '" + l.id + "' is not packed");
        const WeightDims d = it->second.dims();
        if (!(d == dims_of(l))) throw ShapeError("packed layer '" + l.id + "' does not match the model");
      }
    start_ = Clock::now();
  }

  // Runs layer i on a lane, recording a trace entry into `trace`.
  void run_layer(std::size_t i, Lane lane, const std::string& structure, std::size_t branch,
                 std::vector<TraceEntry>& trace) {
    const LayerSpec& l = model_.layers()[i];
    std::vector<const FeatureMap*> in;
    for (const auto& id : l.inputs) in.push_back(id == kInputId ? &input_ : &acts_[*model_.index_of(id)]);
    const auto t0 = Clock::now();
    acts_[i] = execute(l, in, [&](const LayerSpec& spec, const FeatureMap& x) { return weighted(spec, x, lane); });
    const auto t1 = Clock::now();
    trace.push_back({l.id, structure, branch, lane, ms_between(start_, t0), ms_between(t0, t1)});
  }

  const FeatureMap& activation(std::size_t i) const { return acts_[i]; }
  std::vector<FeatureMap>& activations() { return acts_; }
  Clock::time_point start() const { return start_; }

 private:
  TuningConfig tuning_for(const PackedSparseLayer& p, const Matrix& x, Lane lane) {
    if (opts_.tuner) return opts_.tuner->tune(p, x, lane, opts_.tune_budget);
    return lane == Lane::kG ? opts_.fast : opts_.general;
  }

  FeatureMap weighted(const LayerSpec& l, const FeatureMap& x, Lane lane) {
    const PackedSparseLayer& p = packed_.at(l.id);
    if (l.kind == LayerKind::kFc) {
      Matrix col(x.data.size(), 1);
      col.data = x.data;
      Matrix y = sparse_gemm(p, col, tuning_for(p, col, lane));
      return FeatureMap({l.filters, 1, 1}, std::move(y.data));
    }
    const std::vector<bool> used = used_columns(p);
    const Matrix cols = im2col(x, l.kh, l.kw, l.stride, l.padding, &used);
    Matrix y = sparse_gemm(p, cols, tuning_for(p, cols, lane));
    const std::size_t ho = (x.shape.h + 2 * l.padding - l.kh) / l.stride + 1;
    const std::size_t wo = (x.shape.w + 2 * l.padding - l.kw) / l.stride + 1;
    return FeatureMap({l.filters, ho, wo}, std::move(y.data));
  }

  const ModelGraph& model_;
  const PackedModel& packed_;
  const FeatureMap& input_;
  const RunOptions& opts_;
  std::vector<FeatureMap> acts_;
  Clock::time_point start_;
};

std::vector<Lane> lanes_for(const BranchStructure& st, const Schedule* schedule) {
  std::vector<Lane> lanes(st.branches.size(), Lane::kG);
  if (!schedule) return lanes;
  const StructureDecision* d = schedule->find(st.id);
  if (!d) return lanes;
  if (d->lanes.size() != st.branches.size())
    throw ShapeError("schedule gives " + std::to_string(d->lanes.size()) + " lanes for structure '" + st.id +
                     "' with " + std::to_string(st.branches.size()) + " branches");
  return d->lanes;
}

std::map<std::string, FeatureMap> sinks(const ModelGraph& model, const FeatureMap& input,
                                        const std::vector<FeatureMap>& acts) {
  std::map<std::string, FeatureMap> out;
  if (model.layers().empty()) {
    out.emplace(std::string(kInputId), input);
    return out;
  }
  std::vector<bool> consumed(model.layers().size(), false);
  for (const auto& l : model.layers())
    for (const auto& id : l.inputs)
      if (id != kInputId) consumed[*model.index_of(id)] = true;
  for (std::size_t i = 0; i < model.layers().size(); ++i)
    if (!consumed[i]) out.emplace(model.layers()[i].id, acts[i]);
  return out;
}

}  // namespace

PackedModel pack_model(const ModelGraph& model, const WeightMap& weights, const MaskSet& masks, BlockConfig cfg,
                       bool reorder) {
  PackedModel out;
  for (const auto& l : model.layers()) {
    if (!l.has_weights()) continue;
    const auto w = weights.find(l.id);
    if (w == weights.end()) throw ShapeError("no weights for layer '" + l.id + "'");
    const auto m = masks.find(l.id);
    const PruneMask mask = m != masks.end() ? m->second
                                            : PruneMask::full(l.id, BlockGrid(w->second.rows(), w->second.cols(), cfg));
    PackedSparseLayer p = encode(w->second, mask);
    out.emplace(l.id, reorder ? reorder_blocks(p) : std::move(p));
  }
  return out;
}

double RunResult::critical_path_ms() const {
  double total = 0.0;
  std::map<std::string, std::map<Lane, double>> lanes;
  for (const auto& e : trace) {
    if (e.structure_id.empty()) total += e.duration_ms;
    else lanes[e.structure_id][e.lane] += e.duration_ms;
  }
  for (const auto& [id, per_lane] : lanes) {
    double m = 0.0;
    for (const auto& [lane, t] : per_lane) m = std::max(m, t);
    total += m;
  }
  return total;
}

RunResult run_model(const ModelGraph& model, const PackedModel& packed, const FeatureMap& input,
                    const Schedule* schedule, const RunOptions& options) {
  if (!(input.shape == model.input_shape()) && !model.layers().empty())
    throw ShapeError("input shape does not match the model");
  Runner runner(model, packed, input, options);
  RunResult result;
  for (const Step& step : contracted_order(model)) {
    if (!step.structure) {
      runner.run_layer(step.index, Lane::kG, {}, 0, result.trace);
      continue;
    }
    const BranchStructure& st = model.structures()[step.index];
    const std::vector<Lane> lanes = lanes_for(st, schedule);
    const auto run_lane = [&](Lane lane, std::vector<TraceEntry>& trace) {
      for (std::size_t b = 0; b < st.branches.size(); ++b) {
        if (lanes[b] != lane) continue;
        for (const auto& id : st.branches[b]) runner.run_layer(*model.index_of(id), lane, st.id, b, trace);
      }
    };
    std::vector<TraceEntry> c_trace;
    std::exception_ptr c_error;
    std::thread c_lane;
    if (std::find(lanes.begin(), lanes.end(), Lane::kC) != lanes.end()) {
      c_lane = std::thread([&] {
        try {
          run_lane(Lane::kC, c_trace);
        } catch (...) {
          c_error = std::current_exception();
        }
      });
    }
    std::exception_ptr g_error;
    try {
      run_lane(Lane::kG, result.trace);
    } catch (...) {
      g_error = std::current_exception();
    }
    if (c_lane.joinable()) c_lane.join();
    if (g_error) std::rethrow_exception(g_error);
    if (c_error) std::rethrow_exception(c_error);
    result.trace.insert(result.trace.end(), c_trace.begin(), c_trace.end());
  }
  result.wall_ms = ms_between(runner.start(), Clock::now());
  result.outputs = sinks(model, input, runner.activations());
  if (options.keep_activations)
    for (std::size_t i = 0; i < model.layers().size(); ++i)
      result.activations.emplace(model.layers()[i].id, runner.activation(i));
  return result;
}

namespace {

FeatureMap dense_weighted(const LayerSpec& l, const FeatureMap& x, const WeightTensor& w) {
  if (l.kind == LayerKind::kFc) {
    const std::size_t k = x.data.size();
    FeatureMap out({l.filters, 1, 1});
    for (std::size_t m = 0; m < l.filters; ++m) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += static_cast<double>(w.values[m * k + i]) * x.data[i];
      out.data[m] = static_cast<float>(acc);
    }
    return out;
  }
  const Shape3 s = x.shape;
  const std::size_t ho = (s.h + 2 * l.padding - l.kh) / l.stride + 1;
  const std::size_t wo = (s.w + 2 * l.padding - l.kw) / l.stride + 1;
  FeatureMap out({l.filters, ho, wo});
  const auto pad = static_cast<std::ptrdiff_t>(l.padding);
  for (std::size_t m = 0; m < l.filters; ++m)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (std::size_t c = 0; c < l.channels; ++c)
          for (std::size_t i = 0; i < l.kh; ++i)
            for (std::size_t j = 0; j < l.kw; ++j) {
              const auto y = static_cast<std::ptrdiff_t>(oy * l.stride + i) - pad;
              const auto z = static_cast<std::ptrdiff_t>(ox * l.stride + j) - pad;
              if (y < 0 || z < 0 || y >= static_cast<std::ptrdiff_t>(s.h) || z >= static_cast<std::ptrdiff_t>(s.w))
                continue;
              acc += static_cast<double>(w.values[((m * l.channels + c) * l.kh + i) * l.kw + j]) *
                     x.data[(c * s.h + static_cast<std::size_t>(y)) * s.w + static_cast<std::size_t>(z)];
            }
        out.data[(m * ho + oy) * wo + ox] = static_cast<float>(acc);
      }
  return out;
}

}  // namespace

std::map<std::string, FeatureMap> run_model_dense(const ModelGraph& model, const WeightMap& weights,
                                                  const FeatureMap& input) {
  model.infer_shapes(input.shape);
  std::vector<FeatureMap> acts(model.layers().size());
  for (std::size_t i : model.topo_order()) {
    const LayerSpec& l = model.layers()[i];
    std::vector<const FeatureMap*> in;
    for (const auto& id : l.inputs) in.push_back(id == kInputId ? &input : &acts[*model.index_of(id)]);
    acts[i] = execute(l, in, [&](const LayerSpec& spec, const FeatureMap& x) {
      const auto it = weights.find(spec.id);
      if (it == weights.end()) throw ShapeError("no weights for layer '" + spec.id + "'");
      return dense_weighted(spec, x, it->second);
    });
  }
  std::map<std::string, FeatureMap> out;
  for (std::size_t i = 0; i < acts.size(); ++i) out.emplace(model.layers()[i].id, std::move(acts[i]));
  return out;
}

double relative_error(const FeatureMap& a, const FeatureMap& ref) {
  if (!(a.shape == ref.shape) || a.data.size() != ref.data.size()) throw ShapeError("relative_error: shape mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - ref.data[i];
    num += d * d;
    den += static_cast<double>(ref.data[i]) * ref.data[i];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(num / den);
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

CopyModel fit_copy_model(const std::vector<std::size_t>& sizes, std::size_t repeats) {
  std::vector<double> xs, ys;
  for (std::size_t bytes : sizes) {
    std::vector<std::uint8_t> src(bytes, 1), dst(bytes);
    std::vector<double> t;
    for (std::size_t r = 0; r < repeats; ++r) {
      const auto t0 = Clock::now();
      std::memcpy(dst.data(), src.data(), bytes);
      t.push_back(ms_between(t0, Clock::now()));
    }
    xs.push_back(static_cast<double>(bytes));
    ys.push_back(median(t));
  }
  CopyModel m;
  if (xs.size() < 2) {
    m.bytes_per_ms = ys.empty() || ys[0] <= 0.0 ? 1e12 : xs[0] / ys[0];
    return m;
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) sx += xs[i], sy += ys[i], sxx += xs[i] * xs[i], sxy += xs[i] * ys[i];
  const double den = n * sxx - sx * sx;
  double slope = den > 0 ? (n * sxy - sx * sy) / den : 0.0;
  double base = (sy - slope * sx) / n;
  if (slope <= 0.0) slope = 1e-12;
  m.base_ms = std::max(base, 0.0);
  m.bytes_per_ms = 1.0 / slope;
  return m;
}

}  // namespace

DeviceProfile profile_branches(const ModelGraph& model, const PackedModel& packed, const FeatureMap& input,
                               const ProfileOptions& options) {
  if (options.repeats == 0) throw std::invalid_argument("profile_branches needs at least one repeat");
  DeviceProfile prof;
  prof.copy = fit_copy_model(options.copy_sizes, options.repeats);

  // One full run provides the inputs every branch needs.
  Runner runner(model, packed, input, options.run);
  std::vector<TraceEntry> scratch;
  for (std::size_t i : model.topo_order()) runner.run_layer(i, Lane::kG, {}, 0, scratch);

  std::vector<double> seq;
  for (std::size_t r = 0; r < options.repeats; ++r) {
    scratch.clear();
    for (std::size_t i : model.topo_order())
      if (!model.structure_of(i)) runner.run_layer(i, Lane::kG, {}, 0, scratch);
    double t = 0.0;
    for (const auto& e : scratch) t += e.duration_ms;
    seq.push_back(t);
  }
  prof.sequential_ms = median(seq);

  for (const auto& st : model.structures()) {
    auto& costs = prof.branches[st.id];
    for (std::size_t b = 0; b < st.branches.size(); ++b) {
      BranchCost c;
      for (Lane lane : {Lane::kG, Lane::kC}) {
        std::vector<double> t;
        for (std::size_t r = 0; r < options.repeats; ++r) {
          std::vector<TraceEntry> tr;
          double total = 0.0;
          if (lane == Lane::kC) {
            // The C lane is a separate thread, as during run_model.
            std::thread th([&] {
              for (const auto& id : st.branches[b]) runner.run_layer(*model.index_of(id), lane, st.id, b, tr);
            });
            th.join();
          } else {
            for (const auto& id : st.branches[b]) runner.run_layer(*model.index_of(id), lane, st.id, b, tr);
          }
          for (const auto& e : tr) total += e.duration_ms;
          t.push_back(total);
        }
        (lane == Lane::kG ? c.t_g : c.t_c) = median(t);
      }
      costs.push_back(c);
    }
  }
  return prof;
}

}  // namespace bpunch
