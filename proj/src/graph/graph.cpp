#include "bpunch/graph.hpp"

#include <algorithm>
#include <array>
#include <queue>
#include <set>
#include <unordered_map>
#include <utility>

#include "bpunch/error.hpp"

namespace bpunch {

namespace {

constexpr std::array<std::pair<LayerKind, std::string_view>, 8> kKindNames{{
    {LayerKind::kConv, "conv"},
    {LayerKind::kFc, "fc"},
    {LayerKind::kAdd, "pointwise-add"},
    {LayerKind::kMul, "pointwise-mul"},
    {LayerKind::kConcat, "concat"},
    {LayerKind::kUpsample, "upsample"},
    {LayerKind::kMaxPool, "maxpool"},
    {LayerKind::kTransposeReshape, "transpose-reshape"},
}};

constexpr std::array<std::pair<AffineKind, std::string_view>, 3> kAffineNames{{
    {AffineKind::kNone, "none"},
    {AffineKind::kBias, "bias"},
    {AffineKind::kBatchNorm, "bn"},
}};

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "?";
}

std::optional<LayerKind> parse_layer_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames)
    if (name == text) return k;
  return std::nullopt;
}

std::string_view to_string(AffineKind kind) {
  for (const auto& [k, name] : kAffineNames)
    if (k == kind) return name;
  return "?";
}

std::optional<AffineKind> parse_affine_kind(std::string_view text) {
  for (const auto& [k, name] : kAffineNames)
    if (name == text) return k;
  return std::nullopt;
}

std::string_view to_string(BranchKind kind) {
  return kind == BranchKind::kConv ? "conv-branches" : "nonconv-branches";
}

std::optional<BranchKind> parse_branch_kind(std::string_view text) {
  if (text == "conv-branches") return BranchKind::kConv;
  if (text == "nonconv-branches") return BranchKind::kNonConv;
  return std::nullopt;
}

std::size_t LayerSpec::affine_count() const {
  if (!has_weights()) return 0;
  switch (affine) {
    case AffineKind::kBias:
      return filters;
    case AffineKind::kBatchNorm:
      return 2 * filters;  // scale and shift
    case AffineKind::kNone:
      break;
  }
  return 0;
}

ModelGraph::ModelGraph(Shape3 input, std::vector<LayerSpec> layers, std::vector<BranchStructure> structures)
    : input_(input), layers_(std::move(layers)), structures_(std::move(structures)) {
  if (input_.size() == 0) throw ShapeError("model input shape must be non-empty");
  std::set<std::string_view> seen;
  for (const auto& layer : layers_) {
    if (layer.id.empty()) throw ShapeError("layer with empty id");
    if (layer.id == kInputId) throw ShapeError("layer id 'input' is reserved");
    if (!seen.insert(layer.id).second) throw ShapeError("duplicate layer id '" + layer.id + "'");
    validate_layer(layer);
  }
  build_topo();
  validate_structures();
}

void ModelGraph::validate_layer(const LayerSpec& layer) const {
  const auto fail = [&](const std::string& what) { throw ShapeError("layer '" + layer.id + "': " + what); };
  if (layer.inputs.empty()) fail("no inputs");
  if (layer.stride == 0) fail("stride must be >= 1");
  switch (layer.kind) {
    case LayerKind::kConv:
    case LayerKind::kFc:
      if (layer.filters == 0 || layer.channels == 0 || layer.kh == 0 || layer.kw == 0)
        fail("weight layers need filters, channels and kernel >= 1");
      if (layer.kind == LayerKind::kFc && (layer.kh != 1 || layer.kw != 1)) fail("fc kernel must be 1x1");
      if (layer.inputs.size() != 1) fail("weight layers take exactly one input");
      break;
    case LayerKind::kAdd:
    case LayerKind::kMul:
      if (layer.inputs.size() == 1 && !layer.scalar) fail("single-input pointwise op needs a scalar");
      if (layer.inputs.size() > 1 && layer.scalar) fail("scalar only allowed with one input");
      break;
    case LayerKind::kConcat:
      break;
    case LayerKind::kUpsample:
      if (layer.factor == 0) fail("upsample factor must be >= 1");
      if (layer.inputs.size() != 1) fail("upsample takes one input");
      break;
    case LayerKind::kMaxPool:
      if (layer.size == 0) fail("pool size must be >= 1");
      if (layer.inputs.size() != 1) fail("maxpool takes one input");
      break;
    case LayerKind::kTransposeReshape:
      if (layer.inputs.size() != 1) fail("transpose-reshape takes one input");
      break;
  }
  if (!layer.has_weights() && (layer.filters || layer.channels || layer.kh || layer.kw))
    fail("non-weight layers carry no weight shape");
}

std::optional<std::size_t> ModelGraph::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].id == id) return i;
  return std::nullopt;
}

const LayerSpec& ModelGraph::layer(std::string_view id) const {
  const auto idx = index_of(id);
  if (!idx) throw ShapeError("unknown layer '" + std::string(id) + "'");
  return layers_[*idx];
}

void ModelGraph::build_topo() {
  const std::size_t n = layers_.size();
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(layers_[i].id, i);

  std::vector<std::vector<std::size_t>> consumers(n);
  std::vector<std::size_t> indegree(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& in : layers_[i].inputs) {
      if (in == kInputId) continue;
      const auto it = index.find(in);
      if (it == index.end()) throw ShapeError("layer '" + layers_[i].id + "': input '" + in + "' does not resolve");
      consumers[it->second].push_back(i);
      ++indegree[i];
    }
  }

  // Kahn's algorithm with a min-heap on list position for a stable order.
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(i);
  topo_.clear();
  while (!ready.empty()) {
    const std::size_t i = ready.top();
    ready.pop();
    topo_.push_back(i);
    for (std::size_t c : consumers[i])
      if (--indegree[c] == 0) ready.push(c);
  }
  if (topo_.size() != n) throw ShapeError("cycle detected in layer graph");
}

void ModelGraph::validate_structures() {
  owner_.assign(layers_.size(), std::nullopt);
  for (std::size_t s = 0; s < structures_.size(); ++s) {
    const auto& st = structures_[s];
    const auto fail = [&](const std::string& what) { throw ShapeError("structure '" + st.id + "': " + what); };
    if (st.branches.empty()) fail("no branches");
    if (st.kind == BranchKind::kConv && st.branches.size() != 2) fail("conv-branches structures have exactly 2 branches");

    std::vector<std::vector<std::size_t>> members(st.branches.size());
    for (std::size_t b = 0; b < st.branches.size(); ++b) {
      if (st.branches[b].empty()) fail("empty branch");
      for (const auto& id : st.branches[b]) {
        const auto idx = index_of(id);
        if (!idx) fail("unknown layer '" + id + "'");
        if (owner_[*idx]) fail("layer '" + id + "' already belongs to a structure");
        owner_[*idx] = s;
        members[b].push_back(*idx);
      }
    }

    // Independence: no branch may reach a layer of another branch through
    // its ancestors.
    std::vector<int> branch_of(layers_.size(), -1);
    for (std::size_t b = 0; b < members.size(); ++b)
      for (std::size_t idx : members[b]) branch_of[idx] = static_cast<int>(b);
    for (std::size_t b = 0; b < members.size(); ++b) {
      std::vector<char> visited(layers_.size(), 0);
      std::vector<std::size_t> stack(members[b].begin(), members[b].end());
      while (!stack.empty()) {
        const std::size_t cur = stack.back();
        stack.pop_back();
        for (const auto& in : layers_[cur].inputs) {
          if (in == kInputId) continue;
          const std::size_t p = *index_of(in);
          if (visited[p]) continue;
          visited[p] = 1;
          if (branch_of[p] >= 0 && branch_of[p] != static_cast<int>(b))
            fail("branches " + std::to_string(b) + " and " + std::to_string(branch_of[p]) + " are not independent");
          stack.push_back(p);
        }
      }
    }
  }
}

std::optional<std::size_t> ModelGraph::structure_of(std::size_t layer_index) const {
  return owner_.at(layer_index);
}

std::vector<Shape3> ModelGraph::infer_shapes() const { return infer_shapes(input_); }

std::vector<Shape3> ModelGraph::infer_shapes(Shape3 input) const {
  std::vector<Shape3> out(layers_.size());
  const auto shape_of = [&](const std::string& id) -> Shape3 {
    if (id == kInputId) return input;
    return out[*index_of(id)];
  };

  for (std::size_t idx : topo_) {
    const auto& l = layers_[idx];
    const auto fail = [&](const std::string& what) { throw ShapeError("layer '" + l.id + "': " + what); };
    const Shape3 in = shape_of(l.inputs.front());
    Shape3 res;
    switch (l.kind) {
      case LayerKind::kConv: {
        if (in.c != l.channels)
          fail("expects " + std::to_string(l.channels) + " input channels, got " + std::to_string(in.c));
        if (in.h + 2 * l.padding < l.kh || in.w + 2 * l.padding < l.kw) fail("kernel larger than padded input");
        res = {l.filters, (in.h + 2 * l.padding - l.kh) / l.stride + 1, (in.w + 2 * l.padding - l.kw) / l.stride + 1};
        break;
      }
      case LayerKind::kFc:
        if (in.size() != l.channels)
          fail("expects " + std::to_string(l.channels) + " input features, got " + std::to_string(in.size()));
        res = {l.filters, 1, 1};
        break;
      case LayerKind::kAdd:
      case LayerKind::kMul:
        for (const auto& id : l.inputs)
          if (shape_of(id) != in) fail("pointwise inputs differ in shape");
        res = in;
        break;
      case LayerKind::kConcat: {
        res = {0, in.h, in.w};
        for (const auto& id : l.inputs) {
          const Shape3 s = shape_of(id);
          if (s.h != in.h || s.w != in.w) fail("concat inputs differ in spatial size");
          res.c += s.c;
        }
        break;
      }
      case LayerKind::kUpsample:
        res = {in.c, in.h * l.factor, in.w * l.factor};
        break;
      case LayerKind::kMaxPool: {
        if (in.h + 2 * l.padding < l.size || in.w + 2 * l.padding < l.size) fail("pool window larger than input");
        res = {in.c, (in.h + 2 * l.padding - l.size) / l.stride + 1, (in.w + 2 * l.padding - l.size) / l.stride + 1};
        break;
      }
      case LayerKind::kTransposeReshape:
        res = {in.h, in.w, in.c};  // channel-last
        break;
    }
    if (res.size() == 0) fail("empty output shape");
    out[idx] = res;
  }
  return out;
}

}  // namespace bpunch
