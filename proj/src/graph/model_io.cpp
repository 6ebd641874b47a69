#include "bpunch/model_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "bpunch/error.hpp"
#include "text.hpp"

namespace bpunch {

namespace {

using text::LineParser;
using text::split;
using text::tokens;

constexpr std::string_view kMagic = "bpmodel";
constexpr int kVersion = 1;

LayerSpec parse_layer(const std::vector<std::string_view>& tok, const LineParser& p) {
  if (tok.size() < 3) p.fail("layer record needs an id and a kind");
  LayerSpec layer;
  layer.id = std::string(tok[1]);
  const auto kind = parse_layer_kind(tok[2]);
  if (!kind) p.fail("unknown layer kind '" + std::string(tok[2]) + "'", "kind");
  layer.kind = *kind;
  if (layer.kind == LayerKind::kFc) layer.kh = layer.kw = 1;

  bool has_inputs = false;
  for (std::size_t i = 3; i < tok.size(); ++i) {
    const auto eq = tok[i].find('=');
    if (eq == std::string_view::npos) p.fail("expected key=value, got '" + std::string(tok[i]) + "'");
    const auto key = tok[i].substr(0, eq);
    const auto val = tok[i].substr(eq + 1);
    if (key == "filters") {
      layer.filters = p.count(val, key);
    } else if (key == "channels") {
      layer.channels = p.count(val, key);
    } else if (key == "kernel") {
      const auto parts = split(val, 'x');
      if (parts.size() == 1) {
        layer.kh = layer.kw = p.count(parts[0], key);
      } else if (parts.size() == 2) {
        layer.kh = p.count(parts[0], key);
        layer.kw = p.count(parts[1], key);
      } else {
        p.fail("kernel must be K or KhxKw", key);
      }
    } else if (key == "stride") {
      layer.stride = p.count(val, key);
    } else if (key == "pad") {
      layer.padding = p.count(val, key);
    } else if (key == "size") {
      layer.size = p.count(val, key);
    } else if (key == "factor") {
      layer.factor = p.count(val, key);
    } else if (key == "scalar") {
      layer.scalar = p.real(val, key);
    } else if (key == "affine") {
      const auto a = parse_affine_kind(val);
      if (!a) p.fail("unknown affine kind '" + std::string(val) + "'", key);
      layer.affine = *a;
    } else if (key == "inputs") {
      for (auto part : split(val, ','))
        if (!part.empty()) layer.inputs.emplace_back(part);
      has_inputs = true;
    } else {
      p.fail("unknown key", key);
    }
  }
  if (!has_inputs) p.fail("missing inputs", "inputs");
  return layer;
}

BranchStructure parse_structure(const std::vector<std::string_view>& tok, const LineParser& p) {
  if (tok.size() < 3) p.fail("structure record needs an id and a kind");
  BranchStructure st;
  st.id = std::string(tok[1]);
  const auto kind = parse_branch_kind(tok[2]);
  if (!kind) p.fail("unknown structure kind '" + std::string(tok[2]) + "'", "kind");
  st.kind = *kind;
  for (std::size_t i = 3; i < tok.size(); ++i) {
    const auto eq = tok[i].find('=');
    if (eq == std::string_view::npos) p.fail("expected key=value, got '" + std::string(tok[i]) + "'");
    const auto key = tok[i].substr(0, eq);
    const auto val = tok[i].substr(eq + 1);
    if (key == "bytes") {
      st.bytes = p.count(val, key);
    } else if (key == "branches") {
      for (auto branch : split(val, '|')) {
        std::vector<std::string> ids;
        for (auto id : split(branch, ','))
          if (!id.empty()) ids.emplace_back(id);
        st.branches.push_back(std::move(ids));
      }
    } else {
      p.fail("unknown key", key);
    }
  }
  return st;
}

}  // namespace

ModelGraph parse_model(std::string_view text) {
  std::optional<Shape3> input;
  std::vector<LayerSpec> layers;
  std::vector<BranchStructure> structures;
  bool header = false;

  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = tokens(line);
    if (tok.empty()) continue;
    const LineParser p(line_no);
    if (!header) {
      if (tok.size() != 2 || tok[0] != kMagic) p.fail("expected header 'bpmodel 1'", "magic");
      if (p.count(tok[1], "version") != kVersion) p.fail("unsupported version", "version");
      header = true;
    } else if (tok[0] == "input") {
      if (tok.size() != 4) p.fail("input record is 'input C H W'", "input");
      input = Shape3{p.count(tok[1], "input"), p.count(tok[2], "input"), p.count(tok[3], "input")};
    } else if (tok[0] == "layer") {
      layers.push_back(parse_layer(tok, p));
    } else if (tok[0] == "structure") {
      structures.push_back(parse_structure(tok, p));
    } else {
      p.fail("unknown record '" + std::string(tok[0]) + "'", "record");
    }
  }
  if (!header) throw ParseError("empty model file", 1, "magic");
  if (!input) throw ParseError("missing input record", line_no, "input");
  return ModelGraph(*input, std::move(layers), std::move(structures));
}

std::string format_model(const ModelGraph& model) {
  std::string out = fmt::format("{} {}\n", kMagic, kVersion);
  const Shape3 in = model.input_shape();
  out += fmt::format("input {} {} {}\n", in.c, in.h, in.w);
  for (const auto& l : model.layers()) {
    out += fmt::format("layer {} {}", l.id, to_string(l.kind));
    if (l.has_weights()) {
      out += fmt::format(" filters={} channels={}", l.filters, l.channels);
      if (l.kind == LayerKind::kConv) out += fmt::format(" kernel={}x{}", l.kh, l.kw);
    }
    if (l.stride != 1) out += fmt::format(" stride={}", l.stride);
    if (l.padding != 0) out += fmt::format(" pad={}", l.padding);
    if (l.size != 0) out += fmt::format(" size={}", l.size);
    if (l.factor != 0) out += fmt::format(" factor={}", l.factor);
    if (l.scalar) out += fmt::format(" scalar={:.17g}", *l.scalar);
    if (l.affine != AffineKind::kNone) out += fmt::format(" affine={}", to_string(l.affine));
    out += fmt::format(" inputs={}\n", fmt::join(l.inputs, ","));
  }
  for (const auto& st : model.structures()) {
    out += fmt::format("structure {} {} bytes={} branches=", st.id, to_string(st.kind), st.bytes);
    for (std::size_t b = 0; b < st.branches.size(); ++b) {
      if (b) out += '|';
      out += fmt::format("{}", fmt::join(st.branches[b], ","));
    }
    out += '\n';
  }
  return out;
}

ModelGraph load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

void save_model(const ModelGraph& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << format_model(model);
}

}  // namespace bpunch
