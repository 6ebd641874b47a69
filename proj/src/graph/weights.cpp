#include "bpunch/weights.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <set>

#include "bpunch/byte_io.hpp"
#include "bpunch/error.hpp"

namespace bpunch {

namespace {
constexpr std::string_view kMagic = "BPWT";
constexpr std::uint32_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to '" + path.string() + "'");
}

WeightDims dims_of(const LayerSpec& layer) {
  if (!layer.has_weights()) throw ShapeError("layer '" + layer.id + "' has no weights");
  return {layer.filters, layer.channels, layer.kh, layer.kw};
}

WeightTensor::WeightTensor(std::string id, WeightDims d)
    : layer_id(std::move(id)), dims(d), values(d.count(), 0.0f) {}

WeightTensor::WeightTensor(std::string id, WeightDims d, std::vector<float> v)
    : layer_id(std::move(id)), dims(d), values(std::move(v)) {
  if (values.size() != dims.count())
    throw ShapeError("weights for '" + layer_id + "': " + std::to_string(values.size()) + " values, expected " +
                     std::to_string(dims.count()));
}

KernelPosition WeightTensor::position_of(std::size_t col) const {
  const std::size_t area = dims.kh * dims.kw;
  return {col / area, (col % area) / dims.kw, col % dims.kw};
}

std::size_t WeightTensor::column_of(KernelPosition pos) const {
  return (pos.channel * dims.kh + pos.kh) * dims.kw + pos.kw;
}

WeightMap random_weights(const ModelGraph& model, std::uint64_t seed) {
  WeightMap out;
  std::mt19937_64 rng(seed);
  for (const auto& layer : model.layers()) {
    if (!layer.has_weights()) continue;
    WeightTensor w(layer.id, dims_of(layer));
    const float bound = std::sqrt(6.0f / static_cast<float>(w.cols()));
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (auto& v : w.values) v = dist(rng);
    out.emplace(layer.id, std::move(w));
  }
  return out;
}

std::vector<std::uint8_t> serialize_weights(const WeightMap& weights) {
  ByteWriter w;
  w.magic(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(weights.size()));
  for (const auto& [id, t] : weights) {
    if (t.values.size() != t.dims.count()) throw ShapeError("weights for '" + id + "' have inconsistent length");
    w.str(id);
    w.u32(static_cast<std::uint32_t>(t.dims.m));
    w.u32(static_cast<std::uint32_t>(t.dims.n));
    w.u32(static_cast<std::uint32_t>(t.dims.kh));
    w.u32(static_cast<std::uint32_t>(t.dims.kw));
    for (float v : t.values) w.f32(v);
    if (!t.bias.empty() && t.bias.size() != t.dims.m) throw ShapeError("bias for '" + id + "' must have M entries");
    w.u32(static_cast<std::uint32_t>(t.bias.size()));
    for (float v : t.bias) w.f32(v);
  }
  return w.take();
}

void save_weights(const WeightMap& weights, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_weights(weights));
}

WeightMap parse_weights(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.expect_magic(kMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw ParseError("unsupported weight file version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  WeightMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string id = r.str();
    WeightDims d;
    d.m = r.u32();
    d.n = r.u32();
    d.kh = r.u32();
    d.kw = r.u32();
    const std::size_t n = d.count();
    if (n * 4 > r.remaining())
      throw ParseError("length mismatch for '" + id + "': header declares " + std::to_string(n) + " values");
    std::vector<float> values(n);
    for (auto& v : values) v = r.f32();
    const std::uint32_t nbias = r.u32();
    if (nbias != 0 && nbias != d.m) throw ParseError("length mismatch for '" + id + "': bias count " + std::to_string(nbias));
    if (std::size_t{nbias} * 4 > r.remaining()) throw ParseError("length mismatch for '" + id + "': truncated bias");
    std::vector<float> bias(nbias);
    for (auto& v : bias) v = r.f32();
    if (out.count(id)) throw ParseError("duplicate layer '" + id + "' in weight file");
    WeightTensor t(id, d, std::move(values));
    t.bias = std::move(bias);
    out.emplace(id, std::move(t));
  }
  if (!r.at_end()) throw ParseError("length mismatch: " + std::to_string(r.remaining()) + " trailing bytes");
  return out;
}

void check_weights(const WeightMap& weights, const ModelGraph& model) {
  std::set<std::string> expected;
  for (const auto& layer : model.layers()) {
    if (!layer.has_weights()) continue;
    expected.insert(layer.id);
    const auto it = weights.find(layer.id);
    if (it == weights.end()) throw ShapeError("no weights for layer '" + layer.id + "'");
    if (it->second.dims != dims_of(layer)) throw ShapeError("weight dims for '" + layer.id + "' do not match model");
  }
  for (const auto& [id, _] : weights)
    if (!expected.count(id)) throw ShapeError("weights for unknown layer '" + id + "'");
}

WeightMap load_weights(const std::filesystem::path& path, const ModelGraph& model) {
  auto out = parse_weights(read_file_bytes(path));
  check_weights(out, model);
  return out;
}

}  // namespace bpunch
