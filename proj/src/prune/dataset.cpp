#include "bpunch/dataset.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "bpunch/byte_io.hpp"
#include "bpunch/error.hpp"

namespace bpunch {

namespace {
constexpr std::string_view kMagic = "BPDS";
constexpr std::uint32_t kVersion = 1;
}  // namespace

Dataset gen_synthetic(std::uint64_t seed, const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ShapeError("synthetic data needs at least two classes");
  Dataset d;
  d.shape = spec.shape;
  d.images.resize(spec.count * spec.shape.size());
  d.labels.resize(spec.count);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> freq(0.6, 1.6);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, spec.noise);

  const Shape3 s = spec.shape;
  for (std::size_t i = 0; i < spec.count; ++i) {
    const int label = static_cast<int>(i % spec.classes);
    d.labels[i] = label;
    const double theta = std::numbers::pi * label / static_cast<double>(spec.classes);
    const double cx = std::cos(theta), cy = std::sin(theta);
    const double f = freq(rng);
    float* img = d.images.data() + i * s.size();
    for (std::size_t c = 0; c < s.c; ++c) {
      const double p = phase(rng);
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
          const double t = cx * static_cast<double>(x) + cy * static_cast<double>(y);
          img[(c * s.h + y) * s.w + x] = static_cast<float>(std::sin(f * t + p) + noise(rng));
        }
    }
  }
  return d;
}

std::vector<std::uint8_t> serialize_dataset(const Dataset& data) {
  ByteWriter w;
  w.magic(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(data.shape.c));
  w.u32(static_cast<std::uint32_t>(data.shape.h));
  w.u32(static_cast<std::uint32_t>(data.shape.w));
  w.u32(static_cast<std::uint32_t>(data.size()));
  for (int l : data.labels) w.u32(static_cast<std::uint32_t>(l));
  for (float v : data.images) w.f32(v);
  return w.take();
}

Dataset parse_dataset(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.expect_magic(kMagic);
  if (r.u32() != kVersion) throw ParseError("unsupported dataset version");
  Dataset d;
  d.shape.c = r.u32();
  d.shape.h = r.u32();
  d.shape.w = r.u32();
  const std::size_t n = r.u32();
  if (r.remaining() != n * 4 + n * d.shape.size() * 4) throw ParseError("dataset length mismatch");
  d.labels.resize(n);
  for (auto& l : d.labels) l = static_cast<int>(r.u32());
  d.images.resize(n * d.shape.size());
  for (auto& v : d.images) v = r.f32();
  return d;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_dataset(data));
}

Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file_bytes(path)); }

}  // namespace bpunch
