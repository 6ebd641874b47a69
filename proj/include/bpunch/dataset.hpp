#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bpunch/graph.hpp"

namespace bpunch {

/// Labelled images, NCHW float32.
struct Dataset {
  Shape3 shape;
  std::vector<float> images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const float> image(std::size_t i) const {
    return std::span<const float>(images).subspan(i * shape.size(), shape.size());
  }
};

struct SyntheticSpec {
  std::size_t count = 1024;
  std::size_t classes = 2;
  Shape3 shape{1, 12, 12};
  /// Standard deviation of the additive noise; the signal amplitude is 1.
  double noise = 0.8;
};

/// Oriented gratings: class k varies along the direction at angle k·pi/classes
/// from the width axis, with random frequency and phase plus Gaussian noise.
/// Labels cycle so the classes are balanced to within one sample.
Dataset gen_synthetic(std::uint64_t seed, const SyntheticSpec& spec);

/// "BPDS" u32 version=1 u32 C H W u32 count, i32 labels[count], f32 images[]
std::vector<std::uint8_t> serialize_dataset(const Dataset& data);
Dataset parse_dataset(const std::vector<std::uint8_t>& bytes);
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace bpunch
