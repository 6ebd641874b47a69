#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bpunch/graph.hpp"

namespace bpunch {

struct WeightDims {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t kh = 1;
  std::size_t kw = 1;

  std::size_t count() const { return m * n * kh * kw; }
  std::size_t rows() const { return m; }
  std::size_t cols() const { return n * kh * kw; }
  friend bool operator==(const WeightDims&, const WeightDims&) = default;
};

WeightDims dims_of(const LayerSpec& layer);

/// Position of a GEMM-view column inside the 4-D kernel.
struct KernelPosition {
  std::size_t channel;
  std::size_t kh;
  std::size_t kw;
  friend bool operator==(const KernelPosition&, const KernelPosition&) = default;
};

/// Dense layer weights, row-major (M, N, Kh, Kw). Viewed as an M x C matrix
/// with C = N·Kh·Kw the storage is already row-major in that view.
struct WeightTensor {
  std::string layer_id;
  WeightDims dims;
  std::vector<float> values;
  std::vector<float> bias;  // per-filter bias, empty when the layer has none

  WeightTensor() = default;
  WeightTensor(std::string id, WeightDims d);
  WeightTensor(std::string id, WeightDims d, std::vector<float> v);

  std::size_t rows() const { return dims.rows(); }
  std::size_t cols() const { return dims.cols(); }
  float at(std::size_t row, std::size_t col) const { return values[row * cols() + col]; }
  float& at(std::size_t row, std::size_t col) { return values[row * cols() + col]; }

  KernelPosition position_of(std::size_t col) const;
  std::size_t column_of(KernelPosition pos) const;

  friend bool operator==(const WeightTensor&, const WeightTensor&) = default;
};

using WeightMap = std::map<std::string, WeightTensor>;

/// He-style uniform initialisation for every weight layer of the model.
WeightMap random_weights(const ModelGraph& model, std::uint64_t seed);

/// Binary weight file. Layout (all integers little-endian):
///   "BPWT" u32 version=1 u32 layer_count
///   per layer: u32 id_len, id bytes, u32 M N Kh Kw, f32[M·N·Kh·Kw],
///              u32 bias_count (0 or M), f32[bias_count]
void save_weights(const WeightMap& weights, const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_weights(const WeightMap& weights);

/// Reads a weight file and checks it against the model: every weight layer
/// present with matching dims, no extras.
WeightMap load_weights(const std::filesystem::path& path, const ModelGraph& model);
WeightMap parse_weights(const std::vector<std::uint8_t>& bytes);
void check_weights(const WeightMap& weights, const ModelGraph& model);

}  // namespace bpunch
