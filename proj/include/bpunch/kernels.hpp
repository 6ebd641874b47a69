#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "bpunch/graph.hpp"
#include "bpunch/packed.hpp"

namespace bpunch {

/// Row-major float matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}
  float* row(std::size_t r) { return data.data() + r * cols; }
  const float* row(std::size_t r) const { return data.data() + r * cols; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// CHW float feature map.
struct FeatureMap {
  Shape3 shape;
  std::vector<float> data;

  FeatureMap() = default;
  explicit FeatureMap(Shape3 s) : shape(s), data(s.size(), 0.0f) {}
  FeatureMap(Shape3 s, std::vector<float> d);
};

/// Execution parameters of the sparse kernel. row_tile counts bands handed
/// to a worker at once, col_tile the output columns processed per pass.
struct TuningConfig {
  std::size_t row_tile = 1;
  std::size_t col_tile = 64;
  std::size_t workers = 1;

  friend bool operator==(const TuningConfig&, const TuningConfig&) = default;
};

/// Clamps tiles into [1, dims] and workers to at least 1.
TuningConfig clamp(TuningConfig cfg, std::size_t bands, std::size_t cols);

struct KernelStats {
  std::uint64_t multiplies = 0;
};

/// Y = decode(packed) · X for X of shape C x B. Only kept columns are read.
/// Every output element accumulates its products in ascending column order,
/// so results do not depend on block order, tiling or worker count.
/// OpenMP over band tiles. Throws ShapeError on a dimension mismatch.
Matrix sparse_gemm(const PackedSparseLayer& packed, const Matrix& x, const TuningConfig& tuning = {},
                   KernelStats* stats = nullptr);

/// Single-threaded version of the same computation, without tiling.
Matrix sparse_gemm_reference(const PackedSparseLayer& packed, const Matrix& x, KernelStats* stats = nullptr);

/// Lowers x to a (N·Kh·Kw) x (Hout·Wout) matrix whose row order matches the
/// GEMM view of the weights. Rows marked false in `needed` are left zero.
Matrix im2col(const FeatureMap& x, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t padding,
              const std::vector<bool>* needed = nullptr);

/// Convolution with a packed layer via im2col and sparse_gemm.
FeatureMap sparse_conv(const PackedSparseLayer& packed, const FeatureMap& x, std::size_t stride, std::size_t padding,
                       const TuningConfig& tuning = {}, KernelStats* stats = nullptr);

/// Columns of the GEMM view kept in at least one band.
std::vector<bool> used_columns(const PackedSparseLayer& packed);

}  // namespace bpunch
