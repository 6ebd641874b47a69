#include "bpunch/kernels.hpp"

#include <algorithm>

#include "bpunch/error.hpp"

namespace bpunch {

FeatureMap::FeatureMap(Shape3 s, std::vector<float> d) : shape(s), data(std::move(d)) {
  if (data.size() != shape.size()) throw ShapeError("feature map data does not match its shape");
}

TuningConfig clamp(TuningConfig cfg, std::size_t bands, std::size_t cols) {
  cfg.row_tile = std::clamp<std::size_t>(cfg.row_tile, 1, std::max<std::size_t>(bands, 1));
  cfg.col_tile = std::clamp<std::size_t>(cfg.col_tile, 1, std::max<std::size_t>(cols, 1));
  cfg.workers = std::max<std::size_t>(cfg.workers, 1);
  return cfg;
}

namespace {

void check_input(const PackedSparseLayer& packed, const Matrix& x) {
  if (x.rows != packed.cols())
    throw ShapeError("layer '" + packed.layer_id() + "' expects " + std::to_string(packed.cols()) +
                     " input rows, got " + std::to_string(x.rows));
  if (x.data.size() != x.rows * x.cols) throw ShapeError("input matrix data does not match its shape");
}

// Accumulates the bands at storage positions [p0, p1) into y for output
// columns [j0, j1). Returns the multiply count.
std::uint64_t band_kernel(const PackedSparseLayer& packed, const Matrix& x, Matrix& y, std::size_t p0, std::size_t p1,
                          std::size_t j0, std::size_t j1) {
  const BlockGrid& grid = packed.grid();
  const std::size_t gn = grid.config().gn;
  const std::uint8_t* idx = packed.indices().data();
  const float* vals = packed.values().data();
  const std::size_t width = j1 - j0;
  std::uint64_t mults = 0;
  for (std::size_t p = p0; p < p1; ++p) {
    const std::size_t br = packed.block_order()[p];
    const std::size_t row0 = br * grid.config().gm;
    const std::size_t height = grid.band_height(br);
    for (std::size_t bc = 0; bc < grid.block_cols(); ++bc) {
      const std::size_t s = packed.slot(p, bc);
      const float* w = vals + packed.value_offset(s);
      for (std::size_t i = packed.index_offset(s); i < packed.index_offset(s + 1); ++i, w += height) {
        const float* xr = x.row(bc * gn + idx[i]) + j0;
        for (std::size_t r = 0; r < height; ++r) {
          const float wv = w[r];
          float* yr = y.row(row0 + r) + j0;
          for (std::size_t j = 0; j < width; ++j) yr[j] += wv * xr[j];
        }
        mults += height * width;
      }
    }
  }
  return mults;
}

}  // namespace

Matrix sparse_gemm(const PackedSparseLayer& packed, const Matrix& x, const TuningConfig& tuning, KernelStats* stats) {
  check_input(packed, x);
  Matrix y(packed.rows(), x.cols);
  const std::size_t bands = packed.grid().block_rows();
  const TuningConfig t = clamp(tuning, bands, x.cols);
  const std::size_t row_tiles = (bands + t.row_tile - 1) / t.row_tile;
  const std::size_t col_tiles = x.cols == 0 ? 0 : (x.cols + t.col_tile - 1) / t.col_tile;
  const auto tasks = static_cast<std::ptrdiff_t>(row_tiles * col_tiles);

  // Tasks own disjoint (band tile, column tile) regions of y.
  std::uint64_t mults = 0;
#pragma omp parallel for num_threads(static_cast<int>(t.workers)) schedule(dynamic) reduction(+ : mults)
  for (std::ptrdiff_t task = 0; task < tasks; ++task) {
    const std::size_t rt = static_cast<std::size_t>(task) / col_tiles;
    const std::size_t ct = static_cast<std::size_t>(task) % col_tiles;
    const std::size_t p0 = rt * t.row_tile, p1 = std::min(bands, p0 + t.row_tile);
    const std::size_t j0 = ct * t.col_tile, j1 = std::min(x.cols, j0 + t.col_tile);
    mults += band_kernel(packed, x, y, p0, p1, j0, j1);
  }
  if (stats) stats->multiplies += mults;
  return y;
}

Matrix sparse_gemm_reference(const PackedSparseLayer& packed, const Matrix& x, KernelStats* stats) {
  check_input(packed, x);
  Matrix y(packed.rows(), x.cols);
  const BlockGrid& grid = packed.grid();
  std::uint64_t mults = 0;
  for (std::size_t p = 0; p < grid.block_rows(); ++p) {
    const std::size_t br = packed.block_order()[p];
    for (std::size_t bc = 0; bc < grid.block_cols(); ++bc) {
      const BlockExtent e = grid.extent(br, bc);
      const std::size_t s = packed.slot(p, bc);
      for (std::size_t i = packed.index_offset(s); i < packed.index_offset(s + 1); ++i) {
        const std::size_t col = e.col0 + packed.indices()[i];
        const std::size_t k = i - packed.index_offset(s);
        for (std::size_t r = 0; r < e.rows; ++r) {
          const float w = packed.values()[packed.value_offset(s) + k * e.rows + r];
          for (std::size_t j = 0; j < x.cols; ++j) {
            y.data[(e.row0 + r) * y.cols + j] += w * x.data[col * x.cols + j];
            ++mults;
          }
        }
      }
    }
  }
  if (stats) stats->multiplies += mults;
  return y;
}

Matrix im2col(const FeatureMap& x, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t padding,
              const std::vector<bool>* needed) {
  const Shape3 s = x.shape;
  if (kh == 0 || kw == 0 || stride == 0) throw ShapeError("im2col needs positive kernel and stride");
  if (s.h + 2 * padding < kh || s.w + 2 * padding < kw) throw ShapeError("kernel larger than padded input");
  const std::size_t ho = (s.h + 2 * padding - kh) / stride + 1;
  const std::size_t wo = (s.w + 2 * padding - kw) / stride + 1;
  Matrix out(s.c * kh * kw, ho * wo);
  if (needed && needed->size() != out.rows) throw ShapeError("im2col row selection has the wrong length");
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t c = 0; c < s.c; ++c)
    for (std::size_t i = 0; i < kh; ++i)
      for (std::size_t j = 0; j < kw; ++j) {
        const std::size_t row = (c * kh + i) * kw + j;
        if (needed && !(*needed)[row]) continue;
        float* dst = out.row(row);
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * stride + i) - pad;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(s.h)) continue;
          const float* src = x.data.data() + (c * s.h + static_cast<std::size_t>(ih)) * s.w;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * stride + j) - pad;
            if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(s.w)) dst[oh * wo + ow] = src[iw];
          }
        }
      }
  return out;
}

std::vector<bool> used_columns(const PackedSparseLayer& packed) {
  const BlockGrid& grid = packed.grid();
  std::vector<bool> used(grid.cols(), false);
  for (std::size_t p = 0; p < grid.block_rows(); ++p)
    for (std::size_t bc = 0; bc < grid.block_cols(); ++bc) {
      const std::size_t s = packed.slot(p, bc);
      for (std::size_t i = packed.index_offset(s); i < packed.index_offset(s + 1); ++i)
        used[bc * grid.config().gn + packed.indices()[i]] = true;
    }
  return used;
}

FeatureMap sparse_conv(const PackedSparseLayer& packed, const FeatureMap& x, std::size_t stride, std::size_t padding,
                       const TuningConfig& tuning, KernelStats* stats) {
  const WeightDims& d = packed.dims();
  if (x.shape.c != d.n)
    throw ShapeError("layer '" + packed.layer_id() + "' expects " + std::to_string(d.n) + " input channels, got " +
                     std::to_string(x.shape.c));
  const std::vector<bool> used = used_columns(packed);
  const Matrix cols = im2col(x, d.kh, d.kw, stride, padding, &used);
  const std::size_t ho = (x.shape.h + 2 * padding - d.kh) / stride + 1;
  const std::size_t wo = (x.shape.w + 2 * padding - d.kw) / stride + 1;
  Matrix y = sparse_gemm(packed, cols, tuning, stats);
  return FeatureMap({d.m, ho, wo}, std::move(y.data));
}

}  // namespace bpunch
