#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "bpunch/weights.hpp"

namespace bpunch {

/// Block shape in the GEMM view: gm consecutive filters by gn consecutive
/// columns.
struct BlockConfig {
  std::size_t gm = 8;
  std::size_t gn = 4;

  friend bool operator==(const BlockConfig&, const BlockConfig&) = default;
};

/// Parses "8x4". Throws ParseError.
BlockConfig parse_block_config(std::string_view text);
std::string to_string(BlockConfig cfg);

struct BlockExtent {
  std::size_t row0;
  std::size_t rows;
  std::size_t col0;
  std::size_t cols;
};

/// Partition of an M x C matrix into blocks. Edge blocks are smaller when the
/// dimensions are not multiples of the block shape; nothing is padded.
class BlockGrid {
 public:
  BlockGrid() = default;
  BlockGrid(std::size_t rows, std::size_t cols, BlockConfig cfg);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  BlockConfig config() const { return cfg_; }
  std::size_t block_rows() const { return block_rows_; }
  std::size_t block_cols() const { return block_cols_; }
  std::size_t block_count() const { return block_rows_ * block_cols_; }

  std::size_t block_index(std::size_t br, std::size_t bc) const { return br * block_cols_ + bc; }
  BlockExtent extent(std::size_t br, std::size_t bc) const;
  std::size_t band_height(std::size_t br) const;
  std::size_t block_width(std::size_t bc) const;

  friend bool operator==(const BlockGrid&, const BlockGrid&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  BlockConfig cfg_{};
  std::size_t block_rows_ = 0;
  std::size_t block_cols_ = 0;
};

BlockGrid partition_blocks(const WeightTensor& weights, BlockConfig cfg);

/// Squared Frobenius norm of every block column. A group is identified by
/// its row band and its global column: value(br, c).
struct GroupNorms {
  BlockGrid grid;
  std::vector<double> values;  // block_rows x cols, row-major

  double at(std::size_t br, std::size_t col) const { return values[br * grid.cols() + col]; }
  std::size_t size() const { return values.size(); }
};

GroupNorms group_norms(const WeightTensor& weights, BlockConfig cfg);

}  // namespace bpunch
