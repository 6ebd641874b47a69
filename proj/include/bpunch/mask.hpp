#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "bpunch/blocks.hpp"

namespace bpunch {

/// Elementwise keep mask over the GEMM view (1 = kept).
struct ElementMask {
  std::string layer_id;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> keep;

  bool kept(std::size_t r, std::size_t c) const { return keep[r * cols + c] != 0; }
  std::size_t kept_count() const;
};

/// Block-punched mask: for every block, the local indices of the columns
/// that survive. A column is kept or punched for all rows of its block.
class PruneMask {
 public:
  PruneMask() = default;
  PruneMask(std::string layer_id, BlockGrid grid);

  /// Mask that keeps everything.
  static PruneMask full(std::string layer_id, BlockGrid grid);

  const std::string& layer_id() const { return layer_id_; }
  const BlockGrid& grid() const { return grid_; }

  const std::vector<std::uint16_t>& kept(std::size_t br, std::size_t bc) const {
    return kept_[grid_.block_index(br, bc)];
  }
  /// Replaces the kept list of a block; indices must be strictly increasing
  /// and inside the block.
  void set_kept(std::size_t br, std::size_t bc, std::vector<std::uint16_t> local_cols);

  bool is_kept(std::size_t row, std::size_t col) const;
  std::size_t kept_columns() const;  // groups kept, over all blocks
  std::size_t kept_weights() const;
  std::size_t total_weights() const { return grid_.rows() * grid_.cols(); }

  ElementMask to_elements() const;
  void apply(WeightTensor& weights) const;

  friend bool operator==(const PruneMask&, const PruneMask&) = default;

 private:
  std::string layer_id_;
  BlockGrid grid_;
  std::vector<std::vector<std::uint16_t>> kept_;
};

using MaskSet = std::map<std::string, PruneMask>;

/// True when, inside every block of the grid, each column is either kept for
/// all rows or pruned for all rows.
bool punched_uniform(const ElementMask& mask, BlockConfig cfg);

/// Elementwise mask of the non-zero weights.
ElementMask nonzero_mask(const WeightTensor& weights);

void apply(const ElementMask& mask, WeightTensor& weights);

/// Text mask file:
///   bpmask 1
///   layer <id> rows=<M> cols=<C> block=<gm>x<gn>
///   <br> <bc>: <kept local indices...>     (one line per block)
///   end
std::string format_masks(const MaskSet& masks);
MaskSet parse_masks(std::string_view text);
void save_masks(const MaskSet& masks, const std::filesystem::path& path);
MaskSet load_masks(const std::filesystem::path& path);

}  // namespace bpunch
