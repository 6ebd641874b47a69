#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bpunch/blocks.hpp"
#include "bpunch/mask.hpp"
#include "bpunch/weights.hpp"

namespace bpunch {

/// Largest block width the packed format accepts: local column indices and
/// per-block counts are single bytes.
inline constexpr std::size_t kMaxPackedBlockWidth = 255;

/// Punched layer in compact form. Blocks are stored band by band in
/// block_order, and inside a band by ascending block column. For every block
/// the kept local column indices follow each other in `indices`, and its
/// values in `values` column by column, each column holding the band's rows.
class PackedSparseLayer {
 public:
  PackedSparseLayer() = default;

  const std::string& layer_id() const { return layer_id_; }
  const WeightDims& dims() const { return dims_; }
  const BlockGrid& grid() const { return grid_; }
  std::size_t rows() const { return grid_.rows(); }
  std::size_t cols() const { return grid_.cols(); }

  /// block_order[p] is the band stored at position p.
  const std::vector<std::uint32_t>& block_order() const { return block_order_; }
  /// Per-block kept counts in storage order.
  const std::vector<std::uint8_t>& counts() const { return counts_; }
  const std::vector<std::uint8_t>& indices() const { return indices_; }
  const std::vector<float>& values() const { return values_; }

  /// Storage slot of block (position p, block column bc).
  std::size_t slot(std::size_t p, std::size_t bc) const { return p * grid_.block_cols() + bc; }
  std::size_t index_offset(std::size_t slot) const { return index_offsets_[slot]; }
  std::size_t value_offset(std::size_t slot) const { return value_offsets_[slot]; }

  /// Kept columns summed over all blocks.
  std::size_t kept_columns() const { return indices_.size(); }
  /// Multiplications one output column costs: Σ band rows · kept columns.
  std::size_t work_per_column() const { return values_.size(); }

  /// Bytes of metadata that locate the values: permutation, counts, indices.
  std::size_t index_bytes() const;

  friend bool operator==(const PackedSparseLayer& a, const PackedSparseLayer& b) {
    return a.layer_id_ == b.layer_id_ && a.dims_ == b.dims_ && a.grid_ == b.grid_ &&
           a.block_order_ == b.block_order_ && a.counts_ == b.counts_ && a.indices_ == b.indices_ &&
           a.values_ == b.values_;
  }

  friend PackedSparseLayer encode(const WeightTensor& weights, const PruneMask& mask);
  friend PackedSparseLayer reorder_blocks(const PackedSparseLayer& packed);
  friend PackedSparseLayer parse_packed(const std::vector<std::uint8_t>& bytes);

 private:
  void build_offsets();

  std::string layer_id_;
  WeightDims dims_;
  BlockGrid grid_;
  std::vector<std::uint32_t> block_order_;
  std::vector<std::uint8_t> counts_;
  std::vector<std::uint8_t> indices_;
  std::vector<float> values_;
  std::vector<std::size_t> index_offsets_;  // slot count + 1
  std::vector<std::size_t> value_offsets_;  // slot count + 1
};

/// Throws ShapeError when the mask does not match the weights or the block
/// width exceeds kMaxPackedBlockWidth.
PackedSparseLayer encode(const WeightTensor& weights, const PruneMask& mask);

/// Dense weights with zeros at punched positions.
WeightTensor decode(const PackedSparseLayer& packed);

/// The block mask the packed layer was built from.
PruneMask mask_of(const PackedSparseLayer& packed);

/// Bands sorted by descending total kept count, stable on ties.
PackedSparseLayer reorder_blocks(const PackedSparseLayer& packed);

/// Index bytes a CSR encoding with 32-bit row pointers and column indices
/// would need for the same non-zero pattern.
std::size_t csr_index_bytes(std::size_t rows, std::size_t nonzeros);

/// Binary layout, little-endian:
///   "BPCR" u32 version=1, u32 id_len, id bytes,
///   u32 M N Kh Kw, u32 gm gn,
///   u32 block_order[band count],
///   u8 counts[band count · block column count],
///   u8 indices[Σ counts],
///   f32 values[Σ counts · band rows]
std::vector<std::uint8_t> serialize_packed(const PackedSparseLayer& packed);
PackedSparseLayer parse_packed(const std::vector<std::uint8_t>& bytes);

using PackedModel = std::map<std::string, PackedSparseLayer>;

/// A packed model file is "BPCM" u32 version=1 u32 layer_count followed by
/// u64 byte length and the serialized layer for each layer.
std::vector<std::uint8_t> serialize_packed_model(const PackedModel& layers);
PackedModel parse_packed_model(const std::vector<std::uint8_t>& bytes);
void save_packed_model(const PackedModel& layers, const std::filesystem::path& path);
PackedModel load_packed_model(const std::filesystem::path& path);

}  // namespace bpunch
