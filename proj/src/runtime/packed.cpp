#include "bpunch/packed.hpp"

#include <algorithm>
#include <numeric>

#include "bpunch/byte_io.hpp"
#include "bpunch/error.hpp"

namespace bpunch {

namespace {
constexpr std::string_view kLayerMagic = "BPCR";
constexpr std::string_view kModelMagic = "BPCM";
constexpr std::uint32_t kVersion = 1;
// Sanity bound on dimensions read from files; keeps a corrupt header from
// driving huge allocations.
constexpr std::uint32_t kMaxDim = 1u << 24;

std::uint32_t checked_dim(ByteReader& r, const char* field) {
  const std::uint32_t v = r.u32();
  if (v == 0 || v > kMaxDim) throw ParseError("dimension out of range", 0, field);
  return v;
}
}  // namespace

void PackedSparseLayer::build_offsets() {
  const std::size_t slots = counts_.size();
  index_offsets_.assign(slots + 1, 0);
  value_offsets_.assign(slots + 1, 0);
  for (std::size_t p = 0; p < grid_.block_rows(); ++p) {
    const std::size_t height = grid_.band_height(block_order_[p]);
    for (std::size_t bc = 0; bc < grid_.block_cols(); ++bc) {
      const std::size_t s = slot(p, bc);
      index_offsets_[s + 1] = index_offsets_[s] + counts_[s];
      value_offsets_[s + 1] = value_offsets_[s] + counts_[s] * height;
    }
  }
}

std::size_t PackedSparseLayer::index_bytes() const {
  return 4 * block_order_.size() + counts_.size() + indices_.size();
}

PackedSparseLayer encode(const WeightTensor& weights, const PruneMask& mask) {
  const BlockGrid& grid = mask.grid();
  if (weights.rows() != grid.rows() || weights.cols() != grid.cols())
    throw ShapeError("mask for '" + mask.layer_id() + "' does not match the weights of '" + weights.layer_id + "'");
  if (grid.config().gn > kMaxPackedBlockWidth)
    throw ShapeError("block width " + std::to_string(grid.config().gn) + " exceeds the packed limit of " +
                     std::to_string(kMaxPackedBlockWidth));

  PackedSparseLayer p;
  p.layer_id_ = weights.layer_id;
  p.dims_ = weights.dims;
  p.grid_ = grid;
  p.block_order_.resize(grid.block_rows());
  std::iota(p.block_order_.begin(), p.block_order_.end(), 0u);
  p.counts_.reserve(grid.block_count());
  for (std::size_t br = 0; br < grid.block_rows(); ++br) {
    for (std::size_t bc = 0; bc < grid.block_cols(); ++bc) {
      const BlockExtent e = grid.extent(br, bc);
      const auto& kept = mask.kept(br, bc);
      p.counts_.push_back(static_cast<std::uint8_t>(kept.size()));
      for (std::uint16_t local : kept) {
        p.indices_.push_back(static_cast<std::uint8_t>(local));
        for (std::size_t r = e.row0; r < e.row0 + e.rows; ++r) p.values_.push_back(weights.at(r, e.col0 + local));
      }
    }
  }
  p.build_offsets();
  return p;
}

WeightTensor decode(const PackedSparseLayer& packed) {
  const BlockGrid& grid = packed.grid();
  WeightTensor out(packed.layer_id(), packed.dims());
  for (std::size_t p = 0; p < grid.block_rows(); ++p) {
    const std::size_t br = packed.block_order()[p];
    for (std::size_t bc = 0; bc < grid.block_cols(); ++bc) {
      const BlockExtent e = grid.extent(br, bc);
      const std::size_t s = packed.slot(p, bc);
      const float* v = packed.values().data() + packed.value_offset(s);
      for (std::size_t i = packed.index_offset(s); i < packed.index_offset(s + 1); ++i) {
        const std::size_t col = e.col0 + packed.indices()[i];
        for (std::size_t r = 0; r < e.rows; ++r) out.at(e.row0 + r, col) = *v++;
      }
    }
  }
  return out;
}

PruneMask mask_of(const PackedSparseLayer& packed) {
  const BlockGrid& grid = packed.grid();
  PruneMask mask(packed.layer_id(), grid);
  for (std::size_t p = 0; p < grid.block_rows(); ++p) {
    for (std::size_t bc = 0; bc < grid.block_cols(); ++bc) {
      const std::size_t s = packed.slot(p, bc);
      std::vector<std::uint16_t> kept(packed.indices().begin() + static_cast<std::ptrdiff_t>(packed.index_offset(s)),
                                      packed.indices().begin() + static_cast<std::ptrdiff_t>(packed.index_offset(s + 1)));
      mask.set_kept(packed.block_order()[p], bc, std::move(kept));
    }
  }
  return mask;
}

PackedSparseLayer reorder_blocks(const PackedSparseLayer& packed) {
  const BlockGrid& grid = packed.grid();
  const std::size_t bands = grid.block_rows();
  std::vector<std::size_t> totals(bands, 0);  // by storage position
  for (std::size_t p = 0; p < bands; ++p)
    for (std::size_t bc = 0; bc < grid.block_cols(); ++bc) totals[p] += packed.counts()[packed.slot(p, bc)];

  // Positions sorted by descending count; ties keep the lower band index
  // first so the result does not depend on the incoming order.
  std::vector<std::size_t> pos(bands);
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) {
    if (totals[a] != totals[b]) return totals[a] > totals[b];
    return packed.block_order()[a] < packed.block_order()[b];
  });

  PackedSparseLayer out;
  out.layer_id_ = packed.layer_id_;
  out.dims_ = packed.dims_;
  out.grid_ = grid;
  out.counts_.reserve(packed.counts_.size());
  out.indices_.reserve(packed.indices_.size());
  out.values_.reserve(packed.values_.size());
  for (std::size_t from : pos) {
    out.block_order_.push_back(packed.block_order_[from]);
    const std::size_t first = packed.slot(from, 0), last = packed.slot(from, grid.block_cols());
    out.counts_.insert(out.counts_.end(), packed.counts_.begin() + static_cast<std::ptrdiff_t>(first),
                       packed.counts_.begin() + static_cast<std::ptrdiff_t>(last));
    out.indices_.insert(out.indices_.end(),
                        packed.indices_.begin() + static_cast<std::ptrdiff_t>(packed.index_offsets_[first]),
                        packed.indices_.begin() + static_cast<std::ptrdiff_t>(packed.index_offsets_[last]));
    out.values_.insert(out.values_.end(),
                       packed.values_.begin() + static_cast<std::ptrdiff_t>(packed.value_offsets_[first]),
                       packed.values_.begin() + static_cast<std::ptrdiff_t>(packed.value_offsets_[last]));
  }
  out.build_offsets();
  return out;
}

std::size_t csr_index_bytes(std::size_t rows, std::size_t nonzeros) { return 4 * (rows + 1) + 4 * nonzeros; }

std::vector<std::uint8_t> serialize_packed(const PackedSparseLayer& packed) {
  ByteWriter w;
  w.magic(kLayerMagic);
  w.u32(kVersion);
  w.str(packed.layer_id());
  const WeightDims& d = packed.dims();
  for (std::size_t v : {d.m, d.n, d.kh, d.kw}) w.u32(static_cast<std::uint32_t>(v));
  w.u32(static_cast<std::uint32_t>(packed.grid().config().gm));
  w.u32(static_cast<std::uint32_t>(packed.grid().config().gn));
  for (std::uint32_t b : packed.block_order()) w.u32(b);
  w.bytes(packed.counts());
  w.bytes(packed.indices());
  for (float v : packed.values()) w.f32(v);
  return w.take();
}

PackedSparseLayer parse_packed(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.expect_magic(kLayerMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw ParseError("unsupported packed layer version " + std::to_string(version));

  PackedSparseLayer p;
  p.layer_id_ = r.str();
  p.dims_.m = checked_dim(r, "M");
  p.dims_.n = checked_dim(r, "N");
  p.dims_.kh = checked_dim(r, "Kh");
  p.dims_.kw = checked_dim(r, "Kw");
  BlockConfig cfg;
  cfg.gm = checked_dim(r, "gm");
  cfg.gn = checked_dim(r, "gn");
  if (cfg.gn > kMaxPackedBlockWidth) throw ParseError("block width exceeds the packed limit", 0, "gn");
  p.grid_ = BlockGrid(p.dims_.rows(), p.dims_.cols(), cfg);
  const BlockGrid& grid = p.grid_;

  if (r.remaining() / 4 < grid.block_rows()) throw ParseError("unexpected end of data", 0, "block_order");
  std::vector<bool> seen(grid.block_rows(), false);
  for (std::size_t i = 0; i < grid.block_rows(); ++i) {
    const std::uint32_t b = r.u32();
    if (b >= grid.block_rows() || seen[b]) throw ParseError("not a permutation of the bands", 0, "block_order");
    seen[b] = true;
    p.block_order_.push_back(b);
  }

  const auto counts = r.bytes(grid.block_count());
  p.counts_.assign(counts.begin(), counts.end());
  std::size_t total_idx = 0;
  for (std::size_t pos = 0; pos < grid.block_rows(); ++pos)
    for (std::size_t bc = 0; bc < grid.block_cols(); ++bc) {
      const std::uint8_t c = p.counts_[p.slot(pos, bc)];
      if (c > grid.block_width(bc)) throw ParseError("kept count exceeds block width", 0, "counts");
      total_idx += c;
    }

  const auto idx = r.bytes(total_idx);
  p.indices_.assign(idx.begin(), idx.end());
  p.build_offsets();
  for (std::size_t pos = 0; pos < grid.block_rows(); ++pos)
    for (std::size_t bc = 0; bc < grid.block_cols(); ++bc) {
      const std::size_t s = p.slot(pos, bc);
      for (std::size_t i = p.index_offsets_[s]; i < p.index_offsets_[s + 1]; ++i) {
        if (p.indices_[i] >= grid.block_width(bc)) throw ParseError("column index outside block", 0, "indices");
        if (i > p.index_offsets_[s] && p.indices_[i] <= p.indices_[i - 1])
          throw ParseError("column indices not strictly increasing", 0, "indices");
      }
    }

  const std::size_t nvalues = p.value_offsets_.back();
  if (r.remaining() != 4 * nvalues)
    throw ParseError("expected " + std::to_string(nvalues) + " values, found " + std::to_string(r.remaining()) +
                         " bytes",
                     0, "values");
  p.values_.resize(nvalues);
  for (auto& v : p.values_) v = r.f32();
  return p;
}

std::vector<std::uint8_t> serialize_packed_model(const PackedModel& layers) {
  ByteWriter w;
  w.magic(kModelMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto& [id, layer] : layers) {
    const auto bytes = serialize_packed(layer);
    w.u64(bytes.size());
    w.bytes(bytes);
  }
  return w.take();
}

PackedModel parse_packed_model(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.expect_magic(kModelMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw ParseError("unsupported packed model version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  PackedModel out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint64_t n = r.u64();
    if (n > r.remaining()) throw ParseError("unexpected end of data");
    const auto span = r.bytes(static_cast<std::size_t>(n));
    PackedSparseLayer layer = parse_packed(std::vector<std::uint8_t>(span.begin(), span.end()));
    const std::string id = layer.layer_id();
    if (!out.emplace(id, std::move(layer)).second) throw ParseError("duplicate layer '" + id + "'");
  }
  if (!r.at_end()) throw ParseError("trailing bytes after the last layer");
  return out;
}

void save_packed_model(const PackedModel& layers, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_packed_model(layers));
}

PackedModel load_packed_model(const std::filesystem::path& path) { return parse_packed_model(read_file_bytes(path)); }

}  // namespace bpunch
