#include "bpunch/blocks.hpp"

#include <charconv>

#include "bpunch/error.hpp"

namespace bpunch {

BlockConfig parse_block_config(std::string_view text) {
  const auto x = text.find('x');
  if (x == std::string_view::npos) throw ParseError("block config must be GMxGN, got '" + std::string(text) + "'");
  BlockConfig cfg;
  const auto parse = [&](std::string_view part, std::size_t& out) {
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
    if (ec != std::errc() || ptr != part.data() + part.size() || out == 0)
      throw ParseError("bad block dimension '" + std::string(part) + "'");
  };
  parse(text.substr(0, x), cfg.gm);
  parse(text.substr(x + 1), cfg.gn);
  return cfg;
}

std::string to_string(BlockConfig cfg) { return std::to_string(cfg.gm) + "x" + std::to_string(cfg.gn); }

BlockGrid::BlockGrid(std::size_t rows, std::size_t cols, BlockConfig cfg)
    : rows_(rows),
      cols_(cols),
      cfg_(cfg),
      block_rows_(cfg.gm ? (rows + cfg.gm - 1) / cfg.gm : 0),
      block_cols_(cfg.gn ? (cols + cfg.gn - 1) / cfg.gn : 0) {
  if (cfg.gm == 0 || cfg.gn == 0) throw ShapeError("block dimensions must be >= 1");
}

std::size_t BlockGrid::band_height(std::size_t br) const {
  const std::size_t r0 = br * cfg_.gm;
  return std::min(cfg_.gm, rows_ - r0);
}

std::size_t BlockGrid::block_width(std::size_t bc) const {
  const std::size_t c0 = bc * cfg_.gn;
  return std::min(cfg_.gn, cols_ - c0);
}

BlockExtent BlockGrid::extent(std::size_t br, std::size_t bc) const {
  return {br * cfg_.gm, band_height(br), bc * cfg_.gn, block_width(bc)};
}

BlockGrid partition_blocks(const WeightTensor& weights, BlockConfig cfg) {
  return BlockGrid(weights.rows(), weights.cols(), cfg);
}

GroupNorms group_norms(const WeightTensor& weights, BlockConfig cfg) {
  GroupNorms out{partition_blocks(weights, cfg), {}};
  const std::size_t cols = weights.cols();
  out.values.assign(out.grid.block_rows() * cols, 0.0);
  for (std::size_t r = 0; r < weights.rows(); ++r) {
    double* band = out.values.data() + (r / cfg.gm) * cols;
    const float* row = weights.values.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = row[c];
      band[c] += v * v;
    }
  }
  return out;
}

}  // namespace bpunch
