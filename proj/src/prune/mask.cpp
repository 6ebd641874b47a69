#include "bpunch/mask.hpp"

#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include "bpunch/error.hpp"

namespace bpunch {

std::size_t ElementMask::kept_count() const {
  return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{1}));
}

PruneMask::PruneMask(std::string layer_id, BlockGrid grid)
    : layer_id_(std::move(layer_id)), grid_(grid), kept_(grid.block_count()) {}

PruneMask PruneMask::full(std::string layer_id, BlockGrid grid) {
  PruneMask m(std::move(layer_id), grid);
  for (std::size_t br = 0; br < grid.block_rows(); ++br) {
    for (std::size_t bc = 0; bc < grid.block_cols(); ++bc) {
      std::vector<std::uint16_t> all(grid.block_width(bc));
      std::iota(all.begin(), all.end(), std::uint16_t{0});
      m.kept_[grid.block_index(br, bc)] = std::move(all);
    }
  }
  return m;
}

void PruneMask::set_kept(std::size_t br, std::size_t bc, std::vector<std::uint16_t> local_cols) {
  const std::size_t width = grid_.block_width(bc);
  for (std::size_t i = 0; i < local_cols.size(); ++i) {
    if (local_cols[i] >= width) throw ShapeError("mask column index outside block");
    if (i > 0 && local_cols[i] <= local_cols[i - 1]) throw ShapeError("mask column indices must be strictly increasing");
  }
  kept_[grid_.block_index(br, bc)] = std::move(local_cols);
}

bool PruneMask::is_kept(std::size_t row, std::size_t col) const {
  const BlockConfig cfg = grid_.config();
  const auto& k = kept(row / cfg.gm, col / cfg.gn);
  const auto local = static_cast<std::uint16_t>(col % cfg.gn);
  return std::binary_search(k.begin(), k.end(), local);
}

std::size_t PruneMask::kept_columns() const {
  std::size_t n = 0;
  for (const auto& k : kept_) n += k.size();
  return n;
}

std::size_t PruneMask::kept_weights() const {
  std::size_t n = 0;
  for (std::size_t br = 0; br < grid_.block_rows(); ++br)
    for (std::size_t bc = 0; bc < grid_.block_cols(); ++bc) n += kept(br, bc).size() * grid_.band_height(br);
  return n;
}

ElementMask PruneMask::to_elements() const {
  ElementMask out{layer_id_, grid_.rows(), grid_.cols(), std::vector<std::uint8_t>(grid_.rows() * grid_.cols(), 0)};
  for (std::size_t br = 0; br < grid_.block_rows(); ++br) {
    for (std::size_t bc = 0; bc < grid_.block_cols(); ++bc) {
      const BlockExtent e = grid_.extent(br, bc);
      for (std::uint16_t local : kept(br, bc))
        for (std::size_t r = e.row0; r < e.row0 + e.rows; ++r) out.keep[r * out.cols + e.col0 + local] = 1;
    }
  }
  return out;
}

void PruneMask::apply(WeightTensor& weights) const {
  if (weights.rows() != grid_.rows() || weights.cols() != grid_.cols())
    throw ShapeError("mask for '" + layer_id_ + "' does not match weight dims");
  bpunch::apply(to_elements(), weights);
}

void apply(const ElementMask& mask, WeightTensor& weights) {
  if (weights.rows() != mask.rows || weights.cols() != mask.cols)
    throw ShapeError("mask for '" + mask.layer_id + "' does not match weight dims");
  for (std::size_t i = 0; i < mask.keep.size(); ++i)
    if (!mask.keep[i]) weights.values[i] = 0.0f;
}

bool punched_uniform(const ElementMask& mask, BlockConfig cfg) {
  const BlockGrid grid(mask.rows, mask.cols, cfg);
  for (std::size_t br = 0; br < grid.block_rows(); ++br) {
    for (std::size_t bc = 0; bc < grid.block_cols(); ++bc) {
      const BlockExtent e = grid.extent(br, bc);
      for (std::size_t c = e.col0; c < e.col0 + e.cols; ++c) {
        const bool first = mask.kept(e.row0, c);
        for (std::size_t r = e.row0 + 1; r < e.row0 + e.rows; ++r)
          if (mask.kept(r, c) != first) return false;
      }
    }
  }
  return true;
}

ElementMask nonzero_mask(const WeightTensor& weights) {
  ElementMask out{weights.layer_id, weights.rows(), weights.cols(), std::vector<std::uint8_t>(weights.values.size())};
  for (std::size_t i = 0; i < weights.values.size(); ++i) out.keep[i] = weights.values[i] != 0.0f;
  return out;
}

std::string format_masks(const MaskSet& masks) {
  std::ostringstream out;
  out << "bpmask 1\n";
  for (const auto& [id, m] : masks) {
    const auto& g = m.grid();
    out << "layer " << id << " rows=" << g.rows() << " cols=" << g.cols() << " block=" << to_string(g.config())
        << '\n';
    for (std::size_t br = 0; br < g.block_rows(); ++br) {
      for (std::size_t bc = 0; bc < g.block_cols(); ++bc) {
        out << br << ' ' << bc << ':';
        for (auto k : m.kept(br, bc)) out << ' ' << k;
        out << '\n';
      }
    }
    out << "end\n";
  }
  return out.str();
}

namespace {

std::size_t to_count(std::string_view s, std::size_t line, const char* field) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError("expected an integer, got '" + std::string(s) + "'", line, field);
  return v;
}

std::string_view after_prefix(std::string_view tok, std::string_view prefix, std::size_t line) {
  if (tok.substr(0, prefix.size()) != prefix)
    throw ParseError("expected '" + std::string(prefix) + "...'", line, std::string(prefix.substr(0, prefix.size() - 1)));
  return tok.substr(prefix.size());
}

}  // namespace

MaskSet parse_masks(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || line != "bpmask 1") throw ParseError("expected header 'bpmask 1'", 1, "magic");
  ++line_no;

  MaskSet out;
  std::optional<PruneMask> cur;
  std::vector<char> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "layer") {
      if (cur) throw ParseError("missing 'end' before new layer", line_no, "layer");
      std::string id, rows, cols, block;
      ls >> id >> rows >> cols >> block;
      const std::size_t m = to_count(after_prefix(rows, "rows=", line_no), line_no, "rows");
      const std::size_t c = to_count(after_prefix(cols, "cols=", line_no), line_no, "cols");
      BlockConfig cfg;
      try {
        cfg = parse_block_config(after_prefix(block, "block=", line_no));
      } catch (const ParseError& e) {
        throw ParseError(e.what(), line_no, "block");
      }
      cur.emplace(id, BlockGrid(m, c, cfg));
      seen.assign(cur->grid().block_count(), 0);
    } else if (tok == "end") {
      if (!cur) throw ParseError("'end' without layer", line_no, "end");
      if (std::count(seen.begin(), seen.end(), 0) != 0) throw ParseError("layer lists fewer blocks than its grid", line_no, "end");
      std::string id = cur->layer_id();
      out.emplace(std::move(id), std::move(*cur));
      cur.reset();
    } else {
      if (!cur) throw ParseError("block record outside a layer", line_no, "block");
      if (tok.empty() || ls.eof()) throw ParseError("malformed block record", line_no, "block");
      const std::size_t br = to_count(tok, line_no, "block-row");
      std::string bc_tok;
      ls >> bc_tok;
      if (bc_tok.empty() || bc_tok.back() != ':') throw ParseError("block record is '<br> <bc>: ...'", line_no, "block");
      bc_tok.pop_back();
      const std::size_t bc = to_count(bc_tok, line_no, "block-col");
      if (br >= cur->grid().block_rows() || bc >= cur->grid().block_cols())
        throw ParseError("block index outside grid", line_no, "block");
      std::vector<std::uint16_t> kept;
      std::string idx;
      while (ls >> idx) kept.push_back(static_cast<std::uint16_t>(to_count(idx, line_no, "index")));
      try {
        cur->set_kept(br, bc, std::move(kept));
      } catch (const ShapeError& e) {
        throw ParseError(e.what(), line_no, "index");
      }
      seen[cur->grid().block_index(br, bc)] = 1;
    }
  }
  if (cur) throw ParseError("unterminated layer", line_no, "end");
  return out;
}

void save_masks(const MaskSet& masks, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << format_masks(masks);
}

MaskSet load_masks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_masks(ss.str());
}

}  // namespace bpunch
