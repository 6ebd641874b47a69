#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bpunch {

enum class LayerKind {
  kConv,
  kFc,
  kAdd,
  kMul,
  kConcat,
  kUpsample,
  kMaxPool,
  kTransposeReshape,
};

/// Per-filter trainable parameters that accompany the weights (not pruned).
enum class AffineKind { kNone, kBias, kBatchNorm };

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view text);
std::string_view to_string(AffineKind kind);
std::optional<AffineKind> parse_affine_kind(std::string_view text);

struct Shape3 {
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t size() const { return c * h * w; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Name reserved for the model input in layer input lists.
inline constexpr std::string_view kInputId = "input";

struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::kConv;
  std::size_t filters = 0;   // M
  std::size_t channels = 0;  // N
  std::size_t kh = 0;
  std::size_t kw = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t size = 0;    // pooling window
  std::size_t factor = 0;  // upsample factor
  std::optional<double> scalar;  // single-input pointwise operand
  AffineKind affine = AffineKind::kNone;
  std::vector<std::string> inputs;

  bool has_weights() const { return kind == LayerKind::kConv || kind == LayerKind::kFc; }
  /// M·N·Kh·Kw for weight layers, 0 otherwise.
  std::size_t weight_count() const { return has_weights() ? filters * channels * kh * kw : 0; }
  /// Columns of the 2-D GEMM view, N·Kh·Kw.
  std::size_t gemm_cols() const { return channels * kh * kw; }
  std::size_t affine_count() const;
  bool is_3x3() const { return has_weights() && kh == 3 && kw == 3; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class BranchKind { kConv, kNonConv };

std::string_view to_string(BranchKind kind);
std::optional<BranchKind> parse_branch_kind(std::string_view text);

/// Mutually independent layer sequences between a fork and a join.
struct BranchStructure {
  std::string id;
  BranchKind kind = BranchKind::kConv;
  std::vector<std::vector<std::string>> branches;
  /// Bytes that must cross lanes when a branch runs off the fast lane.
  std::size_t bytes = 0;

  friend bool operator==(const BranchStructure&, const BranchStructure&) = default;
};

/// Validated DAG of layers. Construction checks id uniqueness, input
/// resolution, acyclicity, per-kind field constraints and branch-structure
/// consistency; the object is immutable afterwards.
class ModelGraph {
 public:
  ModelGraph(Shape3 input, std::vector<LayerSpec> layers, std::vector<BranchStructure> structures = {});

  Shape3 input_shape() const { return input_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<BranchStructure>& structures() const { return structures_; }

  std::optional<std::size_t> index_of(std::string_view id) const;
  const LayerSpec& layer(std::string_view id) const;

  /// Layer indices in a deterministic topological order (ties by list order).
  const std::vector<std::size_t>& topo_order() const { return topo_; }

  /// Output shape of every layer, indexed like layers(). Throws ShapeError.
  std::vector<Shape3> infer_shapes() const;
  std::vector<Shape3> infer_shapes(Shape3 input) const;

  /// Index of the structure that owns a layer, if any.
  std::optional<std::size_t> structure_of(std::size_t layer_index) const;

  friend bool operator==(const ModelGraph& a, const ModelGraph& b) {
    return a.input_ == b.input_ && a.layers_ == b.layers_ && a.structures_ == b.structures_;
  }

 private:
  void validate_layer(const LayerSpec& layer) const;
  void build_topo();
  void validate_structures();

  Shape3 input_;
  std::vector<LayerSpec> layers_;
  std::vector<BranchStructure> structures_;
  std::vector<std::size_t> topo_;
  std::vector<std::optional<std::size_t>> owner_;
};

}  // namespace bpunch
