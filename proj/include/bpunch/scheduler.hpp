#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bpunch/graph.hpp"

namespace bpunch {

/// The two execution lanes: G is the fast parallel device, C the general one.
enum class Lane { kG, kC };

std::string_view to_string(Lane lane);
std::optional<Lane> parse_lane(std::string_view text);

/// Cost of moving data between lanes: base_ms + bytes / bytes_per_ms.
struct CopyModel {
  double base_ms = 0.0;
  double bytes_per_ms = 1e9;

  double tau(std::size_t bytes) const { return base_ms + static_cast<double>(bytes) / bytes_per_ms; }
  friend bool operator==(const CopyModel&, const CopyModel&) = default;
};

struct BranchCost {
  double t_g = 0.0;
  double t_c = 0.0;
  friend bool operator==(const BranchCost&, const BranchCost&) = default;
};

struct DeviceProfile {
  CopyModel copy;
  /// Time of every layer outside the branch structures, run on lane G.
  double sequential_ms = 0.0;
  /// Branch costs per structure id, in branch order.
  std::map<std::string, std::vector<BranchCost>> branches;

  /// Throws ParseError on negative or non-finite entries.
  void validate() const;
  friend bool operator==(const DeviceProfile&, const DeviceProfile&) = default;
};

/// Text profile:
///   bpprofile 1
///   copy base_ms=<x> bytes_per_ms=<x>
///   sequential_ms <x>
///   branch <structure> <index> t_g=<x> t_c=<x>
/// '#' starts a comment. Branch indices of a structure must be 0..k-1.
DeviceProfile parse_profile(std::string_view text);
std::string format_profile(const DeviceProfile& profile);
DeviceProfile load_profile(const std::filesystem::path& path);
void save_profile(const DeviceProfile& profile, const std::filesystem::path& path);

struct ConvDecision {
  std::array<Lane, 2> lanes{Lane::kG, Lane::kG};
  std::size_t heavy = 0;  // branch placed on G in both options
  double t_par = 0.0;
  double t_ser = 0.0;
  bool parallel = false;
  double makespan = 0.0;
};

/// Two-branch conv structure. The branch with the larger G time (the first on
/// a tie) stays on G; the other either follows it on G (serial) or runs on C
/// and pays the copy time tau (parallel). Equal times choose parallel.
ConvDecision decide_conv_branch(const std::array<BranchCost, 2>& costs, double tau);

inline constexpr std::size_t kMaxNonConvBranches = 20;

struct NonConvDecision {
  std::vector<Lane> lanes;
  double makespan = 0.0;
};

/// Exhaustive search over all 2^k lane assignments minimising
/// max(Σ_C t_c, Σ_G t_g); copies are not charged. Ties prefer fewer branches
/// on G, then the lexicographically smallest assignment with C before G.
/// Throws std::invalid_argument when k exceeds kMaxNonConvBranches.
NonConvDecision decide_nonconv_branches(std::span<const BranchCost> costs);

struct StructureDecision {
  std::string structure_id;
  BranchKind kind = BranchKind::kConv;
  std::vector<Lane> lanes;
  double makespan = 0.0;
  double tau = 0.0;    // conv only
  double t_par = 0.0;  // conv only
  double t_ser = 0.0;  // conv only
  bool parallel = false;

  friend bool operator==(const StructureDecision&, const StructureDecision&) = default;
};

struct Schedule {
  double sequential_ms = 0.0;
  std::vector<StructureDecision> structures;
  double total_ms = 0.0;

  const StructureDecision* find(std::string_view structure_id) const;
  friend bool operator==(const Schedule&, const Schedule&) = default;
};

/// Decides every structure on its own and adds the sequential time. Throws
/// ParseError when the profile lacks a structure or has the wrong number of
/// branches for it.
Schedule schedule_model(const ModelGraph& model, const DeviceProfile& profile);

/// JSON form consumed by run_model.
std::string schedule_to_json(const Schedule& schedule);
Schedule schedule_from_json(std::string_view text);
void save_schedule(const Schedule& schedule, const std::filesystem::path& path);
Schedule load_schedule(const std::filesystem::path& path);

/// Human-readable table.
std::string format_schedule_table(const Schedule& schedule);

}  // namespace bpunch
