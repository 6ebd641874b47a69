#include "bpunch/scheduler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "bpunch/error.hpp"
#include "text.hpp"

namespace bpunch {

using text::LineParser;

std::string_view to_string(Lane lane) { return lane == Lane::kG ? "G" : "C"; }

std::optional<Lane> parse_lane(std::string_view text) {
  if (text == "G") return Lane::kG;
  if (text == "C") return Lane::kC;
  return std::nullopt;
}

namespace {

constexpr std::string_view kProfileMagic = "bpprofile";

void check_time(double v, const std::string& where) {
  if (!std::isfinite(v) || v < 0.0) throw ParseError("time must be finite and non-negative", 0, where);
}

std::pair<std::string_view, std::string_view> key_value(std::string_view tok, const LineParser& p) {
  const auto eq = tok.find('=');
  if (eq == std::string_view::npos) p.fail("expected key=value, got '" + std::string(tok) + "'");
  return {tok.substr(0, eq), tok.substr(eq + 1)};
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("short write to '" + path.string() + "'");
}

}  // namespace

void DeviceProfile::validate() const {
  check_time(copy.base_ms, "base_ms");
  if (!std::isfinite(copy.bytes_per_ms) || copy.bytes_per_ms <= 0.0)
    throw ParseError("bandwidth must be positive", 0, "bytes_per_ms");
  check_time(sequential_ms, "sequential_ms");
  for (const auto& [id, costs] : branches)
    for (std::size_t i = 0; i < costs.size(); ++i) {
      check_time(costs[i].t_g, id + "[" + std::to_string(i) + "].t_g");
      check_time(costs[i].t_c, id + "[" + std::to_string(i) + "].t_c");
    }
}

DeviceProfile parse_profile(std::string_view input) {
  DeviceProfile prof;
  bool header = false;
  std::map<std::string, std::map<std::size_t, BranchCost>> seen;
  std::size_t line_no = 0;
  for (auto line : text::split(input, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = text::tokens(line);
    if (tok.empty()) continue;
    const LineParser p(line_no);
    if (!header) {
      if (tok.size() != 2 || tok[0] != kProfileMagic) p.fail("expected header 'bpprofile 1'", "magic");
      if (p.count(tok[1], "version") != 1) p.fail("unsupported version", "version");
      header = true;
    } else if (tok[0] == "copy") {
      for (std::size_t i = 1; i < tok.size(); ++i) {
        const auto [k, v] = key_value(tok[i], p);
        if (k == "base_ms") prof.copy.base_ms = p.real(v, k);
        else if (k == "bytes_per_ms") prof.copy.bytes_per_ms = p.real(v, k);
        else p.fail("unknown copy key", k);
      }
      if (!std::isfinite(prof.copy.base_ms) || prof.copy.base_ms < 0.0) p.fail("must be non-negative", "base_ms");
      if (!std::isfinite(prof.copy.bytes_per_ms) || prof.copy.bytes_per_ms <= 0.0)
        p.fail("must be positive", "bytes_per_ms");
    } else if (tok[0] == "sequential_ms") {
      if (tok.size() != 2) p.fail("sequential_ms takes one value", "sequential_ms");
      prof.sequential_ms = p.real(tok[1], "sequential_ms");
      if (!std::isfinite(prof.sequential_ms) || prof.sequential_ms < 0.0)
        p.fail("time must be finite and non-negative", "sequential_ms");
    } else if (tok[0] == "branch") {
      if (tok.size() != 5) p.fail("branch record is 'branch <structure> <index> t_g=<ms> t_c=<ms>'");
      const std::string id(tok[1]);
      const std::size_t idx = p.count(tok[2], "index");
      BranchCost c;
      bool has_g = false, has_c = false;
      for (std::size_t i = 3; i < 5; ++i) {
        const auto [k, v] = key_value(tok[i], p);
        if (k == "t_g") c.t_g = p.real(v, k), has_g = true;
        else if (k == "t_c") c.t_c = p.real(v, k), has_c = true;
        else p.fail("unknown branch key", k);
      }
      if (!has_g || !has_c) p.fail("branch record needs t_g and t_c");
      for (const auto& [v, name] : {std::pair{c.t_g, "t_g"}, std::pair{c.t_c, "t_c"}})
        if (!std::isfinite(v) || v < 0.0) p.fail("time must be finite and non-negative", name);
      if (!seen[id].emplace(idx, c).second) p.fail("duplicate branch " + std::to_string(idx), "index");
    } else {
      p.fail("unknown record '" + std::string(tok[0]) + "'", "record");
    }
  }
  if (!header) throw ParseError("empty profile", 1, "magic");
  for (auto& [id, by_index] : seen) {
    auto& out = prof.branches[id];
    for (const auto& [idx, cost] : by_index) {
      if (idx != out.size()) throw ParseError("structure '" + id + "' is missing branch " + std::to_string(out.size()));
      out.push_back(cost);
    }
  }
  return prof;
}

std::string format_profile(const DeviceProfile& profile) {
  std::string out = fmt::format("{} 1\n", kProfileMagic);
  out += fmt::format("copy base_ms={:.17g} bytes_per_ms={:.17g}\n", profile.copy.base_ms, profile.copy.bytes_per_ms);
  out += fmt::format("sequential_ms {:.17g}\n", profile.sequential_ms);
  for (const auto& [id, costs] : profile.branches)
    for (std::size_t i = 0; i < costs.size(); ++i)
      out += fmt::format("branch {} {} t_g={:.17g} t_c={:.17g}\n", id, i, costs[i].t_g, costs[i].t_c);
  return out;
}

DeviceProfile load_profile(const std::filesystem::path& path) { return parse_profile(read_text(path)); }

void save_profile(const DeviceProfile& profile, const std::filesystem::path& path) {
  write_text(path, format_profile(profile));
}

ConvDecision decide_conv_branch(const std::array<BranchCost, 2>& costs, double tau) {
  ConvDecision d;
  d.heavy = costs[1].t_g > costs[0].t_g ? 1 : 0;
  const std::size_t light = 1 - d.heavy;
  d.t_par = std::max(costs[d.heavy].t_g, costs[light].t_c + tau);
  d.t_ser = costs[d.heavy].t_g + costs[light].t_g;
  d.parallel = d.t_par <= d.t_ser;
  d.makespan = d.parallel ? d.t_par : d.t_ser;
  d.lanes[d.heavy] = Lane::kG;
  d.lanes[light] = d.parallel ? Lane::kC : Lane::kG;
  return d;
}

NonConvDecision decide_nonconv_branches(std::span<const BranchCost> costs) {
  const std::size_t k = costs.size();
  if (k > kMaxNonConvBranches)
    throw std::invalid_argument("structure has " + std::to_string(k) + " branches, the limit is " +
                                std::to_string(kMaxNonConvBranches));
  // Bit (k-1-i) of an assignment set means branch i runs on G, so numeric
  // order among equal G counts is the lexicographic order with C < G.
  const auto on_g = [k](std::uint32_t a, std::size_t i) { return ((a >> (k - 1 - i)) & 1u) != 0; };
  std::uint32_t best = 0;
  double best_t = 0.0;
  int best_g = 0;
  for (std::uint32_t a = 0; a < (1u << k); ++a) {
    double sum_c = 0.0, sum_g = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (on_g(a, i)) sum_g += costs[i].t_g;
      else sum_c += costs[i].t_c;
    }
    const double t = std::max(sum_c, sum_g);
    const int g = std::popcount(a);
    if (a == 0 || t < best_t || (t == best_t && (g < best_g || (g == best_g && a < best)))) {
      best = a;
      best_t = t;
      best_g = g;
    }
  }
  NonConvDecision d;
  d.makespan = best_t;
  for (std::size_t i = 0; i < k; ++i) d.lanes.push_back(on_g(best, i) ? Lane::kG : Lane::kC);
  return d;
}

const StructureDecision* Schedule::find(std::string_view structure_id) const {
  for (const auto& s : structures)
    if (s.structure_id == structure_id) return &s;
  return nullptr;
}

Schedule schedule_model(const ModelGraph& model, const DeviceProfile& profile) {
  profile.validate();
  Schedule sched;
  sched.sequential_ms = profile.sequential_ms;
  sched.total_ms = profile.sequential_ms;
  for (const auto& st : model.structures()) {
    const auto it = profile.branches.find(st.id);
    if (it == profile.branches.end()) throw ParseError("profile has no entry for structure '" + st.id + "'");
    const auto& costs = it->second;
    if (costs.size() != st.branches.size())
      throw ParseError("profile lists " + std::to_string(costs.size()) + " branches for structure '" + st.id +
                       "', the model has " + std::to_string(st.branches.size()));
    StructureDecision d;
    d.structure_id = st.id;
    d.kind = st.kind;
    if (st.kind == BranchKind::kConv) {
      d.tau = profile.copy.tau(st.bytes);
      const ConvDecision c = decide_conv_branch({costs[0], costs[1]}, d.tau);
      d.lanes.assign(c.lanes.begin(), c.lanes.end());
      d.makespan = c.makespan;
      d.t_par = c.t_par;
      d.t_ser = c.t_ser;
      d.parallel = c.parallel;
    } else {
      NonConvDecision n = decide_nonconv_branches(costs);
      d.lanes = std::move(n.lanes);
      d.makespan = n.makespan;
      d.parallel = std::find(d.lanes.begin(), d.lanes.end(), Lane::kC) != d.lanes.end() &&
                   std::find(d.lanes.begin(), d.lanes.end(), Lane::kG) != d.lanes.end();
    }
    sched.total_ms += d.makespan;
    sched.structures.push_back(std::move(d));
  }
  return sched;
}

using nlohmann::json;

std::string schedule_to_json(const Schedule& schedule) {
  json j;
  j["sequential_ms"] = schedule.sequential_ms;
  j["total_ms"] = schedule.total_ms;
  j["structures"] = json::array();
  for (const auto& s : schedule.structures) {
    json lanes = json::array();
    for (Lane l : s.lanes) lanes.push_back(std::string(to_string(l)));
    json e = {{"id", s.structure_id},
              {"kind", std::string(to_string(s.kind))},
              {"lanes", lanes},
              {"makespan_ms", s.makespan},
              {"parallel", s.parallel}};
    if (s.kind == BranchKind::kConv) {
      e["tau_ms"] = s.tau;
      e["t_par_ms"] = s.t_par;
      e["t_ser_ms"] = s.t_ser;
    }
    j["structures"].push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

Schedule schedule_from_json(std::string_view text) {
  Schedule s;
  try {
    const json j = json::parse(text);
    s.sequential_ms = j.at("sequential_ms").get<double>();
    s.total_ms = j.at("total_ms").get<double>();
    for (const auto& e : j.at("structures")) {
      StructureDecision d;
      d.structure_id = e.at("id").get<std::string>();
      const auto kind = parse_branch_kind(e.at("kind").get<std::string>());
      if (!kind) throw ParseError("unknown structure kind", 0, "kind");
      d.kind = *kind;
      for (const auto& l : e.at("lanes")) {
        const auto lane = parse_lane(l.get<std::string>());
        if (!lane) throw ParseError("lane must be G or C", 0, "lanes");
        d.lanes.push_back(*lane);
      }
      d.makespan = e.at("makespan_ms").get<double>();
      d.parallel = e.at("parallel").get<bool>();
      if (d.kind == BranchKind::kConv) {
        d.tau = e.at("tau_ms").get<double>();
        d.t_par = e.at("t_par_ms").get<double>();
        d.t_ser = e.at("t_ser_ms").get<double>();
      }
      s.structures.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("schedule: ") + e.what());
  }
  return s;
}

void save_schedule(const Schedule& schedule, const std::filesystem::path& path) {
  write_text(path, schedule_to_json(schedule));
}

Schedule load_schedule(const std::filesystem::path& path) { return schedule_from_json(read_text(path)); }

std::string format_schedule_table(const Schedule& schedule) {
  std::string out = fmt::format("{:<16} {:<16} {:<10} {:>12} {:>10} {:>10} {:>10}\n", "structure", "kind", "lanes",
                                "makespan_ms", "tau_ms", "t_par_ms", "t_ser_ms");
  for (const auto& s : schedule.structures) {
    std::string lanes;
    for (Lane l : s.lanes) lanes += to_string(l);
    if (s.kind == BranchKind::kConv)
      out += fmt::format("{:<16} {:<16} {:<10} {:>12.4f} {:>10.4f} {:>10.4f} {:>10.4f}\n", s.structure_id,
                         to_string(s.kind), lanes, s.makespan, s.tau, s.t_par, s.t_ser);
    else
      out += fmt::format("{:<16} {:<16} {:<10} {:>12.4f} {:>10} {:>10} {:>10}\n", s.structure_id, to_string(s.kind),
                         lanes, s.makespan, "-", "-", "-");
  }
  out += fmt::format("sequential {:.4f} ms, total {:.4f} ms\n", schedule.sequential_ms, schedule.total_ms);
  return out;
}

}  // namespace bpunch
