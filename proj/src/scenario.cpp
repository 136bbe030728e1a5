#include "mmcoord/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

namespace mmcoord {

ScenarioError::ScenarioError(const std::string& source, int line, const std::string& message)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ": " + message : source + ": " + message),
      line_(line) {}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find_first_of(", \t", start);
    if (end == std::string_view::npos) end = s.size();
    const std::string_view item = trim(s.substr(start, end - start));
    if (!item.empty()) out.push_back(item);
    start = end + 1;
  }
  return out;
}

struct Line {
  int number;
  std::string key;
  std::string value;
};

class Reader {
 public:
  explicit Reader(const std::string& source) : source_(source) {}

  [[noreturn]] void fail(int line, const std::string& msg) const { throw ScenarioError(source_, line, msg); }

  double real(const Line& l) const {
    double v = 0.0;
    const std::string_view s = l.value;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
      fail(l.number, "'" + l.key + "' expects a number, got '" + l.value + "'");
    return v;
  }

  long long integer(const Line& l) const { return integer(l, l.value); }

  long long integer(const Line& l, std::string_view s) const {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      fail(l.number, "'" + l.key + "' expects an integer, got '" + std::string(s) + "'");
    return v;
  }

  int int32(const Line& l) const {
    const long long v = integer(l);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
      fail(l.number, "'" + l.key + "' is out of range");
    return static_cast<int>(v);
  }

  std::uint64_t u64(const Line& l, std::string_view s) const {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      fail(l.number, "'" + l.key + "' expects a non-negative integer, got '" + std::string(s) + "'");
    return v;
  }

  bool boolean(const Line& l) const {
    std::string v = l.value;
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    fail(l.number, "'" + l.key + "' expects true/false, got '" + l.value + "'");
  }

  std::vector<double> reals(const Line& l, std::size_t expected) const {
    std::vector<double> out;
    for (std::string_view item : split_list(l.value)) {
      Line one{l.number, l.key, std::string(item)};
      out.push_back(real(one));
    }
    if (out.size() != expected)
      fail(l.number, "'" + l.key + "' expects " + std::to_string(expected) + " comma-separated numbers");
    return out;
  }

 private:
  std::string source_;
};

using Handler = std::function<void(const Line&)>;

}  // namespace

Scenario parse_scenario(std::string_view text, const std::string& source) {
  Reader rd(source);
  Scenario sc;

  // Environment is assembled after parsing because layout keys interact.
  double width = 30.0;
  double depth = 12.0;
  int num_aps = 8;
  int lp_nx = 15;
  int lp_ny = 6;
  std::vector<std::pair<int, std::vector<double>>> explicit_aps;
  std::vector<std::pair<int, std::vector<double>>> mcs_rows;
  ApConfig antenna;
  PropagationParams prop;
  double noise60 = sc.env.noise_floor_60_dbm;
  double noise5 = sc.env.noise_floor_5_dbm;
  double sigma = sc.env.rss_noise_sigma_db;
  SimConfig& sim = sc.sim;
  ProtocolTiming& tm = sim.timing;

  auto real_to = [&](double& dst) { return Handler([&rd, &dst](const Line& l) { dst = rd.real(l); }); };
  auto int_to = [&](int& dst) { return Handler([&rd, &dst](const Line& l) { dst = rd.int32(l); }); };
  auto bool_to = [&](bool& dst) { return Handler([&rd, &dst](const Line& l) { dst = rd.boolean(l); }); };

  std::map<std::string, std::map<std::string, Handler>> sections;
  sections["environment"] = {
      {"room_width", real_to(width)},
      {"room_depth", real_to(depth)},
      {"num_aps", int_to(num_aps)},
      {"ap", [&](const Line& l) { explicit_aps.emplace_back(l.number, rd.reals(l, 3)); }},
      {"num_sectors", int_to(antenna.num_sectors)},
      {"beam_gain_dbi", real_to(antenna.beam_gain_dbi)},
      {"beamwidth_deg", real_to(antenna.beamwidth_az_deg)},
      {"tx_power_60_dbm", real_to(antenna.tx_power_60_dbm)},
      {"tx_power_5_dbm", real_to(antenna.tx_power_5_dbm)},
      {"noise_floor_60_dbm", real_to(noise60)},
      {"noise_floor_5_dbm", real_to(noise5)},
  };
  sections["propagation"] = {
      {"pathloss_exp_60", real_to(prop.pathloss_exp_60)},
      {"pathloss_exp_5", real_to(prop.pathloss_exp_5)},
      {"ref_loss_60_db", real_to(prop.ref_loss_60_db)},
      {"ref_loss_5_db", real_to(prop.ref_loss_5_db)},
      {"oxygen_absorption_db_per_km", real_to(prop.oxygen_absorption_db_per_km)},
      {"sidelobe_level_dbi", real_to(prop.sidelobe_level_dbi)},
  };
  sections["mcs_table"] = {
      {"mcs", [&](const Line& l) { mcs_rows.emplace_back(l.number, rd.reals(l, 3)); }},
  };
  sections["fingerprint"] = {
      {"lp_nx", int_to(lp_nx)},
      {"lp_ny", int_to(lp_ny)},
      {"cluster_k", int_to(sc.cluster.k)},
      {"cluster_restarts", int_to(sc.cluster.restarts)},
      {"cluster_seed", [&](const Line& l) { sc.cluster.seed = rd.u64(l, l.value); }},
      {"best_beam_limit", int_to(sim.best_beam_limit)},
      {"rss_noise_sigma_db", real_to(sigma)},
      {"overlap_margin_db", real_to(sim.overlap_margin_db)},
      {"bad_beam_rule",
       [&](const Line& l) {
         if (l.value == "announced") sim.bad_beam_rule = BadBeamRule::kAnnounced;
         else if (l.value == "announced_or_offline") sim.bad_beam_rule = BadBeamRule::kAnnouncedOrOffline;
         else if (l.value == "plausible") sim.bad_beam_rule = BadBeamRule::kPlausible;
         else if (l.value == "serving_beam") sim.bad_beam_rule = BadBeamRule::kServingBeam;
         else if (l.value == "off") sim.bad_beam_rule = BadBeamRule::kOff;
         else rd.fail(l.number, "bad_beam_rule must be announced, announced_or_offline, plausible, serving_beam or off");
       }},
      {"expected_mcs_rule",
       [&](const Line& l) {
         if (l.value == "cluster_max") sim.expected_mcs_rule = ExpectedMcsRule::kClusterMax;
         else if (l.value == "nearest_lp") sim.expected_mcs_rule = ExpectedMcsRule::kNearestLp;
         else rd.fail(l.number, "expected_mcs_rule must be cluster_max or nearest_lp");
       }},
  };
  sections["simulation"] = {
      {"num_aps_active", int_to(sim.num_aps_active)},
      {"num_ues", int_to(sim.num_ues)},
      {"mode",
       [&](const Line& l) {
         try {
           sim.mode = parse_mac_mode(l.value);
         } catch (const std::invalid_argument& e) {
           rd.fail(l.number, e.what());
         }
       }},
      {"duration_s", real_to(sim.sim_duration)},
      {"beacon_interval_s", real_to(sim.beacon_interval)},
      {"txop_interval_s", real_to(sim.txop_interval)},
      {"packet_size_bits", int_to(sim.packet_size_bits)},
      {"load_min_bps", real_to(sim.load_min_bps)},
      {"load_max_bps", real_to(sim.load_max_bps)},
      {"candidate_limit", int_to(sim.candidate_limit)},
      {"seed", [&](const Line& l) { sim.seed = rd.u64(l, l.value); }},
      {"queue_limit_packets", int_to(sim.queue_limit_packets)},
      {"max_aggregate_packets", int_to(sim.max_aggregate_packets)},
      {"retry_limit", int_to(sim.retry_limit)},
      {"cs_threshold_dbm", real_to(sim.cs_threshold_dbm)},
      {"fst_rate_bps", real_to(sim.fst_rate_bps)},
      {"fst_enabled", bool_to(sim.fst_enabled)},
      {"blockage_enabled", bool_to(sim.blockage_enabled)},
      {"blockage_rate_hz", real_to(sim.blockage_rate_hz)},
      {"mreq_s", real_to(tm.mreq)},
      {"mresp_s", real_to(tm.mresp)},
      {"switch_on_s", real_to(tm.switch_on)},
      {"navset_s", real_to(tm.navset)},
      {"bid_s", real_to(tm.bid)},
      {"nack_s", real_to(tm.nack)},
      {"brp_slot_s", real_to(tm.brp_slot)},
      {"fbk_s", real_to(tm.fbk)},
      {"sweep_slot_s", real_to(tm.sweep_slot)},
      {"ssw_feedback_s", real_to(tm.ssw_feedback)},
      {"slot_5_s", real_to(tm.slot_5)},
      {"sifs_5_s", real_to(tm.sifs_5)},
      {"difs_5_s", real_to(tm.difs_5)},
      {"cw_min_5", int_to(tm.cw_min_5)},
      {"cw_max_5", int_to(tm.cw_max_5)},
      {"slot_60_s", real_to(tm.slot_60)},
      {"sifs_60_s", real_to(tm.sifs_60)},
      {"difs_60_s", real_to(tm.difs_60)},
      {"cw_min_60", int_to(tm.cw_min_60)},
      {"cw_max_60", int_to(tm.cw_max_60)},
  };
  sections["sweep"] = {
      {"ap_counts",
       [&](const Line& l) {
         sc.sweep.ap_counts.clear();
         for (std::string_view item : split_list(l.value)) {
           const long long v = rd.integer(l, item);
           if (v < 1) rd.fail(l.number, "ap_counts entries must be >= 1");
           sc.sweep.ap_counts.push_back(static_cast<int>(v));
         }
       }},
      {"seeds",
       [&](const Line& l) {
         sc.sweep.seeds.clear();
         for (std::string_view item : split_list(l.value)) {
           // "a..b" expands to an inclusive range.
           if (const auto dots = item.find(".."); dots != std::string_view::npos) {
             const std::uint64_t lo = rd.u64(l, item.substr(0, dots));
             const std::uint64_t hi = rd.u64(l, item.substr(dots + 2));
             if (hi < lo || hi - lo > 100000) rd.fail(l.number, "bad seed range '" + std::string(item) + "'");
             for (std::uint64_t s = lo; s <= hi; ++s) sc.sweep.seeds.push_back(s);
           } else {
             sc.sweep.seeds.push_back(rd.u64(l, item));
           }
         }
       }},
      {"modes",
       [&](const Line& l) {
         sc.sweep.modes.clear();
         for (std::string_view item : split_list(l.value)) {
           try {
             sc.sweep.modes.push_back(parse_mac_mode(std::string(item)));
           } catch (const std::invalid_argument& e) {
             rd.fail(l.number, e.what());
           }
         }
       }},
  };

  std::map<std::string, Handler>* current = nullptr;
  std::string current_name;
  std::map<std::string, std::map<std::string, int>> seen;
  int number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(pos, end - pos);
    pos = end + 1;
    ++number;
    if (const auto c = raw.find_first_of("#;"); c != std::string_view::npos) raw = raw.substr(0, c);
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') rd.fail(number, "unterminated section header");
      current_name = std::string(trim(line.substr(1, line.size() - 2)));
      const auto it = sections.find(current_name);
      if (it == sections.end()) rd.fail(number, "unknown section [" + current_name + "]");
      current = &it->second;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) rd.fail(number, "expected 'key = value'");
    Line l{number, std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1)))};
    if (l.key.empty()) rd.fail(number, "missing key before '='");
    if (!current) rd.fail(number, "'" + l.key + "' appears before any [section]");
    const auto h = current->find(l.key);
    if (h == current->end()) rd.fail(number, "unknown key '" + l.key + "' in [" + current_name + "]");
    const bool repeatable = l.key == "ap" || l.key == "mcs";
    if (!repeatable) {
      auto [it, fresh] = seen[current_name].emplace(l.key, number);
      if (!fresh) rd.fail(number, "duplicate key '" + l.key + "' (first set on line " + std::to_string(it->second) + ")");
    }
    if (l.value.empty() && l.key != "seeds" && l.key != "ap_counts" && l.key != "modes")
      rd.fail(number, "'" + l.key + "' has no value");
    h->second(l);
  }

  // Assemble the environment.
  if (lp_nx < 1 || lp_ny < 1) rd.fail(0, "lp_nx and lp_ny must be >= 1");
  if (width <= 0 || depth <= 0) rd.fail(0, "room dimensions must be positive");
  if (explicit_aps.empty()) {
    try {
      sc.env = office_layout(width, depth, num_aps, lp_nx, lp_ny);
    } catch (const std::invalid_argument& e) {
      rd.fail(seen["environment"].count("num_aps") ? seen["environment"]["num_aps"] : 0, e.what());
    }
  } else {
    sc.env = Environment{};
    sc.env.room_width = width;
    sc.env.room_depth = depth;
    sc.env.lps = lp_grid(width, depth, lp_nx, lp_ny);
    for (const auto& [line, v] : explicit_aps) {
      ApConfig ap;
      ap.id = static_cast<int>(sc.env.aps.size());
      ap.position = Point(v[0], v[1]);
      ap.boresight_offset_deg = v[2];
      if (!sc.env.contains(ap.position)) rd.fail(line, "AP position lies outside the room");
      sc.env.aps.push_back(ap);
    }
  }
  for (ApConfig& ap : sc.env.aps) {
    ap.num_sectors = antenna.num_sectors;
    ap.beam_gain_dbi = antenna.beam_gain_dbi;
    ap.beamwidth_az_deg = antenna.beamwidth_az_deg;
    ap.tx_power_60_dbm = antenna.tx_power_60_dbm;
    ap.tx_power_5_dbm = antenna.tx_power_5_dbm;
  }
  sc.env.prop = prop;
  sc.env.noise_floor_60_dbm = noise60;
  sc.env.noise_floor_5_dbm = noise5;
  sc.env.rss_noise_sigma_db = sigma;
  if (!mcs_rows.empty()) {
    std::vector<McsEntry> entries;
    for (const auto& [line, v] : mcs_rows) {
      if (v[0] != std::floor(v[0])) rd.fail(line, "MCS index must be an integer");
      entries.push_back({static_cast<int>(v[0]), v[1], v[2]});
    }
    try {
      sc.env.mcs = McsTable(std::move(entries));
    } catch (const std::invalid_argument& e) {
      rd.fail(mcs_rows.front().first, e.what());
    }
  }
  try {
    sc.env.validate();
    if (sim.num_aps_active > sc.env.num_aps()) sim.num_aps_active = sc.env.num_aps();
    sim.validate(sc.env);
  } catch (const std::invalid_argument& e) {
    rd.fail(0, e.what());
  }
  if (sc.cluster.k < 1 || sc.cluster.restarts < 1) rd.fail(0, "cluster_k and cluster_restarts must be >= 1");
  if (!seen["sweep"].contains("ap_counts"))
    std::erase_if(sc.sweep.ap_counts, [&](int n) { return n > sc.env.num_aps(); });
  for (int n : sc.sweep.ap_counts)
    if (n > sc.env.num_aps()) rd.fail(0, "sweep ap_counts entry " + std::to_string(n) + " exceeds the AP count");
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError(path, 0, "cannot open scenario file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path);
}

std::string default_scenario_text() {
  return R"(# Office scenario with the default parameters.
[environment]
room_width = 30
room_depth = 12
num_aps = 8
num_sectors = 36
beam_gain_dbi = 25
beamwidth_deg = 30
tx_power_60_dbm = 10
tx_power_5_dbm = 20
noise_floor_60_dbm = -74
noise_floor_5_dbm = -94

[propagation]
pathloss_exp_60 = 2.0
pathloss_exp_5 = 2.2
ref_loss_60_db = 68.0
ref_loss_5_db = 46.4
oxygen_absorption_db_per_km = 15
sidelobe_level_dbi = -10

[fingerprint]
lp_nx = 15
lp_ny = 6
cluster_k = 3
best_beam_limit = 6
rss_noise_sigma_db = 2

[simulation]
num_aps_active = 8
num_ues = 50
duration_s = 1.0
beacon_interval_s = 0.020
txop_interval_s = 0.001
packet_size_bits = 12000
load_min_bps = 0.5e9
load_max_bps = 5e9
candidate_limit = 2
seed = 1

[sweep]
ap_counts = 1, 2, 4, 6, 8
seeds = 1..5
modes = coordinated, dcf
)";
}

}  // namespace mmcoord
