#include "mmcoord/env_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mmcoord {

namespace {

constexpr double kMinDistance = 0.1;

double distance_clamped(const Point& a, const Point& b) {
  return std::max((a - b).norm(), kMinDistance);
}

double direction_deg(const Point& from, const Point& to) {
  const Point d = to - from;
  return std::atan2(d.y(), d.x()) * 180.0 / std::numbers::pi;
}

class Fnv1a {
 public:
  void add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      hash_ ^= (v >> (8 * i)) & 0xffu;
      hash_ *= 0x100000001b3ull;
    }
  }
  void add(double v) { add(std::bit_cast<std::uint64_t>(v)); }
  void add(int v) { add(static_cast<std::uint64_t>(static_cast<std::int64_t>(v))); }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ull;
};

}  // namespace

double wrap_degrees(double deg) {
  double w = std::fmod(deg + 180.0, 360.0);
  if (w < 0) w += 360.0;
  return w - 180.0;
}

double ApConfig::sector_direction_deg(int sector) const {
  return boresight_offset_deg + (sector - 1) * 360.0 / num_sectors;
}

McsTable::McsTable(std::vector<McsEntry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw std::invalid_argument("MCS table is empty");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].index != static_cast<int>(i) + 1)
      throw std::invalid_argument("MCS indices must run 1..N in order");
    if (entries_[i].phy_rate_bps <= 0) throw std::invalid_argument("MCS rate must be positive");
    if (i > 0 && (entries_[i].sinr_threshold_db <= entries_[i - 1].sinr_threshold_db ||
                  entries_[i].phy_rate_bps <= entries_[i - 1].phy_rate_bps))
      throw std::invalid_argument("MCS table must be strictly increasing");
  }
}

McsTable McsTable::default_table() {
  // 802.11ad SC PHY rates (Mb/s); thresholds spread evenly over [1, 21] dB.
  static constexpr double kRatesMbps[] = {385.0,   770.0,  962.5,  1155.0, 1251.25, 1540.0,
                                          1925.0,  2310.0, 2502.5, 3080.0, 3850.0,  4620.0};
  std::vector<McsEntry> entries;
  for (int i = 0; i < 12; ++i)
    entries.push_back({i + 1, 1.0 + i * 20.0 / 11.0, kRatesMbps[i] * 1e6});
  return McsTable(std::move(entries));
}

double McsTable::threshold_db(int mcs) const {
  if (mcs < 1 || mcs > max_index()) throw std::out_of_range("MCS index out of range");
  return entries_[mcs - 1].sinr_threshold_db;
}

double McsTable::rate_bps(int mcs) const {
  if (mcs < 1 || mcs > max_index()) throw std::out_of_range("MCS index out of range");
  return entries_[mcs - 1].phy_rate_bps;
}

bool Environment::contains(const Point& p) const {
  return p.x() >= 0 && p.x() <= room_width && p.y() >= 0 && p.y() <= room_depth;
}

void Environment::validate() const {
  if (room_width <= 0 || room_depth <= 0) throw std::invalid_argument("room dimensions must be positive");
  if (aps.empty()) throw std::invalid_argument("environment needs at least one AP");
  if (lps.empty()) throw std::invalid_argument("environment needs at least one LP");
  for (std::size_t i = 0; i < aps.size(); ++i) {
    const ApConfig& ap = aps[i];
    if (ap.id != static_cast<int>(i)) throw std::invalid_argument("AP ids must be 0..M-1 in order");
    if (ap.num_sectors < 1) throw std::invalid_argument("AP needs at least one sector");
    if (ap.beamwidth_az_deg <= 0) throw std::invalid_argument("beamwidth must be positive");
    if (!contains(ap.position)) throw std::invalid_argument("AP " + std::to_string(i) + " lies outside the room");
  }
  for (std::size_t l = 0; l < lps.size(); ++l)
    if (!contains(lps[l])) throw std::invalid_argument("LP " + std::to_string(l) + " lies outside the room");
  if (prop.pathloss_exp_60 < 1.5 || prop.pathloss_exp_5 < 1.5)
    throw std::invalid_argument("path-loss exponents must be >= 1.5");
  if (prop.ref_loss_60_db <= 0 || prop.ref_loss_5_db <= 0)
    throw std::invalid_argument("reference losses must be positive");
  if (rss_noise_sigma_db < 0) throw std::invalid_argument("RSS noise sigma must be >= 0");
  if (mcs.entries().empty()) throw std::invalid_argument("MCS table is empty");
}

std::uint64_t Environment::checksum() const {
  Fnv1a h;
  h.add(room_width);
  h.add(room_depth);
  h.add(static_cast<int>(aps.size()));
  for (const ApConfig& ap : aps) {
    h.add(ap.id);
    h.add(ap.position.x());
    h.add(ap.position.y());
    h.add(ap.boresight_offset_deg);
    h.add(ap.num_sectors);
    h.add(ap.beam_gain_dbi);
    h.add(ap.beamwidth_az_deg);
    h.add(ap.tx_power_60_dbm);
    h.add(ap.tx_power_5_dbm);
  }
  h.add(static_cast<int>(lps.size()));
  for (const Point& p : lps) {
    h.add(p.x());
    h.add(p.y());
  }
  h.add(prop.pathloss_exp_60);
  h.add(prop.pathloss_exp_5);
  h.add(prop.ref_loss_60_db);
  h.add(prop.ref_loss_5_db);
  h.add(prop.oxygen_absorption_db_per_km);
  h.add(prop.sidelobe_level_dbi);
  for (const McsEntry& e : mcs.entries()) {
    h.add(e.index);
    h.add(e.sinr_threshold_db);
    h.add(e.phy_rate_bps);
  }
  h.add(noise_floor_60_dbm);
  h.add(noise_floor_5_dbm);
  h.add(rss_noise_sigma_db);
  return h.value();
}

std::vector<Point> lp_grid(double width, double depth, int nx, int ny) {
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      out.emplace_back((i + 0.5) * width / nx, (j + 0.5) * depth / ny);
  return out;
}

Environment office_layout(double width, double depth, int num_aps, int lp_nx, int lp_ny) {
  if (num_aps < 1 || num_aps > 8) throw std::invalid_argument("office layout holds 1 to 8 APs");
  Environment env;
  env.room_width = width;
  env.room_depth = depth;
  // Listed so that any prefix of the AP list is spread across the room.
  const double xs[] = {0.125, 0.875, 0.625, 0.375, 0.375, 0.625, 0.875, 0.125};
  const bool top[] = {false, true, false, true, false, true, false, true};
  const double inset = std::min(0.5, depth / 4.0);
  for (int i = 0; i < num_aps; ++i) {
    ApConfig ap;
    ap.id = i;
    ap.position = Point(xs[i] * width, top[i] ? depth - inset : inset);
    ap.boresight_offset_deg = top[i] ? 270.0 : 90.0;
    env.aps.push_back(ap);
  }
  env.lps = lp_grid(width, depth, lp_nx, lp_ny);
  return env;
}

Environment default_office() { return office_layout(30.0, 12.0, 8, 15, 6); }

double antenna_gain(const ApConfig& ap, int sector, double direction_deg, double sidelobe_dbi) {
  if (sector < 1 || sector > ap.num_sectors)
    throw std::domain_error("sector " + std::to_string(sector) + " outside [1, " +
                            std::to_string(ap.num_sectors) + "]");
  const double offset = wrap_degrees(direction_deg - ap.sector_direction_deg(sector));
  const double ratio = offset / ap.beamwidth_az_deg;
  return std::max(ap.beam_gain_dbi - 12.0 * ratio * ratio, sidelobe_dbi);
}

double rx_power_60(const Environment& env, const ApConfig& ap, int sector, const Point& at) {
  const double d = distance_clamped(ap.position, at);
  const double gain = antenna_gain(ap, sector, direction_deg(ap.position, at), env.prop.sidelobe_level_dbi);
  const double loss = env.prop.ref_loss_60_db + 10.0 * env.prop.pathloss_exp_60 * std::log10(d) +
                      env.prop.oxygen_absorption_db_per_km * d / 1000.0;
  return ap.tx_power_60_dbm + gain - loss;
}

double rx_power_5(const Environment& env, const ApConfig& ap, const Point& at) {
  const double d = distance_clamped(ap.position, at);
  return ap.tx_power_5_dbm - (env.prop.ref_loss_5_db + 10.0 * env.prop.pathloss_exp_5 * std::log10(d));
}

double sinr_db(double signal_dbm, std::span<const double> interferers_dbm, double noise_dbm) {
  if (interferers_dbm.empty()) return signal_dbm - noise_dbm;
  const Eigen::Map<const Eigen::ArrayXd> interf(interferers_dbm.data(),
                                                static_cast<Eigen::Index>(interferers_dbm.size()));
  const double denom = dbm_to_mw(interf).sum() + dbm_to_mw(noise_dbm);
  return signal_dbm - mw_to_dbm(denom);
}

int mcs_from_sinr(const McsTable& table, double sinr) {
  int best = kNoMcs;
  for (const McsEntry& e : table.entries()) {
    if (e.sinr_threshold_db <= sinr) best = e.index;
    else break;
  }
  return best;
}

}  // namespace mmcoord
