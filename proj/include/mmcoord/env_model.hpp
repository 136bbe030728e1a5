#ifndef MMCOORD_ENV_MODEL_HPP
#define MMCOORD_ENV_MODEL_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mmcoord {

using Point = Eigen::Vector2d;

/// Sector ids are 1-based; 0 marks "no sector" (a NULL entry in Phi).
inline constexpr int kNullSector = 0;
/// MCS indices are 1-based; 0 marks an infeasible link.
inline constexpr int kNoMcs = 0;

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }

template <typename Derived>
inline auto dbm_to_mw(const Eigen::ArrayBase<Derived>& dbm) {
  using Scalar = typename Derived::Scalar;
  return (dbm * (std::log(Scalar(10)) / Scalar(10))).exp();
}

/// Wraps an angle in degrees into [-180, 180).
double wrap_degrees(double deg);

struct ApConfig {
  int id = 0;
  Point position = Point::Zero();
  double boresight_offset_deg = 0.0;
  int num_sectors = 36;
  double beam_gain_dbi = 25.0;
  double beamwidth_az_deg = 30.0;
  double tx_power_60_dbm = 10.0;
  double tx_power_5_dbm = 20.0;

  /// Pointing direction of a 1-based sector.
  double sector_direction_deg(int sector) const;
};

struct PropagationParams {
  double pathloss_exp_60 = 2.0;
  double pathloss_exp_5 = 2.2;
  double ref_loss_60_db = 68.0;
  double ref_loss_5_db = 46.4;
  double oxygen_absorption_db_per_km = 15.0;
  double sidelobe_level_dbi = -10.0;
};

struct McsEntry {
  int index = 1;
  double sinr_threshold_db = 0.0;
  double phy_rate_bps = 0.0;
};

/// Ordered SINR -> MCS -> PHY-rate ladder.
class McsTable {
 public:
  McsTable() = default;
  /// Throws std::invalid_argument unless indices start at 1 and both
  /// thresholds and rates are strictly increasing.
  explicit McsTable(std::vector<McsEntry> entries);

  /// 12-step ladder modelled on the 802.11ad SC PHY.
  static McsTable default_table();

  const std::vector<McsEntry>& entries() const { return entries_; }
  int max_index() const { return static_cast<int>(entries_.size()); }
  double threshold_db(int mcs) const;
  double rate_bps(int mcs) const;

 private:
  std::vector<McsEntry> entries_;
};

struct Environment {
  double room_width = 30.0;
  double room_depth = 12.0;
  std::vector<ApConfig> aps;
  std::vector<Point> lps;
  PropagationParams prop;
  McsTable mcs = McsTable::default_table();
  double noise_floor_60_dbm = -74.0;
  double noise_floor_5_dbm = -94.0;
  double rss_noise_sigma_db = 2.0;

  int num_aps() const { return static_cast<int>(aps.size()); }
  int num_lps() const { return static_cast<int>(lps.size()); }
  bool contains(const Point& p) const;
  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
  /// Stable 64-bit digest of every field, used to tie DB files to scenarios.
  std::uint64_t checksum() const;
};

/// Reference office: 30 m x 12 m, 8 wall-mounted APs with 36 sectors,
/// 90 learning points on a 15 x 6 grid.
Environment default_office();

/// Same wall-mounted pattern for any room size and 1..8 APs.
Environment office_layout(double width, double depth, int num_aps, int lp_nx, int lp_ny);

/// Regular LP grid with `nx * ny` cell-centred points.
std::vector<Point> lp_grid(double width, double depth, int nx, int ny);

/// Main-lobe gain with a quadratic-in-angle (dB) rolloff, floored at the
/// sidelobe level. Throws std::domain_error for a sector outside [1, num_sectors].
double antenna_gain(const ApConfig& ap, int sector, double direction_deg, double sidelobe_dbi);

double rx_power_60(const Environment& env, const ApConfig& ap, int sector, const Point& at);
double rx_power_5(const Environment& env, const ApConfig& ap, const Point& at);

/// Signal over (sum of interferers + noise), all in dBm; result in dB.
double sinr_db(double signal_dbm, std::span<const double> interferers_dbm, double noise_dbm);

/// Largest MCS whose threshold is <= sinr, or kNoMcs.
int mcs_from_sinr(const McsTable& table, double sinr);

inline double link_rate(double phy_rate_bps, double load_bps) {
  return phy_rate_bps < load_bps ? phy_rate_bps : load_bps;
}

}  // namespace mmcoord

#endif  // MMCOORD_ENV_MODEL_HPP
