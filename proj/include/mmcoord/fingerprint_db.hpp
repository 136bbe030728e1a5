#ifndef MMCOORD_FINGERPRINT_DB_HPP
#define MMCOORD_FINGERPRINT_DB_HPP

#include <compare>
#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "mmcoord/env_model.hpp"

namespace mmcoord {

struct BeamKey {
  int ap = 0;
  int sector = kNullSector;
  auto operator<=>(const BeamKey&) const = default;
};

struct ClusterOptions {
  int k = 3;
  int restarts = 20;
  std::uint64_t seed = 0x5eed'f1e1'd0b5'0001ull;
};

/// Offline radio maps at the LP grid (rows = LPs, cols = APs) plus the
/// per-best-sector exemplars and offline MCS clusters derived from them.
struct FingerprintDB {
  Eigen::MatrixXd psi;    // Wi-Fi RSS, dBm
  Eigen::MatrixXi phi;    // best sector id, kNullSector when uncovered
  Eigen::MatrixXd p_off;  // 60 GHz power at the best sector, dBm
  Eigen::MatrixXi mcs_off;  // interference-free MCS, kNoMcs when uncovered
  std::map<BeamKey, Eigen::MatrixXd> exemplars;  // one exemplar per row
  std::map<BeamKey, std::vector<int>> mcs_clusters;  // distinct MCS, descending
  std::uint64_t env_checksum = 0;

  int num_lps() const { return static_cast<int>(psi.rows()); }
  int num_aps() const { return static_cast<int>(psi.cols()); }
  /// LPs whose best sector for `ap` is `sector`.
  std::vector<int> members(int ap, int sector) const;
  /// Distinct non-NULL best sectors of `ap`, ascending.
  std::vector<int> covered_sectors(int ap) const;
  /// Highest offline MCS reached through `sector` of `ap`, kNoMcs if none.
  int max_offline_mcs(int ap, int sector) const;
};

struct BestSector {
  int sector = kNullSector;
  double power_dbm = 0.0;  // max over sectors, reported even when NULL
};

/// Max-power sector of `ap` at `at` (ties to the lower id); NULL when the
/// interference-free SNR at the winning sector is below MCS1.
BestSector best_sector(const Environment& env, const ApConfig& ap, const Point& at);

FingerprintDB build_offline_db(const Environment& env, const ClusterOptions& options = {});

/// Recomputes exemplars and MCS clusters from psi, phi and mcs_off.
void rebuild_clusters(FingerprintDB& db, const ClusterOptions& options = {});

/// Exemplar Wi-Fi fingerprints (rows) for the LPs best served by (ap, sector).
Eigen::MatrixXd cluster_exemplars(const FingerprintDB& db, int ap, int sector, const ClusterOptions& options = {});

/// Distinct offline MCS values of the LPs best served by (ap, sector), descending.
std::vector<int> cluster_offline_mcs(const FingerprintDB& db, int ap, int sector);

}  // namespace mmcoord

#endif  // MMCOORD_FINGERPRINT_DB_HPP
