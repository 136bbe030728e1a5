#include "mmcoord/fingerprint_db.hpp"

#include <algorithm>
#include <set>

#include "mmcoord/kmeans.hpp"

namespace mmcoord {

std::vector<int> FingerprintDB::members(int ap, int sector) const {
  std::vector<int> out;
  for (int l = 0; l < num_lps(); ++l)
    if (phi(l, ap) == sector && sector != kNullSector) out.push_back(l);
  return out;
}

std::vector<int> FingerprintDB::covered_sectors(int ap) const {
  std::set<int> s;
  for (int l = 0; l < num_lps(); ++l)
    if (phi(l, ap) != kNullSector) s.insert(phi(l, ap));
  return {s.begin(), s.end()};
}

int FingerprintDB::max_offline_mcs(int ap, int sector) const {
  const auto it = mcs_clusters.find({ap, sector});
  if (it == mcs_clusters.end() || it->second.empty()) return kNoMcs;
  return it->second.front();
}

BestSector best_sector(const Environment& env, const ApConfig& ap, const Point& at) {
  BestSector best{1, rx_power_60(env, ap, 1, at)};
  for (int b = 2; b <= ap.num_sectors; ++b) {
    const double p = rx_power_60(env, ap, b, at);
    if (p > best.power_dbm) best = {b, p};
  }
  if (mcs_from_sinr(env.mcs, best.power_dbm - env.noise_floor_60_dbm) == kNoMcs) best.sector = kNullSector;
  return best;
}

Eigen::MatrixXd cluster_exemplars(const FingerprintDB& db, int ap, int sector, const ClusterOptions& options) {
  const std::vector<int> rows = db.members(ap, sector);
  if (rows.empty()) return Eigen::MatrixXd(0, db.num_aps());
  Eigen::MatrixXd samples(static_cast<Eigen::Index>(rows.size()), db.num_aps());
  for (std::size_t i = 0; i < rows.size(); ++i) samples.row(static_cast<Eigen::Index>(i)) = db.psi.row(rows[i]);
  // Seed per beam so the result does not depend on iteration order.
  const std::uint64_t seed = options.seed ^ (static_cast<std::uint64_t>(ap) << 32) ^ static_cast<std::uint64_t>(sector);
  return kmeans(samples, options.k, options.restarts, seed).centroids;
}

std::vector<int> cluster_offline_mcs(const FingerprintDB& db, int ap, int sector) {
  std::set<int, std::greater<>> distinct;
  for (int l : db.members(ap, sector)) distinct.insert(db.mcs_off(l, ap));
  return {distinct.begin(), distinct.end()};
}

FingerprintDB build_offline_db(const Environment& env, const ClusterOptions& options) {
  const int L = env.num_lps();
  const int M = env.num_aps();
  FingerprintDB db;
  db.psi.resize(L, M);
  db.phi.resize(L, M);
  db.p_off.resize(L, M);
  db.mcs_off.resize(L, M);
  for (int l = 0; l < L; ++l) {
    for (int m = 0; m < M; ++m) {
      const ApConfig& ap = env.aps[m];
      db.psi(l, m) = rx_power_5(env, ap, env.lps[l]);
      const BestSector best = best_sector(env, ap, env.lps[l]);
      db.phi(l, m) = best.sector;
      db.p_off(l, m) = best.power_dbm;
      db.mcs_off(l, m) = best.sector == kNullSector
                             ? kNoMcs
                             : mcs_from_sinr(env.mcs, best.power_dbm - env.noise_floor_60_dbm);
    }
  }
  rebuild_clusters(db, options);
  db.env_checksum = env.checksum();
  return db;
}

void rebuild_clusters(FingerprintDB& db, const ClusterOptions& options) {
  db.exemplars.clear();
  db.mcs_clusters.clear();
  for (int m = 0; m < db.num_aps(); ++m) {
    for (int sector : db.covered_sectors(m)) {
      db.exemplars[{m, sector}] = cluster_exemplars(db, m, sector, options);
      db.mcs_clusters[{m, sector}] = cluster_offline_mcs(db, m, sector);
    }
  }
}

}  // namespace mmcoord
