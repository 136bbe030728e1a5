#include <doctest.h>

#include <random>
#include <set>

#include "mmcoord/db_io.hpp"
#include "mmcoord/fingerprint_db.hpp"
#include "mmcoord/kmeans.hpp"

using namespace mmcoord;

namespace {

const FingerprintDB& office_db() {
  static const FingerprintDB db = build_offline_db(default_office());
  return db;
}

// Oracle: exhaustive max over sectors, lowest id on ties.
int brute_force_best(const Environment& env, const ApConfig& ap, const Point& at) {
  int best = 1;
  double p_best = rx_power_60(env, ap, 1, at);
  for (int b = 2; b <= ap.num_sectors; ++b) {
    const double p = rx_power_60(env, ap, b, at);
    if (p > p_best) {
      p_best = p;
      best = b;
    }
  }
  return mcs_from_sinr(env.mcs, p_best - env.noise_floor_60_dbm) == kNoMcs ? kNullSector : best;
}

}  // namespace

TEST_CASE("best sector matches the exhaustive argmax at every LP and AP") {
  const Environment env = default_office();
  const FingerprintDB& db = office_db();
  for (int l = 0; l < env.num_lps(); ++l)
    for (int m = 0; m < env.num_aps(); ++m) CHECK(db.phi(l, m) == brute_force_best(env, env.aps[m], env.lps[l]));
}

TEST_CASE("best sector matches the exhaustive argmax at random points") {
  const Environment env = default_office();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ux(0, env.room_width), uy(0, env.room_depth);
  for (int i = 0; i < 500; ++i) {
    const Point p(ux(rng), uy(rng));
    const ApConfig& ap = env.aps[static_cast<std::size_t>(i % env.num_aps())];
    CHECK(best_sector(env, ap, p).sector == brute_force_best(env, ap, p));
  }
}

TEST_CASE("a point out of range is NULL") {
  Environment env = default_office();
  ApConfig weak = env.aps[0];
  weak.tx_power_60_dbm = -60.0;
  const BestSector b = best_sector(env, weak, Point(29, 11));
  CHECK(b.sector == kNullSector);
  CHECK(b.power_dbm < env.noise_floor_60_dbm);
}

TEST_CASE("offline DB has one row per LP and one column per AP") {
  const FingerprintDB& db = office_db();
  CHECK(db.num_lps() == 90);
  CHECK(db.num_aps() == 8);
  CHECK(db.phi.rows() == 90);
  CHECK(db.mcs_off.cols() == 8);
  CHECK(db.env_checksum == default_office().checksum());

  const FingerprintDB one = build_offline_db(office_layout(30, 12, 1, 15, 6));
  CHECK(one.num_lps() == 90);
  CHECK(one.num_aps() == 1);
}

TEST_CASE("offline MCS follows the interference-free SNR of the best sector") {
  const Environment env = default_office();
  const FingerprintDB& db = office_db();
  for (int l = 0; l < db.num_lps(); ++l)
    for (int m = 0; m < db.num_aps(); ++m) {
      if (db.phi(l, m) == kNullSector) {
        CHECK(db.mcs_off(l, m) == kNoMcs);
        continue;
      }
      CHECK(db.p_off(l, m) == doctest::Approx(rx_power_60(env, env.aps[m], db.phi(l, m), env.lps[l])));
      CHECK(db.mcs_off(l, m) == mcs_from_sinr(env.mcs, db.p_off(l, m) - env.noise_floor_60_dbm));
    }
}

TEST_CASE("clusters partition the LPs of each AP") {
  const FingerprintDB& db = office_db();
  for (int m = 0; m < db.num_aps(); ++m) {
    std::set<int> seen;
    for (int sector : db.covered_sectors(m)) {
      const auto members = db.members(m, sector);
      CHECK_FALSE(members.empty());
      for (int l : members) CHECK(seen.insert(l).second);
      const Eigen::MatrixXd& ex = db.exemplars.at({m, sector});
      CHECK(ex.rows() == std::min<Eigen::Index>(3, static_cast<Eigen::Index>(members.size())));
      CHECK(ex.cols() == db.num_aps());
      const std::vector<int>& mcs = db.mcs_clusters.at({m, sector});
      CHECK(std::is_sorted(mcs.begin(), mcs.end(), std::greater<>()));
      CHECK(db.max_offline_mcs(m, sector) == mcs.front());
    }
  }
  CHECK(db.max_offline_mcs(0, 999) == kNoMcs);
}

TEST_CASE("exemplars lie inside the bounding box of their cluster") {
  const FingerprintDB& db = office_db();
  for (const auto& [key, ex] : db.exemplars) {
    const auto members = db.members(key.ap, key.sector);
    Eigen::MatrixXd rows(static_cast<Eigen::Index>(members.size()), db.num_aps());
    for (std::size_t i = 0; i < members.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = db.psi.row(members[i]);
    const Eigen::RowVectorXd lo = rows.colwise().minCoeff();
    const Eigen::RowVectorXd hi = rows.colwise().maxCoeff();
    for (Eigen::Index r = 0; r < ex.rows(); ++r) {
      CHECK(((ex.row(r).array() >= lo.array() - 1e-9).all()));
      CHECK(((ex.row(r).array() <= hi.array() + 1e-9).all()));
    }
  }
}

TEST_CASE("k-means recovers separated blobs and is deterministic") {
  Eigen::MatrixXd pts(9, 2);
  pts << 0, 0, 0.1, 0, 0, 0.1, 10, 10, 10.1, 10, 10, 10.1, -10, 5, -10.1, 5, -10, 5.1;
  const auto a = kmeans(pts, 3, 5, 42);
  const auto b = kmeans(pts, 3, 5, 42);
  CHECK(a.centroids.isApprox(b.centroids));
  CHECK(a.labels == b.labels);
  CHECK(a.labels[0] == a.labels[1]);
  CHECK(a.labels[3] == a.labels[4]);
  CHECK(a.labels[6] == a.labels[8]);
  CHECK(a.labels[0] != a.labels[3]);
  CHECK(a.labels[3] != a.labels[6]);
  CHECK(a.inertia < 0.1);
  // k is capped at the number of rows.
  const auto c = kmeans(pts.topRows(2), 5, 1, 1);
  CHECK(c.centroids.rows() == 2);
}

TEST_CASE("DB survives a JSON round trip") {
  const FingerprintDB& db = office_db();
  const std::string text = serialize_db(db);
  const FingerprintDB back = deserialize_db(text);
  CHECK(back.env_checksum == db.env_checksum);
  CHECK(back.psi == db.psi);
  CHECK(back.phi == db.phi);
  CHECK(back.p_off == db.p_off);
  CHECK(back.mcs_off == db.mcs_off);
  CHECK(back.exemplars.size() == db.exemplars.size());
  for (const auto& [key, ex] : db.exemplars) CHECK(back.exemplars.at(key) == ex);
  CHECK(back.mcs_clusters == db.mcs_clusters);
  CHECK(serialize_db(back) == text);
}

TEST_CASE("building the DB twice gives identical bytes") {
  CHECK(serialize_db(build_offline_db(default_office())) == serialize_db(office_db()));
}

TEST_CASE("malformed DB files are rejected") {
  CHECK_THROWS_AS(deserialize_db("not json"), std::runtime_error);
  CHECK_THROWS_AS(deserialize_db("{}"), std::runtime_error);
  CHECK_THROWS_AS(deserialize_db(R"({"format":"other","version":1})"), std::runtime_error);
  std::string text = serialize_db(office_db());
  const auto pos = text.find("\"num_lps\": 90");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 13, "\"num_lps\": 91");
  CHECK_THROWS_AS(deserialize_db(text), std::runtime_error);
  CHECK_THROWS_AS(load_db("/nonexistent/db.json"), std::runtime_error);
}

TEST_CASE("rebuilding clusters reproduces the survey") {
  FingerprintDB copy = office_db();
  copy.exemplars.clear();
  copy.mcs_clusters.clear();
  rebuild_clusters(copy);
  CHECK(copy.exemplars.size() == office_db().exemplars.size());
  for (const auto& [key, ex] : office_db().exemplars) CHECK(copy.exemplars.at(key) == ex);
  CHECK(copy.mcs_clusters == office_db().mcs_clusters);
}
