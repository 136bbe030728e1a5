#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "mmcoord/experiments.hpp"

using namespace mmcoord;

namespace {

Scenario small_sweep() {
  Scenario sc = parse_scenario(R"([simulation]
duration_s = 0.02
num_ues = 12
[sweep]
ap_counts = 1, 2
seeds = 1..2
modes = coordinated, dcf
)");
  return sc;
}

const FingerprintDB& office_db() {
  static const FingerprintDB db = build_offline_db(default_office());
  return db;
}

Environment tiny_env() {
  Environment env = office_layout(10, 6, 3, 6, 4);
  for (ApConfig& ap : env.aps) {
    ap.num_sectors = 8;
    ap.beamwidth_az_deg = 45;
  }
  return env;
}

}  // namespace

TEST_CASE("CSV rows follow the header and parse back") {
  MetricsReport r;
  r.mode = MacMode::kDcf;
  r.num_aps = 4;
  r.seed = 17;
  r.total_throughput_bps = 1.25e9;
  r.avg_delay_s = 0.0125;
  r.collisions = 3;
  r.handovers = 0;
  r.fst_fallbacks = 0;
  r.bf_airtime_s = 0.5;
  CHECK(csv_header() ==
        "mac_mode,num_aps,seed,total_throughput_bps,avg_delay_s,collisions,handovers,fst_fallbacks,bf_airtime_s");
  const std::string row = csv_row(r);
  CHECK(row.rfind("dcf,4,17,", 0) == 0);
  const auto rows = parse_results_csv("# note\n" + csv_header() + "\n" + row + "\n");
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].mode == MacMode::kDcf);
  CHECK(rows[0].seed == 17);
  CHECK(rows[0].total_throughput_bps == doctest::Approx(1.25e9));
  CHECK(*rows[0].avg_delay_s == doctest::Approx(0.0125));
  CHECK(rows[0].collisions == 3);

  r.avg_delay_s.reset();
  const auto none = parse_results_csv(csv_header() + "\n" + csv_row(r) + "\n");
  CHECK_FALSE(none[0].avg_delay_s.has_value());

  CHECK_THROWS_AS(parse_results_csv("a,b\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_results_csv(csv_header() + "\ndcf,1\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_results_csv(csv_header() + "\ntdma,1,1,1,1,1,1,1,1\n"), std::runtime_error);
}

TEST_CASE("sweep plan covers mode x AP count x seed in order") {
  SweepSpec sweep;
  sweep.ap_counts = {1, 2, 4, 6, 8};
  sweep.seeds = {1, 2, 3, 4, 5};
  const auto plan = sweep_plan(sweep);
  CHECK(plan.size() == 50);
  CHECK(plan.front().mode == MacMode::kCoordinated);
  CHECK(plan.back().mode == MacMode::kDcf);
  CHECK(plan[5].num_aps == 2);
  CHECK(plan[6].seed == 2);
  sweep.ap_counts = {1, 2, 3, 4, 5, 6, 7, 8};
  CHECK(sweep_plan(sweep).size() == 80);
}

TEST_CASE("sweep output does not depend on the number of jobs") {
  const Scenario sc = small_sweep();
  std::vector<std::string> serial, parallel;
  run_sweep(sc, office_db(), 1, [&](const MetricsReport& r) { serial.push_back(csv_row(r)); });
  run_sweep(sc, office_db(), 3, [&](const MetricsReport& r) { parallel.push_back(csv_row(r)); });
  CHECK(serial.size() == 8);
  CHECK(serial == parallel);
  CHECK(serial[0].rfind("coordinated,1,1,", 0) == 0);
  CHECK(serial[7].rfind("dcf,2,2,", 0) == 0);
}

TEST_CASE("sweep refuses empty lists") {
  Scenario sc = small_sweep();
  sc.sweep.seeds.clear();
  CHECK_THROWS_AS(run_sweep(sc, office_db(), 1, [](const MetricsReport&) {}), std::invalid_argument);
}

TEST_CASE("a failing run flushes earlier rows and rethrows") {
  Scenario sc = small_sweep();
  sc.sweep.ap_counts = {1, 2};
  sc.sim.num_ues = 2;
  sc.sim.ue_positions = {Point(1, 1), Point(2, 2)};
  sc.sim.ue_loads = {1e9};  // wrong length: every run fails validation
  int delivered = 0;
  CHECK_THROWS(run_sweep(sc, office_db(), 2, [&](const MetricsReport&) { ++delivered; }));
  CHECK(delivered == 0);
}

TEST_CASE("aggregates match an independent recomputation") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<CsvRecord> rows;
  std::map<std::pair<int, int>, std::vector<double>> thr;
  for (MacMode mode : {MacMode::kCoordinated, MacMode::kDcf})
    for (int n : {1, 4})
      for (std::uint64_t s = 1; s <= 5; ++s) {
        CsvRecord r;
        r.mode = mode;
        r.num_aps = n;
        r.seed = s;
        r.total_throughput_bps = u(rng) * 1e9;
        if (s != 3) r.avg_delay_s = u(rng);
        rows.push_back(r);
        thr[{static_cast<int>(mode), n}].push_back(r.total_throughput_bps);
      }
  const auto agg = aggregate(rows);
  REQUIRE(agg.size() == 4);
  for (const Aggregate& a : agg) {
    const auto& v = thr[{static_cast<int>(a.mode), a.num_aps}];
    double sum = 0, lo = INFINITY, hi = -INFINITY;
    for (double x : v) {
      sum += x;
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    CHECK(a.runs == 5);
    CHECK(a.delay_runs == 4);
    CHECK(a.throughput_mean == doctest::Approx(sum / 5));
    CHECK(a.throughput_min == lo);
    CHECK(a.throughput_max == hi);
    CHECK(a.delay_min <= a.delay_mean);
    CHECK(a.delay_mean <= a.delay_max);
  }
  CHECK(agg[0].mode == MacMode::kCoordinated);
  CHECK(agg[0].num_aps == 1);
}

TEST_CASE("plot script embeds every aggregate") {
  std::vector<CsvRecord> rows;
  for (int n : {1, 2}) {
    CsvRecord r;
    r.num_aps = n;
    r.total_throughput_bps = n * 1e9;
    r.avg_delay_s = 0.01;
    rows.push_back(r);
  }
  const std::string py = plot_script(aggregate(rows), "fig");
  CHECK(py.find("import matplotlib") != std::string::npos);
  CHECK(py.find("'coordinated'") != std::string::npos);
  CHECK(py.find("(1, 1,") != std::string::npos);
  CHECK(py.find("(2, 2,") != std::string::npos);
  CHECK(py.find("fill_between") != std::string::npos);
  CHECK(py.find("_throughput.png") != std::string::npos);
  CHECK(py.find("_delay.png") != std::string::npos);
}

TEST_CASE("shuffling phi permutes each AP column and rebuilds clusters") {
  const FingerprintDB& db = office_db();
  const FingerprintDB s = shuffle_phi(db, 4);
  CHECK(s.phi != db.phi);
  for (int m = 0; m < db.num_aps(); ++m) {
    std::vector<int> a(db.phi.col(m).data(), db.phi.col(m).data() + db.num_lps());
    std::vector<int> b(s.phi.col(m).data(), s.phi.col(m).data() + db.num_lps());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  CHECK(s.psi == db.psi);
  for (const auto& [key, ex] : s.exemplars)
    CHECK(ex.rows() == std::min<Eigen::Index>(3, static_cast<Eigen::Index>(s.members(key.ap, key.sector).size())));
}

TEST_CASE("verification without existing links compares against the unconstrained optimum") {
  const Environment env = tiny_env();
  const FingerprintDB db = build_offline_db(env);
  VerifyOptions opt;
  opt.instances = 40;
  opt.max_existing = 0;
  const VerifyReport rep = verify_pipeline(env, db, opt);
  CHECK(rep.instances == 40);
  CHECK(rep.violations == 0);
  for (const InstanceResult& r : rep.details) {
    CHECK(r.existing_links == 0);
    CHECK(r.achieved <= r.optimum + 1e-6);
  }
  CHECK(rep.mean_ratio > 0.5);
  CHECK(rep.mean_ratio <= 1.0 + 1e-12);
}

TEST_CASE("verification is deterministic and detects violations when elimination is off") {
  const Environment env = tiny_env();
  const FingerprintDB db = build_offline_db(env);
  VerifyOptions opt;
  opt.instances = 150;
  const VerifyReport a = verify_pipeline(env, db, opt);
  const VerifyReport b = verify_pipeline(env, db, opt);
  CHECK(a.violations == b.violations);
  CHECK(a.mean_ratio == b.mean_ratio);
  CHECK(a.violations == 0);
  opt.selector.bad_beam_rule = BadBeamRule::kOff;
  CHECK(verify_pipeline(env, db, opt).violations > 0);
  CHECK_THROWS_AS(verify_pipeline(env, db, VerifyOptions{0}), std::invalid_argument);
  CHECK_THROWS_AS(verify_pipeline(default_office(), db, opt), std::invalid_argument);
}
