#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mmcoord/mac_sim.hpp"

using namespace mmcoord;
using nlohmann::json;

namespace {

const Environment& office() {
  static const Environment env = default_office();
  return env;
}

const FingerprintDB& office_db() {
  static const FingerprintDB db = build_offline_db(office());
  return db;
}

SimConfig short_config(MacMode mode, int aps, std::uint64_t seed, double duration = 0.05) {
  SimConfig c;
  c.mode = mode;
  c.num_aps_active = aps;
  c.seed = seed;
  c.sim_duration = duration;
  return c;
}

std::vector<json> traced(const SimConfig& c, MetricsReport* report = nullptr) {
  std::ostringstream out;
  const MetricsReport r = run_simulation(office(), office_db(), c, &out);
  if (report) *report = r;
  std::vector<json> events;
  std::istringstream in(out.str());
  std::string line;
  while (std::getline(in, line)) events.push_back(json::parse(line));
  return events;
}

}  // namespace

TEST_CASE("mode names round trip") {
  CHECK(to_string(MacMode::kCoordinated) == "coordinated");
  CHECK(to_string(MacMode::kDcf) == "dcf");
  CHECK(parse_mac_mode("dcf") == MacMode::kDcf);
  CHECK(parse_mac_mode("coordinated") == MacMode::kCoordinated);
  CHECK_THROWS_AS(parse_mac_mode("csma"), std::invalid_argument);
}

TEST_CASE("configuration validation") {
  const Environment& env = office();
  SimConfig c;
  CHECK_NOTHROW(c.validate(env));
  c.num_aps_active = 9;
  CHECK_THROWS_AS(c.validate(env), std::invalid_argument);
  c = SimConfig{};
  c.txop_interval = 0;
  CHECK_THROWS_AS(c.validate(env), std::invalid_argument);
  c = SimConfig{};
  c.load_min_bps = 6e9;
  CHECK_THROWS_AS(c.validate(env), std::invalid_argument);
  c = SimConfig{};
  c.fst_rate_bps = 0;
  CHECK_THROWS_AS(c.validate(env), std::invalid_argument);
}

TEST_CASE("Poisson source mean inter-arrival matches the configured rate") {
  PoissonSource src(1.2e9, 12000, 99);
  const double rate = 1.2e9 / 12000;
  CHECK(src.rate_pps() == doctest::Approx(rate));
  const int n = 200000;
  double last = 0.0;
  for (int i = 0; i < n; ++i) last = src.pop();
  const double mean_gap = last / n;
  CHECK(std::abs(mean_gap * rate - 1.0) < 0.02);
}

TEST_CASE("traffic draws are seeded and within range") {
  SimConfig c = short_config(MacMode::kCoordinated, 8, 4, 0.01);
  const std::vector<double> a = draw_loads(c);
  CHECK(a == draw_loads(c));
  CHECK(a.size() == 50);
  for (double l : a) {
    CHECK(l >= c.load_min_bps);
    CHECK(l <= c.load_max_bps);
  }
  c.seed = 5;
  CHECK(a != draw_loads(c));
  const std::vector<Point> p = draw_ue_positions(office(), c);
  for (const Point& q : p) CHECK(office().contains(q));
  const std::vector<TrafficStream> t = generate_traffic(c);
  for (const TrafficStream& s : t) {
    CHECK(std::is_sorted(s.arrivals.begin(), s.arrivals.end()));
    if (!s.arrivals.empty()) CHECK(s.arrivals.back() <= c.sim_duration);
  }
}

TEST_CASE("fixed placement and loads are honoured") {
  SimConfig c = short_config(MacMode::kCoordinated, 2, 1, 0.01);
  c.num_ues = 2;
  c.ue_positions = {Point(3, 3), Point(20, 8)};
  c.ue_loads = {1e9, 2e9};
  Simulator sim(office(), office_db(), c);
  CHECK(sim.ue_positions() == c.ue_positions);
  CHECK(sim.ue_loads() == c.ue_loads);
}

TEST_CASE("conservation: delivered never exceeds generated") {
  for (MacMode mode : {MacMode::kCoordinated, MacMode::kDcf})
    for (int aps : {1, 4, 8}) {
      const MetricsReport r = run_simulation(office(), office_db(), short_config(mode, aps, 3));
      REQUIRE(r.delivered_bits_per_ue.size() == r.generated_bits_per_ue.size());
      for (std::size_t u = 0; u < r.delivered_bits_per_ue.size(); ++u)
        CHECK(r.delivered_bits_per_ue[u] <= r.generated_bits_per_ue[u]);
      CHECK(r.delivered_bits <= r.generated_bits);
      CHECK(r.delivered_packets + r.dropped_packets <= r.generated_packets);
      CHECK(r.total_throughput_bps <= r.offered_load_bps * 1.05);
      CHECK(r.total_throughput_bps == doctest::Approx(r.delivered_bits / r.sim_duration));
    }
}

TEST_CASE("determinism: same seed, identical trace bytes and report") {
  for (MacMode mode : {MacMode::kCoordinated, MacMode::kDcf}) {
    const SimConfig c = short_config(mode, 6, 42, 0.03);
    std::ostringstream a, b;
    const MetricsReport ra = run_simulation(office(), office_db(), c, &a);
    const MetricsReport rb = run_simulation(office(), office_db(), c, &b);
    CHECK(a.str() == b.str());
    CHECK(!a.str().empty());
    CHECK(ra.total_throughput_bps == rb.total_throughput_bps);
    CHECK(ra.avg_delay_s == rb.avg_delay_s);
    CHECK(ra.collisions == rb.collisions);
    // Tracing does not perturb the run.
    const MetricsReport rc = run_simulation(office(), office_db(), c);
    CHECK(rc.total_throughput_bps == ra.total_throughput_bps);
  }
}

TEST_CASE("different seeds give different runs") {
  const MetricsReport a = run_simulation(office(), office_db(), short_config(MacMode::kCoordinated, 8, 1));
  const MetricsReport b = run_simulation(office(), office_db(), short_config(MacMode::kCoordinated, 8, 2));
  CHECK(a.total_throughput_bps != b.total_throughput_bps);
}

TEST_CASE("NAVset intervals never overlap and the clock never runs backwards") {
  for (int aps : {2, 4, 8})
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const std::vector<json> events = traced(short_config(MacMode::kCoordinated, aps, seed));
      double last_time = 0.0;
      double last_navset_end = -1.0;
      int navsets = 0;
      for (const json& e : events) {
        const double t = e.at("time").get<double>();
        CHECK(t >= last_time);
        last_time = t;
        if (e.at("type") == "navset") {
          const double start = e.at("details").at("start").get<double>();
          const double end = e.at("details").at("end").get<double>();
          CHECK(end > start);
          CHECK(start >= last_navset_end - 1e-12);
          last_navset_end = end;
          ++navsets;
        }
      }
      if (aps > 1) CHECK(navsets > 0);
    }
}

TEST_CASE("every admitted link carries at least MCS1 and passes the DB protection check") {
  for (int aps : {2, 8}) {
    MetricsReport r;
    const std::vector<json> events = traced(short_config(MacMode::kCoordinated, aps, 7, 0.1), &r);
    int bids = 0;
    for (const json& e : events)
      if (e.at("type") == "bid") {
        CHECK(e.at("details").at("mcs").get<int>() >= 1);
        ++bids;
      }
    CHECK(bids > 0);
    CHECK(r.links_established == static_cast<std::uint64_t>(bids));
    CHECK(r.min_admitted_mcs >= 1);
    CHECK(r.db_protection_violations == 0);
  }
}

TEST_CASE("coordinated traces follow measure, NAVset, training, then BID or NACK") {
  const std::vector<json> events = traced(short_config(MacMode::kCoordinated, 4, 5));
  std::map<std::string, int> count;
  for (const json& e : events) ++count[e.at("type").get<std::string>()];
  CHECK(count["txop_grant"] > 0);
  CHECK(count["measure"] <= count["txop_grant"]);
  CHECK(count["train"] == count["navset"]);
  CHECK(count["bid"] <= count["train"]);
}

TEST_CASE("a run that delivers nothing reports zero throughput and no delay") {
  SimConfig c = short_config(MacMode::kCoordinated, 1, 1, 1e-6);
  MetricsReport r = run_simulation(office(), office_db(), c);
  CHECK(r.total_throughput_bps == 0.0);
  CHECK_FALSE(r.avg_delay_s.has_value());
  c.num_ues = 0;
  c.sim_duration = 0.01;
  r = run_simulation(office(), office_db(), c);
  CHECK(r.delivered_packets == 0);
  CHECK_FALSE(r.avg_delay_s.has_value());
}

TEST_CASE("single UE next to a single AP: throughput tracks the offered load") {
  SimConfig c = short_config(MacMode::kCoordinated, 1, 1, 0.2);
  c.num_ues = 1;
  c.ue_positions = {office().aps[0].position + Point(1.0, 2.0)};
  c.ue_loads = {1e9};
  const MetricsReport r = run_simulation(office(), office_db(), c);
  CHECK(r.total_throughput_bps == doctest::Approx(r.offered_load_bps).epsilon(0.1));
  CHECK(r.collisions == 0);
  CHECK(r.fst_fallbacks == 0);
  REQUIRE(r.avg_delay_s);
  CHECK(*r.avg_delay_s > 0.0);
  CHECK(*r.avg_delay_s >= r.min_delay_s);
}

TEST_CASE("DCF never uses the coordinated machinery") {
  const MetricsReport r = run_simulation(office(), office_db(), short_config(MacMode::kDcf, 4, 2));
  CHECK(r.fst_fallbacks == 0);
  CHECK(r.handovers == 0);
  CHECK(r.db_protection_violations == 0);
  CHECK(r.bf_airtime_s > 0.0);
}

TEST_CASE("sector sweeps cost more airtime than fingerprint training") {
  const MetricsReport coord = run_simulation(office(), office_db(), short_config(MacMode::kCoordinated, 1, 4, 0.1));
  const MetricsReport dcf = run_simulation(office(), office_db(), short_config(MacMode::kDcf, 1, 4, 0.1));
  CHECK(coord.bf_airtime_s < dcf.bf_airtime_s);
}

TEST_CASE("a scripted blockage tears the link down and triggers a NACK") {
  SimConfig c = short_config(MacMode::kCoordinated, 2, 1, 0.05);
  c.num_ues = 1;
  c.ue_positions = {Point(6, 6)};
  c.ue_loads = {4e9};
  std::ostringstream out;
  Simulator sim(office(), office_db(), c);
  sim.set_trace(&out);
  sim.schedule_blockage(0, 0.0105);
  CHECK_THROWS_AS(sim.schedule_blockage(3, 0.01), std::out_of_range);
  sim.run();
  CHECK_THROWS_AS(sim.run(), std::logic_error);
  const std::string text = out.str();
  CHECK(text.find("\"blockage\"") != std::string::npos);
  CHECK(text.find("\"link_lost\"") != std::string::npos);
  CHECK(text.find("\"nack\"") != std::string::npos);
}

TEST_CASE("random blockage keeps the invariants") {
  SimConfig c = short_config(MacMode::kCoordinated, 8, 9, 0.1);
  c.blockage_enabled = true;
  c.blockage_rate_hz = 50.0;
  const MetricsReport r = run_simulation(office(), office_db(), c);
  CHECK(r.delivered_bits <= r.generated_bits);
  CHECK(r.handovers > 0);
}

TEST_CASE("disabling FST keeps traffic on 60 GHz only") {
  SimConfig c = short_config(MacMode::kCoordinated, 8, 3);
  c.fst_enabled = false;
  std::ostringstream out;
  run_simulation(office(), office_db(), c, &out);
  CHECK(out.str().find("\"fst_data\"") == std::string::npos);
}
