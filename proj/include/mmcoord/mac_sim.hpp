#ifndef MMCOORD_MAC_SIM_HPP
#define MMCOORD_MAC_SIM_HPP

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mmcoord/env_model.hpp"
#include "mmcoord/fingerprint_db.hpp"
#include "mmcoord/link_selector.hpp"

namespace mmcoord {

enum class MacMode { kCoordinated, kDcf };

std::string to_string(MacMode mode);
/// Accepts "coordinated" or "dcf"; throws std::invalid_argument otherwise.
MacMode parse_mac_mode(const std::string& text);

/// Frame airtimes and contention parameters, all in seconds / slots.
struct ProtocolTiming {
  // 5 GHz signalling frames.
  double mreq = 50e-6;
  double mresp = 50e-6;
  double switch_on = 50e-6;
  double navset = 50e-6;
  double bid = 50e-6;
  double nack = 50e-6;
  // 60 GHz beam training.
  double brp_slot = 20e-6;
  double fbk = 50e-6;
  double sweep_slot = 15e-6;
  double ssw_feedback = 50e-6;
  // 5 GHz CSMA.
  double slot_5 = 9e-6;
  double sifs_5 = 16e-6;
  double difs_5 = 34e-6;
  int cw_min_5 = 16;
  int cw_max_5 = 1024;
  // 60 GHz CSMA used by the DCF baseline (DMG slot/SIFS/DIFS).
  double slot_60 = 5e-6;
  double sifs_60 = 3e-6;
  double difs_60 = 13e-6;
  int cw_min_60 = 16;
  int cw_max_60 = 1024;

  void validate() const;
};

struct SimConfig {
  int num_aps_active = 8;
  int num_ues = 50;
  MacMode mode = MacMode::kCoordinated;
  double sim_duration = 1.0;
  double beacon_interval = 20e-3;
  double txop_interval = 1e-3;
  int packet_size_bits = 12000;
  double load_min_bps = 0.5e9;
  double load_max_bps = 5.0e9;
  int candidate_limit = 2;
  int best_beam_limit = 6;
  std::uint64_t seed = 1;
  ProtocolTiming timing;

  int queue_limit_packets = 250;  // per-UE drop-tail buffer
  int max_aggregate_packets = 64;  // packets per 60 GHz data burst
  int retry_limit = 7;
  double cs_threshold_dbm = -68.0;
  double fst_rate_bps = 300e6;
  bool fst_enabled = true;
  bool blockage_enabled = false;
  double blockage_rate_hz = 2.0;  // per-link Poisson blockage rate when enabled
  double overlap_margin_db = 3.0;
  BadBeamRule bad_beam_rule = BadBeamRule::kServingBeam;
  ExpectedMcsRule expected_mcs_rule = ExpectedMcsRule::kNearestLp;

  /// Optional fixed UE placement / offered loads (otherwise drawn from the seed).
  std::vector<Point> ue_positions;
  std::vector<double> ue_loads;

  void validate(const Environment& env) const;
  SelectorConfig selector() const;
};

/// One UE's offered load and its Poisson packet arrival times.
struct TrafficStream {
  double load_bps = 0.0;
  std::vector<double> arrivals;
};

/// Seeded Poisson source: exponential inter-arrivals at `load / packet_size`.
class PoissonSource {
 public:
  PoissonSource(double load_bps, int packet_size_bits, std::uint64_t seed);
  double peek() const { return next_; }
  double pop();
  double rate_pps() const { return rate_; }

 private:
  double rate_;
  std::mt19937_64 rng_;
  std::exponential_distribution<double> gap_;
  double next_;
};

/// Draws one load per UE uniformly from the configured range, then Poisson
/// arrivals up to sim_duration. The same streams drive the simulator.
std::vector<TrafficStream> generate_traffic(const SimConfig& config);
std::vector<double> draw_loads(const SimConfig& config);
std::vector<Point> draw_ue_positions(const Environment& env, const SimConfig& config);

struct MetricsReport {
  MacMode mode = MacMode::kCoordinated;
  int num_aps = 0;
  std::uint64_t seed = 0;
  double sim_duration = 0.0;
  double total_throughput_bps = 0.0;
  std::optional<double> avg_delay_s;  // absent when nothing was delivered
  std::uint64_t delivered_packets = 0;
  std::uint64_t generated_packets = 0;
  std::uint64_t dropped_packets = 0;
  double delivered_bits = 0.0;
  double generated_bits = 0.0;
  double offered_load_bps = 0.0;
  std::vector<double> delivered_bits_per_ue;
  std::vector<double> generated_bits_per_ue;
  double min_delay_s = 0.0;
  std::uint64_t collisions = 0;
  std::uint64_t handovers = 0;
  std::uint64_t fst_fallbacks = 0;
  double bf_airtime_s = 0.0;
  std::uint64_t links_established = 0;
  /// Links whose DB-predicted MCS of an existing link fell below its announced
  /// MCS at establishment (coordinated mode).
  std::uint64_t db_protection_violations = 0;
  std::uint64_t true_protection_violations = 0;
  std::uint64_t min_admitted_mcs = 0;
};

/// Single-threaded discrete-event run of one (config, seed).
class Simulator {
 public:
  Simulator(const Environment& env, const FingerprintDB& db, SimConfig config);
  ~Simulator();
  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  /// Newline-delimited JSON event trace; must be set before run().
  void set_trace(std::ostream* out);
  /// Scripted blockage of `ue`'s link at time `at` (no-op if it has none then).
  void schedule_blockage(int ue, double at);

  void run();
  MetricsReport report() const;

  const std::vector<Point>& ue_positions() const;
  const std::vector<double>& ue_loads() const;

 private:
  struct State;
  std::unique_ptr<State> s_;
};

/// Convenience: construct, run, report.
MetricsReport run_simulation(const Environment& env, const FingerprintDB& db, const SimConfig& config,
                             std::ostream* trace = nullptr);

}  // namespace mmcoord

#endif  // MMCOORD_MAC_SIM_HPP
