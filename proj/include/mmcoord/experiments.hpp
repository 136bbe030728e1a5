#ifndef MMCOORD_EXPERIMENTS_HPP
#define MMCOORD_EXPERIMENTS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mmcoord/fingerprint_db.hpp"
#include "mmcoord/link_selector.hpp"
#include "mmcoord/mac_sim.hpp"
#include "mmcoord/scenario.hpp"

namespace mmcoord {

// -- results CSV ---------------------------------------------------------------

std::string csv_header();
/// One row; the delay column is empty when nothing was delivered.
std::string csv_row(const MetricsReport& r);

struct CsvRecord {
  MacMode mode = MacMode::kCoordinated;
  int num_aps = 0;
  std::uint64_t seed = 0;
  double total_throughput_bps = 0.0;
  std::optional<double> avg_delay_s;
  std::uint64_t collisions = 0;
  std::uint64_t handovers = 0;
  std::uint64_t fst_fallbacks = 0;
  double bf_airtime_s = 0.0;
};

CsvRecord to_record(const MetricsReport& r);
/// Parses CSV text written by csv_header/csv_row; `#` lines are skipped.
std::vector<CsvRecord> parse_results_csv(const std::string& text);

// -- sweeps --------------------------------------------------------------------

struct RunKey {
  MacMode mode;
  int num_aps;
  std::uint64_t seed;
};

/// Every (mode, ap_count, seed) of the sweep, in output order.
std::vector<RunKey> sweep_plan(const SweepSpec& sweep);

/// Runs the plan on up to `jobs` threads. `sink` sees finished reports in plan
/// order. If a run throws, the reports before it are still delivered and the
/// first error is rethrown.
void run_sweep(const Scenario& scenario, const FingerprintDB& db, int jobs,
               const std::function<void(const MetricsReport&)>& sink);

struct Aggregate {
  MacMode mode;
  int num_aps;
  int runs = 0;
  double throughput_mean = 0.0;
  double throughput_min = 0.0;
  double throughput_max = 0.0;
  int delay_runs = 0;  // runs that reported a delay
  double delay_mean = 0.0;
  double delay_min = 0.0;
  double delay_max = 0.0;
};

/// Mean/min/max per (mode, num_aps), ordered by mode then AP count.
std::vector<Aggregate> aggregate(const std::vector<CsvRecord>& rows);

/// Self-contained matplotlib script drawing throughput and delay against the
/// AP count (mean line, min/max band), writing two PNGs next to itself.
std::string plot_script(const std::vector<Aggregate>& aggregates, const std::string& png_prefix);

// -- pipeline verification -----------------------------------------------------

struct VerifyOptions {
  int instances = 100;
  std::uint64_t seed = 1;
  int max_existing = -1;  // -1: up to num_aps - 1
  double load_min_bps = 0.5e9;
  double load_max_bps = 5.0e9;
  /// UEs stand on random learning points (where the surveyed maps are exact);
  /// otherwise anywhere in the room.
  bool at_learning_points = true;
  SelectorConfig selector;
};

struct InstanceResult {
  int existing_links = 0;
  std::optional<Assignment> chosen;
  std::optional<Assignment> optimal;
  double achieved = 0.0;
  double optimum = 0.0;
  bool violation = false;
};

struct VerifyReport {
  int instances = 0;
  int violations = 0;
  int assigned = 0;         // instances where the pipeline admitted a link
  int optimal_feasible = 0; // instances where some feasible pair existed
  double mean_ratio = 0.0;
  double min_ratio = 0.0;
  std::vector<InstanceResult> details;
};

/// Random instances: existing links are admitted one UE at a time by the
/// pipeline itself, then a new UE is placed. The pipeline's choice is checked
/// against the exhaustive oracle's feasibility test and objective.
VerifyReport verify_pipeline(const Environment& env, const FingerprintDB& db, const VerifyOptions& options);

/// Negative control: best-sector entries permuted across LPs, independently
/// per AP, with exemplars and MCS clusters rebuilt from the corrupted map.
FingerprintDB shuffle_phi(const FingerprintDB& db, std::uint64_t seed, const ClusterOptions& options = {});

}  // namespace mmcoord

#endif  // MMCOORD_EXPERIMENTS_HPP
