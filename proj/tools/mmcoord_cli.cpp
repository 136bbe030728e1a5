#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mmcoord/db_io.hpp"
#include "mmcoord/experiments.hpp"
#include "mmcoord/fingerprint_db.hpp"
#include "mmcoord/mac_sim.hpp"
#include "mmcoord/scenario.hpp"

namespace fs = std::filesystem;
using namespace mmcoord;

namespace {

constexpr const char* kOutDirEnv = "MMCOORD_OUT_DIR";

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Relative output paths land under $MMCOORD_OUT_DIR when it is set.
fs::path output_path(const std::string& path) {
  fs::path p(path);
  const char* dir = std::getenv(kOutDirEnv);
  if (p.is_relative() && dir != nullptr && *dir != '\0') p = fs::path(dir) / p;
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

Scenario scenario_from(const std::string& path) {
  return path.empty() ? Scenario{} : load_scenario(path);
}

// Loads the DB and refuses it unless it was surveyed for this environment.
FingerprintDB db_for(const Scenario& sc, const std::string& path) {
  const std::uint64_t expected = sc.env.checksum();
  if (path.empty()) {
    FingerprintDB db = build_offline_db(sc.env, sc.cluster);
    return db;
  }
  FingerprintDB db = load_db(path);
  if (db.env_checksum != expected)
    throw CliError("fingerprint DB " + path + " was built for environment " + checksum_hex(db.env_checksum) +
                   " but the scenario describes " + checksum_hex(expected) + "; rerun survey");
  if (db.num_aps() != sc.env.num_aps() || db.num_lps() != sc.env.num_lps())
    throw CliError("fingerprint DB " + path + " has the wrong shape for the scenario");
  return db;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void print_report(const MetricsReport& r) {
  std::printf("mode=%s aps=%d seed=%llu throughput=%.4f Gb/s", to_string(r.mode).c_str(), r.num_aps,
              static_cast<unsigned long long>(r.seed), r.total_throughput_bps / 1e9);
  if (r.avg_delay_s)
    std::printf(" delay=%.3f ms", *r.avg_delay_s * 1e3);
  else
    std::printf(" delay=n/a");
  std::printf(" collisions=%llu handovers=%llu fst=%llu bf_airtime=%.4f s\n",
              static_cast<unsigned long long>(r.collisions), static_cast<unsigned long long>(r.handovers),
              static_cast<unsigned long long>(r.fst_fallbacks), r.bf_airtime_s);
}

int cmd_survey(const std::string& scenario_path, const std::string& out) {
  const Scenario sc = scenario_from(scenario_path);
  const FingerprintDB db = build_offline_db(sc.env, sc.cluster);
  const fs::path path = output_path(out);
  save_db(db, path.string());
  std::printf("surveyed %d LPs x %d APs, env checksum %s -> %s\n", db.num_lps(), db.num_aps(),
              checksum_hex(db.env_checksum).c_str(), path.string().c_str());
  for (int m = 0; m < db.num_aps(); ++m) {
    int null_lps = 0;
    for (int l = 0; l < db.num_lps(); ++l) null_lps += db.phi(l, m) == kNullSector;
    std::printf("  ap %d: %zu sectors used, NULL at %.1f%% of LPs\n", m, db.covered_sectors(m).size(),
                100.0 * null_lps / db.num_lps());
  }
  return 0;
}

struct RunArgs {
  std::string scenario;
  std::string db;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<int> num_aps;
  std::optional<double> duration;
  std::string out = "results.csv";
  std::string trace;
};

int cmd_run(const RunArgs& a) {
  const Scenario sc = scenario_from(a.scenario);
  const FingerprintDB db = db_for(sc, a.db);
  SimConfig cfg = sc.sim;
  if (a.mode) cfg.mode = parse_mac_mode(*a.mode);
  if (a.seed) cfg.seed = *a.seed;
  if (a.num_aps) cfg.num_aps_active = *a.num_aps;
  if (a.duration) cfg.sim_duration = *a.duration;
  cfg.validate(sc.env);

  std::ofstream trace;
  if (!a.trace.empty()) {
    const fs::path tp = output_path(a.trace);
    trace.open(tp, std::ios::binary | std::ios::trunc);
    if (!trace) throw CliError("cannot write " + tp.string());
  }
  const MetricsReport r = run_simulation(sc.env, db, cfg, a.trace.empty() ? nullptr : &trace);

  const fs::path path = output_path(a.out);
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  if (!fresh) {
    std::ifstream in(path);
    std::string first;
    std::getline(in, first);
    if (first != csv_header()) throw CliError(path.string() + " exists with a different header");
  }
  std::ofstream csv(path, std::ios::app);
  if (!csv) throw CliError("cannot write " + path.string());
  if (fresh) csv << csv_header() << '\n';
  csv << csv_row(r) << '\n';
  print_report(r);
  return 0;
}

struct SweepArgs {
  std::string scenario;
  std::string db;
  std::string out = "sweep.csv";
  int jobs = 1;
  std::optional<double> duration;
};

int cmd_sweep(const SweepArgs& a) {
  Scenario sc = scenario_from(a.scenario);
  if (a.duration) sc.sim.sim_duration = *a.duration;
  const FingerprintDB db = db_for(sc, a.db);
  const fs::path path = output_path(a.out);
  std::ofstream csv(path, std::ios::trunc);
  if (!csv) throw CliError("cannot write " + path.string());
  csv << "# generated " << utc_timestamp() << '\n' << csv_header() << '\n';
  std::vector<CsvRecord> rows;
  run_sweep(sc, db, a.jobs, [&](const MetricsReport& r) {
    csv << csv_row(r) << '\n';
    csv.flush();
    rows.push_back(to_record(r));
    print_report(r);
  });
  const std::string stem = path.stem().string();
  const fs::path script = path.parent_path() / (stem + "_plot.py");
  std::ofstream py(script, std::ios::trunc);
  py << plot_script(aggregate(rows), stem);
  std::printf("wrote %s and %s\n", path.string().c_str(), script.string().c_str());
  return 0;
}

struct VerifyArgs {
  std::string scenario;
  std::string db;
  int instances = 100;
  std::uint64_t seed = 1;
  bool shuffle = false;
  bool uniform = false;
};

int cmd_verify(const VerifyArgs& a) {
  const Scenario sc = scenario_from(a.scenario);
  FingerprintDB db = db_for(sc, a.db);
  if (a.shuffle) db = shuffle_phi(db, a.seed, sc.cluster);
  VerifyOptions opt;
  opt.instances = a.instances;
  opt.seed = a.seed;
  opt.load_min_bps = sc.sim.load_min_bps;
  opt.load_max_bps = sc.sim.load_max_bps;
  opt.selector = sc.sim.selector();
  opt.at_learning_points = !a.uniform;
  const VerifyReport rep = verify_pipeline(sc.env, db, opt);
  std::printf("instances=%d%s\n", rep.instances, a.shuffle ? " (shuffled best-sector map)" : "");
  std::printf("violations=%d\n", rep.violations);
  std::printf("assigned=%d optimum_feasible=%d\n", rep.assigned, rep.optimal_feasible);
  std::printf("mean_ratio=%.4f min_ratio=%.4f\n", rep.mean_ratio, rep.min_ratio);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coordinated Wi-Fi/60 GHz link selection and MAC simulator"};
  app.require_subcommand(1);

  std::string survey_scenario, survey_out = "fingerprint_db.json";
  CLI::App* survey = app.add_subcommand("survey", "Build the offline fingerprint DB for a scenario");
  survey->add_option("--scenario", survey_scenario, "Scenario file (defaults when omitted)");
  survey->add_option("--out", survey_out, "DB output path")->capture_default_str();

  RunArgs run;
  CLI::App* run_cmd = app.add_subcommand("run", "Simulate one (mode, seed) and append a CSV row");
  run_cmd->add_option("--scenario", run.scenario, "Scenario file");
  run_cmd->add_option("--db", run.db, "Fingerprint DB from survey (built in memory when omitted)");
  run_cmd->add_option("--mode", run.mode, "coordinated or dcf")->check(CLI::IsMember({"coordinated", "dcf"}));
  run_cmd->add_option("--seed", run.seed, "Run seed");
  run_cmd->add_option("--aps", run.num_aps, "Active APs");
  run_cmd->add_option("--duration", run.duration, "Simulated seconds");
  run_cmd->add_option("--out", run.out, "Results CSV (appended)")->capture_default_str();
  run_cmd->add_option("--trace", run.trace, "NDJSON event trace path");

  SweepArgs sweep;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run the scenario's sweep grid");
  sweep_cmd->add_option("--scenario", sweep.scenario, "Scenario file");
  sweep_cmd->add_option("--db", sweep.db, "Fingerprint DB from survey");
  sweep_cmd->add_option("--out", sweep.out, "Results CSV")->capture_default_str();
  sweep_cmd->add_option("--jobs", sweep.jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  sweep_cmd->add_option("--duration", sweep.duration, "Simulated seconds per run");

  VerifyArgs verify;
  CLI::App* verify_cmd = app.add_subcommand("verify", "Check link selection against the exhaustive optimum");
  verify_cmd->add_option("--scenario", verify.scenario, "Scenario file");
  verify_cmd->add_option("--db", verify.db, "Fingerprint DB from survey");
  verify_cmd->add_option("--instances", verify.instances, "Random instances")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  verify_cmd->add_option("--seed", verify.seed, "Instance seed")->capture_default_str();
  verify_cmd->add_flag("--shuffle-phi", verify.shuffle, "Negative control: permute the best-sector map");
  verify_cmd->add_flag("--uniform", verify.uniform, "Place UEs anywhere in the room instead of on learning points");

  CLI11_PARSE(app, argc, argv);

  try {
    if (survey->parsed()) return cmd_survey(survey_scenario, survey_out);
    if (run_cmd->parsed()) return cmd_run(run);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep);
    if (verify_cmd->parsed()) return cmd_verify(verify);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
