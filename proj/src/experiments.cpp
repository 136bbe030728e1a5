#include "mmcoord/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace mmcoord {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string csv_header() {
  return "mac_mode,num_aps,seed,total_throughput_bps,avg_delay_s,collisions,handovers,fst_fallbacks,bf_airtime_s";
}

std::string csv_row(const MetricsReport& r) {
  std::string row = to_string(r.mode) + "," + std::to_string(r.num_aps) + "," + std::to_string(r.seed) + ",";
  row += fmt("%.3f", r.total_throughput_bps) + ",";
  if (r.avg_delay_s) row += fmt("%.9g", *r.avg_delay_s);
  row += "," + std::to_string(r.collisions) + "," + std::to_string(r.handovers) + "," + std::to_string(r.fst_fallbacks);
  row += "," + fmt("%.9g", r.bf_airtime_s);
  return row;
}

CsvRecord to_record(const MetricsReport& r) {
  return {r.mode, r.num_aps, r.seed, r.total_throughput_bps, r.avg_delay_s, r.collisions, r.handovers, r.fst_fallbacks,
          r.bf_airtime_s};
}

std::vector<CsvRecord> parse_results_csv(const std::string& text) {
  std::vector<CsvRecord> out;
  std::istringstream in(text);
  std::string line;
  bool header_seen = false;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != csv_header()) throw std::runtime_error("results CSV: unexpected header on line " + std::to_string(number));
      header_seen = true;
      continue;
    }
    const std::vector<std::string> c = split_csv_line(line);
    if (c.size() != 9) throw std::runtime_error("results CSV: line " + std::to_string(number) + " needs 9 fields");
    try {
      CsvRecord r;
      r.mode = parse_mac_mode(c[0]);
      r.num_aps = std::stoi(c[1]);
      r.seed = std::stoull(c[2]);
      r.total_throughput_bps = std::stod(c[3]);
      if (!c[4].empty()) r.avg_delay_s = std::stod(c[4]);
      r.collisions = std::stoull(c[5]);
      r.handovers = std::stoull(c[6]);
      r.fst_fallbacks = std::stoull(c[7]);
      r.bf_airtime_s = std::stod(c[8]);
      out.push_back(r);
    } catch (const std::exception& e) {
      throw std::runtime_error("results CSV: line " + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

std::vector<RunKey> sweep_plan(const SweepSpec& sweep) {
  std::vector<RunKey> plan;
  for (MacMode mode : sweep.modes)
    for (int n : sweep.ap_counts)
      for (std::uint64_t seed : sweep.seeds) plan.push_back({mode, n, seed});
  return plan;
}

void run_sweep(const Scenario& scenario, const FingerprintDB& db, int jobs,
               const std::function<void(const MetricsReport&)>& sink) {
  if (scenario.sweep.seeds.empty()) throw std::invalid_argument("sweep needs at least one seed");
  if (scenario.sweep.ap_counts.empty()) throw std::invalid_argument("sweep needs at least one AP count");
  if (scenario.sweep.modes.empty()) throw std::invalid_argument("sweep needs at least one MAC mode");
  const std::vector<RunKey> plan = sweep_plan(scenario.sweep);
  const std::size_t n = plan.size();
  std::vector<std::optional<MetricsReport>> done(n);
  std::vector<bool> failed(n, false);
  std::exception_ptr first_error;
  std::size_t first_error_index = n;
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || stop) return;
      SimConfig cfg = scenario.sim;
      cfg.mode = plan[i].mode;
      cfg.num_aps_active = plan[i].num_aps;
      cfg.seed = plan[i].seed;
      try {
        MetricsReport r = run_simulation(scenario.env, db, cfg);
        std::lock_guard lock(mu);
        done[i] = std::move(r);
      } catch (...) {
        std::lock_guard lock(mu);
        failed[i] = true;
        if (i < first_error_index) {
          first_error_index = i;
          first_error = std::current_exception();
        }
        stop = true;
      }
      cv.notify_all();
    }
  };

  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);

  // The calling thread drains results in plan order; with one job it also runs them.
  std::size_t emitted = 0;
  if (threads == 1) {
    worker();
  }
  {
    std::unique_lock lock(mu);
    while (emitted < n) {
      cv.wait(lock, [&] { return done[emitted].has_value() || failed[emitted] || (stop && next >= n && pool.empty()); });
      if (!done[emitted]) break;
      const MetricsReport r = *done[emitted];
      ++emitted;
      lock.unlock();
      sink(r);
      lock.lock();
    }
  }
  for (std::thread& t : pool) t.join();
  // Anything finished after a stop is still flushed in order.
  while (emitted < n && done[emitted]) sink(*done[emitted++]);
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<Aggregate> aggregate(const std::vector<CsvRecord>& rows) {
  std::map<std::pair<int, int>, std::vector<const CsvRecord*>> groups;
  for (const CsvRecord& r : rows) groups[{static_cast<int>(r.mode), r.num_aps}].push_back(&r);
  std::vector<Aggregate> out;
  for (const auto& [key, members] : groups) {
    Aggregate a{static_cast<MacMode>(key.first), key.second};
    a.runs = static_cast<int>(members.size());
    a.throughput_min = a.delay_min = std::numeric_limits<double>::infinity();
    a.throughput_max = a.delay_max = -std::numeric_limits<double>::infinity();
    double tsum = 0.0;
    double dsum = 0.0;
    for (const CsvRecord* r : members) {
      tsum += r->total_throughput_bps;
      a.throughput_min = std::min(a.throughput_min, r->total_throughput_bps);
      a.throughput_max = std::max(a.throughput_max, r->total_throughput_bps);
      if (r->avg_delay_s) {
        ++a.delay_runs;
        dsum += *r->avg_delay_s;
        a.delay_min = std::min(a.delay_min, *r->avg_delay_s);
        a.delay_max = std::max(a.delay_max, *r->avg_delay_s);
      }
    }
    a.throughput_mean = tsum / a.runs;
    if (a.delay_runs > 0) {
      a.delay_mean = dsum / a.delay_runs;
    } else {
      a.delay_min = a.delay_max = 0.0;
    }
    out.push_back(a);
  }
  return out;
}

std::string plot_script(const std::vector<Aggregate>& aggregates, const std::string& png_prefix) {
  std::ostringstream py;
  py << "#!/usr/bin/env python3\n"
     << "# Regenerates the AP-count curves from the embedded sweep summary.\n"
     << "import os\n"
     << "import matplotlib\n"
     << "matplotlib.use('Agg')\n"
     << "import matplotlib.pyplot as plt\n\n"
     << "# mode -> list of (num_aps, thr_mean, thr_min, thr_max, delay_mean, delay_min, delay_max)\n"
     << "DATA = {\n";
  std::map<std::string, std::vector<const Aggregate*>> by_mode;
  for (const Aggregate& a : aggregates) by_mode[to_string(a.mode)].push_back(&a);
  for (const auto& [mode, list] : by_mode) {
    py << "    '" << mode << "': [\n";
    for (const Aggregate* a : list) {
      py << "        (" << a->num_aps << ", " << fmt("%.6g", a->throughput_mean / 1e9) << ", "
         << fmt("%.6g", a->throughput_min / 1e9) << ", " << fmt("%.6g", a->throughput_max / 1e9) << ", ";
      if (a->delay_runs > 0)
        py << fmt("%.6g", a->delay_mean * 1e3) << ", " << fmt("%.6g", a->delay_min * 1e3) << ", "
           << fmt("%.6g", a->delay_max * 1e3);
      else
        py << "None, None, None";
      py << "),\n";
    }
    py << "    ],\n";
  }
  py << "}\n\n"
     << "LABELS = {'coordinated': 'Coordinated Wi-Fi/WiGig', 'dcf': 'IEEE 802.11ad DCF'}\n"
     << "HERE = os.path.dirname(os.path.abspath(__file__))\n"
     << "PREFIX = os.path.join(HERE, '" << png_prefix << "')\n\n"
     << "def draw(column, ylabel, suffix):\n"
     << "    fig, ax = plt.subplots(figsize=(6, 4))\n"
     << "    for mode, rows in DATA.items():\n"
     << "        rows = [r for r in rows if r[column] is not None]\n"
     << "        if not rows:\n"
     << "            continue\n"
     << "        x = [r[0] for r in rows]\n"
     << "        ax.plot(x, [r[column] for r in rows], marker='o', label=LABELS.get(mode, mode))\n"
     << "        ax.fill_between(x, [r[column + 1] for r in rows], [r[column + 2] for r in rows], alpha=0.2)\n"
     << "    ax.set_xlabel('Number of APs')\n"
     << "    ax.set_ylabel(ylabel)\n"
     << "    ax.grid(True, alpha=0.3)\n"
     << "    ax.legend()\n"
     << "    fig.tight_layout()\n"
     << "    fig.savefig(PREFIX + suffix, dpi=150)\n\n"
     << "draw(1, 'Average total throughput [Gbps]', '_throughput.png')\n"
     << "draw(4, 'Average packet delay [ms]', '_delay.png')\n";
  return py.str();
}

// -- verification ----------------------------------------------------------------

FingerprintDB shuffle_phi(const FingerprintDB& db, std::uint64_t seed, const ClusterOptions& options) {
  FingerprintDB out = db;
  std::mt19937_64 rng(seed);
  for (int m = 0; m < db.num_aps(); ++m) {
    std::vector<int> perm(static_cast<std::size_t>(db.num_lps()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int l = 0; l < db.num_lps(); ++l) out.phi(l, m) = db.phi(perm[l], m);
  }
  rebuild_clusters(out, options);
  return out;
}

VerifyReport verify_pipeline(const Environment& env, const FingerprintDB& db, const VerifyOptions& options) {
  if (options.instances < 1) throw std::invalid_argument("verify needs at least one instance");
  if (db.num_aps() != env.num_aps() || db.num_lps() != env.num_lps())
    throw std::invalid_argument("fingerprint DB shape does not match the environment");
  const int num_aps = env.num_aps();
  const int max_existing = options.max_existing < 0 ? num_aps - 1 : std::min(options.max_existing, num_aps - 1);
  VerifyReport report;
  report.instances = options.instances;
  report.min_ratio = std::numeric_limits<double>::infinity();
  double ratio_sum = 0.0;

  for (int i = 0; i < options.instances; ++i) {
    std::mt19937_64 rng(options.seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> ux(0.0, env.room_width);
    std::uniform_real_distribution<double> uy(0.0, env.room_depth);
    std::uniform_real_distribution<double> uload(options.load_min_bps, options.load_max_bps);
    std::uniform_int_distribution<int> ucount(0, std::max(max_existing, 0));
    std::uniform_int_distribution<int> ulp(0, env.num_lps() - 1);
    auto place = [&] {
      if (options.at_learning_points) return env.lps[static_cast<std::size_t>(ulp(rng))];
      const double x = ux(rng);
      return Point(x, uy(rng));
    };

    LinkTable links;
    const int wanted = ucount(rng);
    for (int attempt = 0; attempt < 8 * wanted && static_cast<int>(links.size()) < wanted; ++attempt) {
      const Point p = place();
      const double load = uload(rng);
      const OnlineFingerprint fp = measure_online_fingerprint(env, p, rng);
      const PipelineResult r = run_selection_pipeline(env, db, fp, p, links, num_aps, options.selector);
      if (r.assignment) {
        const int ue = static_cast<int>(links.size());
        links.add({r.assignment->ap, ue, r.assignment->beam, r.assignment->mcs, r.assignment->rx_power_dbm, load, p});
      }
    }

    InstanceResult res;
    res.existing_links = static_cast<int>(links.size());
    const Point p = place();
    const double load = uload(rng);
    const OnlineFingerprint fp = measure_online_fingerprint(env, p, rng);
    const PipelineResult r = run_selection_pipeline(env, db, fp, p, links, num_aps, options.selector);
    const OptimalChoice opt = brute_force_optimal(env, links, p, load, num_aps);
    res.chosen = r.assignment;
    res.optimal = opt.assignment;
    res.optimum = opt.objective;
    res.achieved = objective(env, links, r.assignment, load);
    if (r.assignment) {
      ++report.assigned;
      res.violation = links.ap_used(r.assignment->ap) || r.assignment->mcs < 1 ||
                      !protects_existing(env, links, r.assignment->ap, r.assignment->beam);
    }
    if (opt.assignment) ++report.optimal_feasible;
    if (res.violation) ++report.violations;
    const double ratio = res.optimum > 0 ? res.achieved / res.optimum : 1.0;
    ratio_sum += ratio;
    report.min_ratio = std::min(report.min_ratio, ratio);
    report.details.push_back(std::move(res));
  }
  report.mean_ratio = ratio_sum / options.instances;
  return report;
}

}  // namespace mmcoord
