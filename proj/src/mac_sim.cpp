#include "mmcoord/mac_sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <ostream>
#include <queue>
#include <stdexcept>

#include <json.hpp>

namespace mmcoord {

namespace {

using nlohmann::json;

constexpr double kEps = 1e-12;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

enum class Stream : std::uint64_t { kPositions = 1, kLoads, kArrivals, kFingerprint, kBackoff5, kBackoff60, kBlockage };

std::uint64_t stream_seed(std::uint64_t seed, Stream s, std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ (static_cast<std::uint64_t>(s) << 56)) + index);
}

}  // namespace

std::string to_string(MacMode mode) { return mode == MacMode::kCoordinated ? "coordinated" : "dcf"; }

MacMode parse_mac_mode(const std::string& text) {
  if (text == "coordinated") return MacMode::kCoordinated;
  if (text == "dcf") return MacMode::kDcf;
  throw std::invalid_argument("unknown MAC mode '" + text + "' (expected coordinated|dcf)");
}

void ProtocolTiming::validate() const {
  for (double v : {mreq, mresp, switch_on, navset, bid, nack, brp_slot, fbk, sweep_slot, ssw_feedback, slot_5, sifs_5,
                   difs_5, slot_60, sifs_60, difs_60})
    if (v < 0) throw std::invalid_argument("protocol airtimes must be >= 0");
  if (cw_min_5 < 1 || cw_max_5 < cw_min_5 || cw_min_60 < 1 || cw_max_60 < cw_min_60)
    throw std::invalid_argument("contention windows must satisfy 1 <= CWmin <= CWmax");
}

void SimConfig::validate(const Environment& env) const {
  if (num_aps_active < 1 || num_aps_active > env.num_aps())
    throw std::invalid_argument("num_aps_active must lie in [1, " + std::to_string(env.num_aps()) + "]");
  if (num_ues < 0) throw std::invalid_argument("num_ues must be >= 0");
  if (sim_duration < 0) throw std::invalid_argument("sim_duration must be >= 0");
  if (beacon_interval <= 0 || txop_interval <= 0) throw std::invalid_argument("intervals must be positive");
  if (packet_size_bits <= 0) throw std::invalid_argument("packet size must be positive");
  if (load_min_bps <= 0 || load_max_bps < load_min_bps) throw std::invalid_argument("load range must be positive");
  if (candidate_limit < 1 || best_beam_limit < 1) throw std::invalid_argument("candidate and beam limits must be >= 1");
  if (queue_limit_packets < 1 || max_aggregate_packets < 1 || retry_limit < 0)
    throw std::invalid_argument("queue, aggregation and retry limits must be positive");
  if (fst_rate_bps <= 0) throw std::invalid_argument("FST rate must be positive");
  if (!ue_positions.empty() && static_cast<int>(ue_positions.size()) != num_ues)
    throw std::invalid_argument("ue_positions must list every UE");
  if (!ue_loads.empty() && static_cast<int>(ue_loads.size()) != num_ues)
    throw std::invalid_argument("ue_loads must list every UE");
  for (const Point& p : ue_positions)
    if (!env.contains(p)) throw std::invalid_argument("UE position outside the room");
  timing.validate();
}

SelectorConfig SimConfig::selector() const {
  SelectorConfig s;
  s.best_beam_limit = best_beam_limit;
  s.candidate_limit = candidate_limit;
  s.overlap_margin_db = overlap_margin_db;
  s.bad_beam_rule = bad_beam_rule;
  s.expected_mcs_rule = expected_mcs_rule;
  return s;
}

PoissonSource::PoissonSource(double load_bps, int packet_size_bits, std::uint64_t seed)
    : rate_(load_bps / packet_size_bits), rng_(seed), gap_(rate_), next_(gap_(rng_)) {}

double PoissonSource::pop() {
  const double t = next_;
  next_ += gap_(rng_);
  return t;
}

std::vector<double> draw_loads(const SimConfig& config) {
  if (!config.ue_loads.empty()) return config.ue_loads;
  std::mt19937_64 rng(stream_seed(config.seed, Stream::kLoads));
  std::uniform_real_distribution<double> u(config.load_min_bps, config.load_max_bps);
  std::vector<double> loads(static_cast<std::size_t>(config.num_ues));
  for (double& l : loads) l = u(rng);
  return loads;
}

std::vector<Point> draw_ue_positions(const Environment& env, const SimConfig& config) {
  if (!config.ue_positions.empty()) return config.ue_positions;
  std::mt19937_64 rng(stream_seed(config.seed, Stream::kPositions));
  const double margin = 0.5;
  std::uniform_real_distribution<double> ux(margin, env.room_width - margin);
  std::uniform_real_distribution<double> uy(margin, env.room_depth - margin);
  std::vector<Point> out;
  for (int i = 0; i < config.num_ues; ++i) {
    const double x = ux(rng);
    out.emplace_back(x, uy(rng));
  }
  return out;
}

std::vector<TrafficStream> generate_traffic(const SimConfig& config) {
  std::vector<TrafficStream> out;
  const std::vector<double> loads = draw_loads(config);
  for (int u = 0; u < config.num_ues; ++u) {
    TrafficStream s;
    s.load_bps = loads[u];
    PoissonSource src(loads[u], config.packet_size_bits, stream_seed(config.seed, Stream::kArrivals, u));
    while (src.peek() < config.sim_duration) s.arrivals.push_back(src.pop());
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct Simulator::State {
  enum class Ev : std::uint8_t {
    kBoundary,
    kTxEnd,
    kMedium5Grant,
    kMedium5Free,
    kMeasureDone,
    kNavStart,
    kBrpSlot,
    kTrainingDone,
    kLinkUp,
    kNackDone,
    kHandover,
    kFstDone,
    kBurstStart,
    kAccess,
    kSweepSlot,
    kSweepDone,
    kBlockage,
  };

  struct Event {
    double time;
    int priority;  // lower runs first at equal times
    std::uint64_t seq;
    Ev type;
    int a;
    int b;
    std::uint64_t gen;
  };
  struct Later {
    bool operator()(const Event& x, const Event& y) const {
      if (x.time != y.time) return x.time > y.time;
      if (x.priority != y.priority) return x.priority > y.priority;
      return x.seq > y.seq;
    }
  };

  enum class TxKind : std::uint8_t { kData, kSweep, kBrp };
  struct Tx {
    std::uint64_t id;
    TxKind kind;
    int ap;
    int beam;
    int rx_ue;  // -1 when nobody decodes it
    double end;
    double required_sinr_db;
    double signal_dbm;
    bool corrupted;
    std::uint64_t gen;
  };

  struct Ue {
    Ue(Point p, double l, PoissonSource s) : pos(std::move(p)), load(l), src(std::move(s)) {}
    Point pos;
    double load = 0.0;
    PoissonSource src;
    std::deque<double> queue;
    double generated_bits = 0.0;
    double delivered_bits = 0.0;
    std::uint64_t generated = 0;
    std::uint64_t dropped = 0;
    int assoc_ap = -1;
    // Coordinated-mode bookkeeping.
    bool in_setup = false;
    bool in_fst = false;
    int link_ap = -1;
    std::uint64_t link_serial = 0;
    CandidateSet cands;
    std::size_t cand_idx = 0;
  };

  struct Ap {
    int ue = -1;
    int beam = kNullSector;
    int mcs = kNoMcs;
    double hold_start = 0.0;
    double txop_end = 0.0;
    std::uint64_t gen = 0;
    int burst_packets = 0;
    int retries = 0;
    int cw = 16;
    // Coordinated training.
    bool reserved = false;
    int reserved_for = -1;
    std::vector<int> trainable;
    bool training_collided = false;
    // DCF.
    bool trained = false;
    bool sweep_collided = false;
    std::vector<double> slot_interference_mw;
    int rr = 0;
  };

  const Environment& env;
  const FingerprintDB& db;
  SimConfig cfg;
  SelectorConfig sel;
  std::ostream* trace = nullptr;

  double now = 0.0;
  std::uint64_t seq = 0;
  std::uint64_t next_tx_id = 1;
  std::priority_queue<Event, std::vector<Event>, Later> events;
  std::vector<Ue> ues;
  std::vector<Ap> aps;
  std::vector<Tx> air;
  LinkTable links;
  enum class Req5 : std::uint8_t { kMeasure, kNavset, kFst, kNack };
  struct Request5 {
    Req5 kind;
    int a;
    int b;
  };
  std::deque<Request5> queue5;  // FIFO of pending 5 GHz exchanges
  bool medium5_busy = false;
  long boundary_index = 0;
  int in_flight = 0;
  int grant_rr = 0;
  int max_sectors = 1;
  std::vector<double> pw_ue;  // [ap][sector][ue] dBm
  std::vector<double> pw_ap;  // [ap][sector][ap] dBm
  std::mt19937_64 rng_fp;
  std::mt19937_64 rng_b5;
  std::mt19937_64 rng_b60;
  std::mt19937_64 rng_block;

  std::vector<Point> positions;
  std::vector<double> loads;
  MetricsReport m;
  double delay_sum = 0.0;
  bool ran = false;

  State(const Environment& e, const FingerprintDB& d, SimConfig c)
      : env(e),
        db(d),
        cfg(std::move(c)),
        sel(cfg.selector()),
        rng_fp(stream_seed(cfg.seed, Stream::kFingerprint)),
        rng_b5(stream_seed(cfg.seed, Stream::kBackoff5)),
        rng_b60(stream_seed(cfg.seed, Stream::kBackoff60)),
        rng_block(stream_seed(cfg.seed, Stream::kBlockage)) {
    env.validate();
    cfg.validate(env);
    if (db.num_aps() != env.num_aps() || db.num_lps() != env.num_lps() || db.env_checksum != env.checksum())
      throw std::invalid_argument("fingerprint DB does not match the environment");
    positions = draw_ue_positions(env, cfg);
    loads = draw_loads(cfg);
    for (int u = 0; u < cfg.num_ues; ++u) {
      ues.emplace_back(positions[u], loads[u],
                       PoissonSource(loads[u], cfg.packet_size_bits, stream_seed(cfg.seed, Stream::kArrivals, u)));
    }
    aps.resize(static_cast<std::size_t>(cfg.num_aps_active));
    for (Ap& ap : aps) ap.cw = cfg.timing.cw_min_60;
    for (const ApConfig& a : env.aps) max_sectors = std::max(max_sectors, a.num_sectors);
    const int A = cfg.num_aps_active;
    const int U = cfg.num_ues;
    pw_ue.assign(static_cast<std::size_t>(A) * max_sectors * U, -std::numeric_limits<double>::infinity());
    pw_ap.assign(static_cast<std::size_t>(A) * max_sectors * A, -std::numeric_limits<double>::infinity());
    for (int a = 0; a < A; ++a) {
      for (int b = 1; b <= env.aps[a].num_sectors; ++b) {
        for (int u = 0; u < U; ++u) pw_ue[index_ue(a, b, u)] = rx_power_60(env, env.aps[a], b, ues[u].pos);
        for (int o = 0; o < A; ++o)
          if (o != a) pw_ap[index_ap(a, b, o)] = rx_power_60(env, env.aps[a], b, env.aps[o].position);
      }
    }
    // Max-received-power association for the DCF baseline.
    for (int u = 0; u < U; ++u) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) {
        for (int b = 1; b <= env.aps[a].num_sectors; ++b) {
          if (pw_ue[index_ue(a, b, u)] > best) {
            best = pw_ue[index_ue(a, b, u)];
            ues[u].assoc_ap = a;
          }
        }
      }
    }
    m.mode = cfg.mode;
    m.num_aps = cfg.num_aps_active;
    m.seed = cfg.seed;
    m.sim_duration = cfg.sim_duration;
    m.min_admitted_mcs = std::numeric_limits<std::uint64_t>::max();
  }

  std::size_t index_ue(int ap, int sector, int ue) const {
    return (static_cast<std::size_t>(ap) * max_sectors + (sector - 1)) * cfg.num_ues + ue;
  }
  std::size_t index_ap(int ap, int sector, int other) const {
    return (static_cast<std::size_t>(ap) * max_sectors + (sector - 1)) * cfg.num_aps_active + other;
  }

  // -- plumbing --------------------------------------------------------------

  void schedule(double t, Ev type, int a = 0, int b = 0, std::uint64_t gen = 0) {
    if (t < now - kEps) throw std::logic_error("event scheduled in the past");
    const int priority = type == Ev::kBoundary ? 1 : 0;
    events.push({std::max(t, now), priority, seq++, type, a, b, gen});
  }

  void emit(const char* type, const std::string& actor, json details = json::object()) {
    if (!trace) return;
    json rec;
    rec["time"] = now;
    rec["type"] = type;
    rec["actor"] = actor;
    rec["details"] = std::move(details);
    *trace << rec.dump() << '\n';
  }

  static std::string ap_name(int a) { return "ap" + std::to_string(a); }
  static std::string ue_name(int u) { return "ue" + std::to_string(u); }

  double next_boundary() const { return static_cast<double>(boundary_index) * cfg.txop_interval; }

  void advance(Ue& ue, double t) {
    while (ue.src.peek() <= t && ue.src.peek() < cfg.sim_duration) {
      const double arrival = ue.src.pop();
      ue.generated_bits += cfg.packet_size_bits;
      ++ue.generated;
      if (static_cast<int>(ue.queue.size()) < cfg.queue_limit_packets) ue.queue.push_back(arrival);
      else ++ue.dropped;
    }
  }

  void deliver(Ue& ue, int n) {
    for (int i = 0; i < n && !ue.queue.empty(); ++i) {
      const double delay = now - ue.queue.front();
      ue.queue.pop_front();
      delay_sum += delay;
      if (m.delivered_packets == 0 || delay < m.min_delay_s) m.min_delay_s = delay;
      ++m.delivered_packets;
      ue.delivered_bits += cfg.packet_size_bits;
    }
  }

  // The 5 GHz exchange content is decided when the medium is won, not when queued.
  // Signalling frames queue ahead of FST data, as a higher access category would.
  void request_5ghz(Req5 kind, int a, int b = 0) {
    if (kind == Req5::kFst) {
      queue5.push_back({kind, a, b});
    } else {
      const auto first_fst =
          std::find_if(queue5.begin(), queue5.end(), [](const Request5& r) { return r.kind == Req5::kFst; });
      queue5.insert(first_fst, {kind, a, b});
    }
    if (!medium5_busy) next_5ghz();
  }

  void next_5ghz() {
    if (queue5.empty()) {
      medium5_busy = false;
      return;
    }
    medium5_busy = true;
    std::uniform_int_distribution<int> backoff(0, cfg.timing.cw_min_5 - 1);
    schedule(now + cfg.timing.difs_5 + backoff(rng_b5) * cfg.timing.slot_5, Ev::kMedium5Grant);
  }

  void medium5_grant() {
    const Request5 r = queue5.front();
    queue5.pop_front();
    double duration = 0.0;
    switch (r.kind) {
      case Req5::kMeasure: duration = serve_measure(r.a); break;
      case Req5::kNavset: duration = serve_navset(r.a); break;
      case Req5::kFst: duration = serve_fst(r.a); break;
      case Req5::kNack:
        duration = cfg.timing.nack;
        if (trace) emit("nack", ue_name(r.a), {{"end", now + duration}});
        schedule(now + duration, Ev::kHandover, r.a);
        break;
    }
    schedule(now + duration, Ev::kMedium5Free);
  }

  double backoff_60(int cw) {
    std::uniform_int_distribution<int> backoff(0, cw - 1);
    return cfg.timing.difs_60 + backoff(rng_b60) * cfg.timing.slot_60;
  }

  // -- 60 GHz air ------------------------------------------------------------

  double power_at_ue(int ap, int beam, int ue) const { return pw_ue[index_ue(ap, beam, ue)]; }

  void air_start(Tx tx) {
    tx.id = next_tx_id++;
    tx.corrupted = false;
    air.push_back(tx);
    bool harmed_someone = false;
    for (Tx& victim : air) {
      if (victim.rx_ue < 0) continue;
      double interference_mw = 0.0;
      for (const Tx& other : air)
        if (other.ap != victim.ap) interference_mw += dbm_to_mw(power_at_ue(other.ap, other.beam, victim.rx_ue));
      const double sinr = victim.signal_dbm - mw_to_dbm(interference_mw + dbm_to_mw(env.noise_floor_60_dbm));
      if (sinr < victim.required_sinr_db && !victim.corrupted) {
        victim.corrupted = true;
        if (victim.id != tx.id) harmed_someone = true;
      }
    }
    if (harmed_someone) air.back().corrupted = true;
    schedule(tx.end, Ev::kTxEnd, 0, 0, tx.id);
  }

  /// Latest end among transmissions this AP can hear above the CS threshold, or -1.
  double sensed_busy_until(int ap) const {
    double until = -1.0;
    for (const Tx& tx : air)
      if (tx.ap != ap && pw_ap[index_ap(tx.ap, tx.beam, ap)] >= cfg.cs_threshold_dbm) until = std::max(until, tx.end);
    return until;
  }

  double interference_at_ue_mw(int ue, int exclude_ap) const {
    double mw = 0.0;
    for (const Tx& tx : air)
      if (tx.ap != exclude_ap) mw += dbm_to_mw(power_at_ue(tx.ap, tx.beam, ue));
    return mw;
  }

  void on_tx_end(std::uint64_t id) {
    const auto it = std::find_if(air.begin(), air.end(), [id](const Tx& t) { return t.id == id; });
    if (it == air.end()) return;
    const Tx tx = *it;
    air.erase(it);
    Ap& ap = aps[tx.ap];
    if (tx.gen != ap.gen) return;
    switch (tx.kind) {
      case TxKind::kSweep: ap.sweep_collided = ap.sweep_collided || tx.corrupted; break;
      case TxKind::kBrp: ap.training_collided = ap.training_collided || tx.corrupted; break;
      case TxKind::kData: burst_end(tx.ap, tx.corrupted); break;
    }
  }

  // -- data bursts (both modes) ----------------------------------------------

  void burst_start(int a) {
    Ap& ap = aps[a];
    if (ap.ue < 0) return;
    Ue& ue = ues[ap.ue];
    advance(ue, now);
    const double rate = env.mcs.rate_bps(ap.mcs);
    const double per_packet = cfg.packet_size_bits / rate;
    const int fit = static_cast<int>(std::floor((ap.txop_end - now) / per_packet + 1e-9));
    const int n = std::min({static_cast<int>(ue.queue.size()), cfg.max_aggregate_packets, fit});
    if (n <= 0) {
      if (ue.queue.empty() && ue.src.peek() < ap.txop_end && ue.src.peek() < cfg.sim_duration)
        schedule(ue.src.peek(), Ev::kBurstStart, a, 0, ap.gen);
      return;
    }
    ap.burst_packets = n;
    Tx tx{};
    tx.kind = TxKind::kData;
    tx.ap = a;
    tx.beam = ap.beam;
    tx.rx_ue = ap.ue;
    tx.end = now + n * per_packet;
    tx.required_sinr_db = env.mcs.threshold_db(ap.mcs);
    tx.signal_dbm = power_at_ue(a, ap.beam, ap.ue);
    tx.gen = ap.gen;
    air_start(tx);
  }

  void burst_end(int a, bool corrupted) {
    Ap& ap = aps[a];
    Ue& ue = ues[ap.ue];
    if (trace) emit("burst", ap_name(a), {{"ue", ap.ue}, {"packets", ap.burst_packets}, {"mcs", ap.mcs}, {"ok", !corrupted}});
    if (!corrupted) {
      deliver(ue, ap.burst_packets);
      ap.retries = 0;
      ap.cw = cfg.timing.cw_min_60;
      schedule(now + cfg.timing.sifs_60, Ev::kBurstStart, a, 0, ap.gen);
      return;
    }
    ++m.collisions;
    ++ap.retries;
    if (cfg.mode == MacMode::kCoordinated) {
      if (ap.retries > cfg.retry_limit) {
        link_failure(a, "retry_limit");
        return;
      }
      schedule(now + cfg.timing.sifs_60, Ev::kBurstStart, a, 0, ap.gen);
      return;
    }
    ap.cw = std::min(2 * ap.cw, cfg.timing.cw_max_60);
    if (ap.retries > cfg.retry_limit) {
      for (int i = 0; i < ap.burst_packets && !ue.queue.empty(); ++i) {
        ue.queue.pop_front();
        ++ue.dropped;
      }
      ap.retries = 0;
      ap.cw = cfg.timing.cw_min_60;
    }
    schedule(now + backoff_60(ap.cw), Ev::kAccess, a, 0, ap.gen);
  }

  // -- coordinated mode --------------------------------------------------------

  bool ap_available(int a) const { return !links.ap_used(a) && !aps[a].reserved; }

  void grant(int u) {
    Ue& ue = ues[u];
    ue.in_setup = true;
    ++in_flight;
    if (trace) emit("txop_grant", ue_name(u));
    request_5ghz(Req5::kMeasure, u);
  }

  double serve_measure(int u) {
    const ProtocolTiming& t = cfg.timing;
    const double duration = t.mreq + t.sifs_5 + t.mresp + t.sifs_5 + t.switch_on;
    if (trace) emit("measure", ue_name(u), {{"end", now + duration}});
    schedule(now + duration, Ev::kMeasureDone, u);
    return duration;
  }

  void measure_done(int u) {
    Ue& ue = ues[u];
    const OnlineFingerprint fp = measure_online_fingerprint(env, ue.pos, rng_fp);
    std::vector<int> unused;
    for (int a = 0; a < cfg.num_aps_active; ++a)
      if (ap_available(a)) unused.push_back(a);
    ue.cands = prepare_candidates(env, db, fp, unused, links, sel);
    ue.cand_idx = 0;
    if (trace) {
      json c = json::array();
      for (const RankedAp& r : ue.cands.ranked)
        c.push_back({{"ap", r.ap}, {"expected_mcs", r.expected_mcs}, {"theta", r.best_beams}, {"bad", r.bad_beams}});
      emit("candidates", ue_name(u), {{"ranked", c}});
    }
    try_candidate(u);
  }

  void try_candidate(int u) {
    Ue& ue = ues[u];
    while (ue.cand_idx < ue.cands.ranked.size()) {
      const int a = ue.cands.ranked[ue.cand_idx].ap;
      if (!ap_available(a)) {
        ++ue.cand_idx;
        continue;
      }
      aps[a].reserved = true;
      aps[a].reserved_for = u;
      request_5ghz(Req5::kNavset, a);
      return;
    }
    fallback(u);
  }

  /// The candidate won the 5 GHz medium: bad beams are judged against the links up now.
  double serve_navset(int a) {
    Ap& ap = aps[a];
    const int u = ap.reserved_for;
    Ue& ue = ues[u];
    const ProtocolTiming& t = cfg.timing;
    RankedAp& c = ue.cands.ranked[ue.cand_idx];
    c.bad_beams = eliminate_bad_beams(env, db, c.ap, c.best_beams, links, sel);
    ap.trainable = trainable_beams(c);
    if (ap.trainable.empty()) {
      if (trace) emit("all_beams_bad", ap_name(a), {{"ue", u}, {"bad", c.bad_beams}});
      ap.reserved = false;
      ap.reserved_for = -1;
      ++ue.cand_idx;
      try_candidate(u);
      return 0.0;
    }
    ap.training_collided = false;
    const double train = static_cast<double>(ap.trainable.size()) * t.brp_slot + t.fbk;
    const double duration = t.navset + t.sifs_5 + train + t.sifs_5 + std::max(t.bid, t.nack);
    if (trace)
      emit("navset", ap_name(a),
           {{"ue", u}, {"start", now}, {"end", now + duration}, {"trainable", ap.trainable}, {"bad", c.bad_beams}});
    schedule(now + t.navset + t.sifs_5, Ev::kNavStart, a, 0, ap.gen);
    return duration;
  }

  /// Expected MCS of the next candidate that could still be tried.
  std::optional<int> next_expected_mcs(const Ue& ue) const {
    for (std::size_t i = ue.cand_idx + 1; i < ue.cands.ranked.size(); ++i)
      if (ap_available(ue.cands.ranked[i].ap)) return ue.cands.ranked[i].expected_mcs;
    return std::nullopt;
  }

  void brp_slot(int a, int idx) {
    Ap& ap = aps[a];
    const ProtocolTiming& t = cfg.timing;
    Tx tx{};
    tx.kind = TxKind::kBrp;
    tx.ap = a;
    tx.beam = ap.trainable[idx];
    tx.rx_ue = -1;
    tx.end = now + t.brp_slot;
    tx.gen = ap.gen;
    air_start(tx);
    if (idx + 1 < static_cast<int>(ap.trainable.size())) schedule(now + t.brp_slot, Ev::kBrpSlot, a, idx + 1, ap.gen);
    else schedule(now + t.brp_slot + t.fbk, Ev::kTrainingDone, a, 0, ap.gen);
  }

  void training_done(int a) {
    Ap& ap = aps[a];
    const int u = ap.reserved_for;
    Ue& ue = ues[u];
    const ProtocolTiming& t = cfg.timing;
    m.bf_airtime_s += static_cast<double>(ap.trainable.size()) * t.brp_slot + t.fbk;
    const std::optional<int> next_expected = next_expected_mcs(ue);
    // A BRP frame that disturbed a live burst is counted at the victim; the
    // training itself is judged on the true channel under current links.
    const TrainingOutcome outcome = train_and_pick(env, a, ap.trainable, ue.pos, links, next_expected);
    if (trace)
      emit("train", ap_name(a),
           {{"ue", u}, {"best_beam", outcome.best_beam}, {"mcs", outcome.measured_mcs}, {"accepted", outcome.accepted.has_value()},
            {"brp_overlap", ap.training_collided}});
    if (outcome.accepted) {
      ap.beam = outcome.accepted->beam;
      ap.mcs = outcome.accepted->mcs;
      schedule(now + t.sifs_5 + t.bid, Ev::kLinkUp, a, 0, ap.gen);
    } else {
      schedule(now + t.sifs_5 + t.nack, Ev::kNackDone, a, 0, ap.gen);
    }
  }

  void audit_protection(int a, int beam) {
    if (is_bad_beam(env, db, a, beam, links, sel)) ++m.db_protection_violations;
    if (!protects_existing(env, links, a, beam)) ++m.true_protection_violations;
  }

  void link_up(int a) {
    Ap& ap = aps[a];
    const int u = ap.reserved_for;
    Ue& ue = ues[u];
    // Links torn down since the NAVset can turn the trained beam bad; the
    // controller sees the current table and withholds the BID.
    if (is_bad_beam(env, db, a, ap.beam, links, sel)) {
      if (trace) emit("bid_withheld", ap_name(a), {{"ue", u}, {"beam", ap.beam}});
      nack_done(a);
      return;
    }
    audit_protection(a, ap.beam);
    ActiveLink link{a, u, ap.beam, ap.mcs, power_at_ue(a, ap.beam, u), ue.load, ue.pos};
    links.add(link);
    ap.reserved = false;
    ap.reserved_for = -1;
    ap.ue = u;
    ap.hold_start = now;
    ap.txop_end = next_boundary();
    ap.retries = 0;
    ue.in_setup = false;
    ue.link_ap = a;
    ++ue.link_serial;
    --in_flight;
    ++m.links_established;
    m.min_admitted_mcs = std::min<std::uint64_t>(m.min_admitted_mcs, ap.mcs);
    if (trace)
      emit("bid", ap_name(a), {{"ue", u}, {"beam", ap.beam}, {"mcs", ap.mcs}, {"rx_power_dbm", link.rx_power_dbm}});
    if (cfg.blockage_enabled && cfg.blockage_rate_hz > 0) {
      std::exponential_distribution<double> gap(cfg.blockage_rate_hz);
      schedule(now + gap(rng_block), Ev::kBlockage, u, 0, ue.link_serial);
    }
    burst_start(a);
  }

  void nack_done(int a) {
    Ap& ap = aps[a];
    const int u = ap.reserved_for;
    ap.reserved = false;
    ap.reserved_for = -1;
    Ue& ue = ues[u];
    if (trace) emit("nack", ap_name(a), {{"ue", u}});
    ++ue.cand_idx;
    if (ue.cand_idx < ue.cands.ranked.size()) {
      ++m.handovers;
      if (trace) emit("handover", ue_name(u), {{"to", ue.cands.ranked[ue.cand_idx].ap}});
    }
    try_candidate(u);
  }

  void fallback(int u) {
    Ue& ue = ues[u];
    ++m.fst_fallbacks;
    ue.in_setup = false;
    --in_flight;
    if (!cfg.fst_enabled) {
      if (trace) emit("fst", ue_name(u), {{"enabled", false}});
      return;
    }
    if (trace) emit("fst", ue_name(u), {{"enabled", true}});
    ue.in_fst = true;
    request_5ghz(Req5::kFst, u);
  }

  /// Serves at most one TXOP worth of queued packets at the Wi-Fi rate.
  double serve_fst(int u) {
    Ue& ue = ues[u];
    advance(ue, now);
    const int fit = static_cast<int>(std::floor(cfg.txop_interval * cfg.fst_rate_bps / cfg.packet_size_bits));
    const int n = std::min(static_cast<int>(ue.queue.size()), fit);
    if (n <= 0) {
      ue.in_fst = false;
      return 0.0;
    }
    const double duration = n * cfg.packet_size_bits / cfg.fst_rate_bps;
    if (trace) emit("fst_data", ue_name(u), {{"packets", n}, {"end", now + duration}});
    schedule(now + duration, Ev::kFstDone, u, n);
    return duration;
  }

  void fst_done(int u, int n) {
    Ue& ue = ues[u];
    deliver(ue, n);
    ue.in_fst = false;
  }

  /// Link loss (blockage or persistent corruption): tear down and hand over.
  void link_failure(int a, const char* reason) {
    Ap& ap = aps[a];
    const int u = ap.ue;
    Ue& ue = ues[u];
    links.remove_ap(a);
    ap.ue = -1;
    ++ap.gen;
    ue.link_ap = -1;
    ue.in_setup = true;
    ++in_flight;
    if (trace) emit("link_lost", ue_name(u), {{"ap", a}, {"reason", reason}});
    request_5ghz(Req5::kNack, u);
  }

  void handover(int u) {
    Ue& ue = ues[u];
    ++ue.cand_idx;
    if (ue.cand_idx < ue.cands.ranked.size()) {
      ++m.handovers;
      if (trace) emit("handover", ue_name(u), {{"to", ue.cands.ranked[ue.cand_idx].ap}});
    }
    try_candidate(u);
  }

  void coordinated_boundary() {
    for (int a = 0; a < cfg.num_aps_active; ++a) {
      Ap& ap = aps[a];
      if (ap.ue < 0 || !links.ap_used(a)) continue;
      Ue& ue = ues[ap.ue];
      advance(ue, now);
      ++ap.gen;
      if (ue.queue.empty() || now - ap.hold_start >= cfg.beacon_interval - kEps) {
        if (trace) emit("teardown", ap_name(a), {{"ue", ap.ue}, {"empty", ue.queue.empty()}});
        links.remove_ap(a);
        ue.link_ap = -1;
        ap.ue = -1;
        continue;
      }
      ap.txop_end = now + cfg.txop_interval;
      schedule(now, Ev::kBurstStart, a, 0, ap.gen);
    }
    int free_aps = cfg.num_aps_active - static_cast<int>(links.size()) - in_flight;
    const int U = cfg.num_ues;
    for (int scanned = 0; scanned < U && free_aps > 0; ++scanned) {
      const int u = (grant_rr + scanned) % U;
      Ue& ue = ues[u];
      if (ue.link_ap >= 0 || ue.in_setup || ue.in_fst) continue;
      advance(ue, now);
      if (ue.queue.empty()) continue;
      grant(u);
      --free_aps;
      grant_rr = (u + 1) % U;
    }
  }

  // -- DCF baseline ------------------------------------------------------------

  void dcf_boundary() {
    for (int a = 0; a < cfg.num_aps_active; ++a) {
      Ap& ap = aps[a];
      ++ap.gen;
      ap.ue = -1;
      ap.trained = false;
      ap.retries = 0;
      ap.txop_end = now + cfg.txop_interval;
      const int U = cfg.num_ues;
      for (int scanned = 0; scanned < U; ++scanned) {
        const int u = (ap.rr + scanned) % U;
        if (ues[u].assoc_ap != a) continue;
        advance(ues[u], now);
        if (ues[u].queue.empty()) continue;
        ap.ue = u;
        ap.rr = (u + 1) % U;
        break;
      }
      if (ap.ue < 0) continue;
      schedule(now + backoff_60(ap.cw), Ev::kAccess, a, 0, ap.gen);
    }
  }

  void access_attempt(int a) {
    Ap& ap = aps[a];
    if (ap.ue < 0) return;
    const double busy_until = sensed_busy_until(a);
    if (busy_until >= 0) {
      const double retry_at = busy_until + backoff_60(ap.cw);
      if (retry_at < ap.txop_end) schedule(retry_at, Ev::kAccess, a, 0, ap.gen);
      return;
    }
    if (ap.trained) {
      burst_start(a);
      return;
    }
    const ProtocolTiming& t = cfg.timing;
    const int sectors = env.aps[a].num_sectors;
    if (now + sectors * t.sweep_slot + t.ssw_feedback >= ap.txop_end) return;
    ap.sweep_collided = false;
    ap.slot_interference_mw.assign(static_cast<std::size_t>(sectors), 0.0);
    if (trace) emit("sweep", ap_name(a), {{"ue", ap.ue}, {"sectors", sectors}});
    sweep_slot(a, 0);
  }

  void sweep_slot(int a, int idx) {
    Ap& ap = aps[a];
    const ProtocolTiming& t = cfg.timing;
    ap.slot_interference_mw[idx] = interference_at_ue_mw(ap.ue, a);
    Tx tx{};
    tx.kind = TxKind::kSweep;
    tx.ap = a;
    tx.beam = idx + 1;
    tx.rx_ue = -1;
    tx.end = now + t.sweep_slot;
    tx.gen = ap.gen;
    air_start(tx);
    if (idx + 1 < env.aps[a].num_sectors) schedule(now + t.sweep_slot, Ev::kSweepSlot, a, idx + 1, ap.gen);
    else schedule(now + t.sweep_slot + t.ssw_feedback, Ev::kSweepDone, a, 0, ap.gen);
  }

  void sweep_done(int a) {
    Ap& ap = aps[a];
    const ProtocolTiming& t = cfg.timing;
    const int sectors = env.aps[a].num_sectors;
    m.bf_airtime_s += sectors * t.sweep_slot + t.ssw_feedback;
    if (ap.sweep_collided) {
      ++m.collisions;
      ++ap.retries;
      ap.cw = std::min(2 * ap.cw, t.cw_max_60);
      if (trace) emit("sweep_done", ap_name(a), {{"ue", ap.ue}, {"collided", true}});
      if (ap.retries <= cfg.retry_limit) schedule(now + backoff_60(ap.cw), Ev::kAccess, a, 0, ap.gen);
      return;
    }
    int best = 1;
    for (int b = 2; b <= sectors; ++b)
      if (power_at_ue(a, b, ap.ue) > power_at_ue(a, best, ap.ue)) best = b;
    const double signal = power_at_ue(a, best, ap.ue);
    const double sinr =
        signal - mw_to_dbm(ap.slot_interference_mw[best - 1] + dbm_to_mw(env.noise_floor_60_dbm));
    const int mcs = mcs_from_sinr(env.mcs, sinr);
    if (trace) emit("sweep_done", ap_name(a), {{"ue", ap.ue}, {"collided", false}, {"beam", best}, {"mcs", mcs}});
    if (mcs == kNoMcs) return;
    ap.beam = best;
    ap.mcs = mcs;
    ap.trained = true;
    ap.retries = 0;
    ap.cw = t.cw_min_60;
    ++m.links_established;
    m.min_admitted_mcs = std::min<std::uint64_t>(m.min_admitted_mcs, mcs);
    if (cfg.blockage_enabled && cfg.blockage_rate_hz > 0) {
      std::exponential_distribution<double> gap(cfg.blockage_rate_hz);
      ++ues[ap.ue].link_serial;
      schedule(now + gap(rng_block), Ev::kBlockage, ap.ue, 0, ues[ap.ue].link_serial);
    }
    schedule(now + t.sifs_60, Ev::kBurstStart, a, 0, ap.gen);
  }

  // -- blockage ----------------------------------------------------------------

  /// `serial` of 0 forces the block regardless of which link is up.
  void blockage(int u, std::uint64_t serial) {
    Ue& ue = ues[u];
    if (serial != 0 && serial != ue.link_serial) return;
    if (cfg.mode == MacMode::kCoordinated) {
      if (ue.link_ap < 0) return;
      if (trace) emit("blockage", ue_name(u), {{"ap", ue.link_ap}});
      link_failure(ue.link_ap, "blockage");
      return;
    }
    for (int a = 0; a < cfg.num_aps_active; ++a) {
      Ap& ap = aps[a];
      if (ap.ue != u || !ap.trained) continue;
      if (trace) emit("blockage", ue_name(u), {{"ap", a}});
      ++ap.gen;
      ap.trained = false;
      ap.retries = 0;
      schedule(now + backoff_60(ap.cw), Ev::kAccess, a, 0, ap.gen);
    }
  }

  // -- main loop -----------------------------------------------------------------

  void dispatch(const Event& e) {
    switch (e.type) {
      case Ev::kBoundary:
        ++boundary_index;
        if (next_boundary() <= cfg.sim_duration + kEps) schedule(next_boundary(), Ev::kBoundary);
        if (cfg.mode == MacMode::kCoordinated) coordinated_boundary();
        else dcf_boundary();
        break;
      case Ev::kTxEnd: on_tx_end(e.gen); break;
      case Ev::kMedium5Grant: medium5_grant(); break;
      case Ev::kMedium5Free: next_5ghz(); break;
      case Ev::kMeasureDone: measure_done(e.a); break;
      case Ev::kNavStart:
        if (e.gen == aps[e.a].gen) brp_slot(e.a, 0);
        break;
      case Ev::kBrpSlot:
        if (e.gen == aps[e.a].gen) brp_slot(e.a, e.b);
        break;
      case Ev::kTrainingDone:
        if (e.gen == aps[e.a].gen) training_done(e.a);
        break;
      case Ev::kLinkUp:
        if (e.gen == aps[e.a].gen) link_up(e.a);
        break;
      case Ev::kNackDone:
        if (e.gen == aps[e.a].gen) nack_done(e.a);
        break;
      case Ev::kHandover: handover(e.a); break;
      case Ev::kFstDone: fst_done(e.a, e.b); break;
      case Ev::kBurstStart:
        if (e.gen == aps[e.a].gen) burst_start(e.a);
        break;
      case Ev::kAccess:
        if (e.gen == aps[e.a].gen) access_attempt(e.a);
        break;
      case Ev::kSweepSlot:
        if (e.gen == aps[e.a].gen) sweep_slot(e.a, e.b);
        break;
      case Ev::kSweepDone:
        if (e.gen == aps[e.a].gen) sweep_done(e.a);
        break;
      case Ev::kBlockage: blockage(e.a, e.gen); break;
    }
  }

  void run() {
    if (ran) throw std::logic_error("Simulator::run() called twice");
    ran = true;
    if (cfg.sim_duration > 0) schedule(0.0, Ev::kBoundary);
    while (!events.empty()) {
      const Event e = events.top();
      if (e.time > cfg.sim_duration) break;
      events.pop();
      if (e.time < now - kEps) throw std::logic_error("event clock went backwards");
      now = std::max(now, e.time);
      dispatch(e);
    }
    now = cfg.sim_duration;
    double delivered = 0.0;
    double generated = 0.0;
    for (Ue& ue : ues) {
      advance(ue, cfg.sim_duration);
      m.delivered_bits_per_ue.push_back(ue.delivered_bits);
      m.generated_bits_per_ue.push_back(ue.generated_bits);
      delivered += ue.delivered_bits;
      generated += ue.generated_bits;
      m.generated_packets += ue.generated;
      m.dropped_packets += ue.dropped;
      m.offered_load_bps += ue.load;
    }
    m.delivered_bits = delivered;
    m.generated_bits = generated;
    m.total_throughput_bps = cfg.sim_duration > 0 ? delivered / cfg.sim_duration : 0.0;
    if (m.delivered_packets > 0) m.avg_delay_s = delay_sum / static_cast<double>(m.delivered_packets);
    if (m.min_admitted_mcs == std::numeric_limits<std::uint64_t>::max()) m.min_admitted_mcs = 0;
  }
};

Simulator::Simulator(const Environment& env, const FingerprintDB& db, SimConfig config)
    : s_(std::make_unique<State>(env, db, std::move(config))) {}

Simulator::~Simulator() = default;

void Simulator::set_trace(std::ostream* out) { s_->trace = out; }

void Simulator::schedule_blockage(int ue, double at) {
  if (ue < 0 || ue >= s_->cfg.num_ues) throw std::out_of_range("no such UE");
  s_->schedule(at, State::Ev::kBlockage, ue, 0, 0);
}

void Simulator::run() { s_->run(); }

MetricsReport Simulator::report() const { return s_->m; }

const std::vector<Point>& Simulator::ue_positions() const { return s_->positions; }

const std::vector<double>& Simulator::ue_loads() const { return s_->loads; }

MetricsReport run_simulation(const Environment& env, const FingerprintDB& db, const SimConfig& config,
                             std::ostream* trace) {
  Simulator sim(env, db, config);
  sim.set_trace(trace);
  sim.run();
  return sim.report();
}

}  // namespace mmcoord
