#include "mmcoord/link_selector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace mmcoord {

namespace {

double bearing_deg(const Point& from, const Point& to) {
  const Point d = to - from;
  return std::atan2(d.y(), d.x()) * 180.0 / std::numbers::pi;
}

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

}  // namespace

void LinkTable::add(const ActiveLink& link) {
  if (ap_used(link.ap)) throw std::invalid_argument("AP already carries a link");
  if (find_ue(link.ue)) throw std::invalid_argument("UE already has a link");
  if (link.mcs < 1) throw std::invalid_argument("link MCS below MCS1");
  entries_.push_back(link);
}

void LinkTable::remove_ap(int ap) {
  std::erase_if(entries_, [ap](const ActiveLink& l) { return l.ap == ap; });
}

void LinkTable::remove_ue(int ue) {
  std::erase_if(entries_, [ue](const ActiveLink& l) { return l.ue == ue; });
}

bool LinkTable::ap_used(int ap) const { return find_ap(ap) != nullptr; }

const ActiveLink* LinkTable::find_ue(int ue) const {
  for (const ActiveLink& l : entries_)
    if (l.ue == ue) return &l;
  return nullptr;
}

const ActiveLink* LinkTable::find_ap(int ap) const {
  for (const ActiveLink& l : entries_)
    if (l.ap == ap) return &l;
  return nullptr;
}

std::vector<int> LinkTable::unused_aps(int num_active) const {
  std::vector<int> out;
  for (int a = 0; a < num_active; ++a)
    if (!ap_used(a)) out.push_back(a);
  return out;
}

OnlineFingerprint measure_online_fingerprint(const Environment& env, const Point& ue_position, std::mt19937_64& rng) {
  OnlineFingerprint fp;
  fp.rss.resize(env.num_aps());
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int m = 0; m < env.num_aps(); ++m) {
    fp.rss(m) = rx_power_5(env, env.aps[m], ue_position);
    // Always draw so the stream position does not depend on sigma.
    const double z = noise(rng);
    fp.rss(m) += env.rss_noise_sigma_db * z;
  }
  return fp;
}

std::vector<int> estimate_best_beams(const FingerprintDB& db, const OnlineFingerprint& fp, int ap, int limit) {
  std::vector<std::pair<double, int>> scored;
  for (const auto& [key, vectors] : db.exemplars) {
    if (key.ap != ap || vectors.rows() == 0) continue;
    const double score = (vectors.rowwise() - fp.rss.transpose()).rowwise().squaredNorm().minCoeff();
    scored.emplace_back(score, key.sector);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<int> theta;
  for (const auto& [score, sector] : scored) {
    if (static_cast<int>(theta.size()) >= limit) break;
    theta.push_back(sector);
  }
  return theta;
}

int expected_mcs(const FingerprintDB& db, const OnlineFingerprint& fp, int ap, const std::vector<int>& theta,
                 ExpectedMcsRule rule) {
  int key = kNoMcs;
  double nearest = std::numeric_limits<double>::infinity();
  for (int b : theta) {
    if (rule == ExpectedMcsRule::kClusterMax) {
      key = std::max(key, db.max_offline_mcs(ap, b));
      continue;
    }
    for (int l : db.members(ap, b)) {
      const double d = (db.psi.row(l).transpose() - fp.rss).squaredNorm();
      if (d < nearest) {
        nearest = d;
        key = db.mcs_off(l, ap);
      }
    }
  }
  return key;
}

CandidateSet select_candidate_aps(const std::vector<ApEstimate>& estimates, int limit) {
  CandidateSet out;
  for (const ApEstimate& e : estimates) {
    if (e.best_beams.empty() || e.expected_mcs == kNoMcs) continue;
    out.ranked.push_back({e.ap, e.best_beams, {}, e.expected_mcs});
  }
  std::sort(out.ranked.begin(), out.ranked.end(), [](const RankedAp& a, const RankedAp& b) {
    if (a.expected_mcs != b.expected_mcs) return a.expected_mcs > b.expected_mcs;
    return a.ap < b.ap;
  });
  if (static_cast<int>(out.ranked.size()) > limit) out.ranked.resize(static_cast<std::size_t>(std::max(limit, 0)));
  return out;
}

int db_mcs_with_interferer(const Environment& env, const FingerprintDB& db, const ActiveLink& existing, int lp,
                           int candidate_ap, int candidate_beam) {
  const double signal = db.p_off(lp, existing.ap);
  const double interference = rx_power_60(env, env.aps[candidate_ap], candidate_beam, env.lps[lp]);
  return mcs_from_sinr(env.mcs, sinr_db(signal, std::span<const double>(&interference, 1), env.noise_floor_60_dbm));
}

std::vector<int> overlapped_lps(const Environment& env, const FingerprintDB& db, const ActiveLink& existing,
                                int candidate_ap, int candidate_beam, double overlap_margin_db) {
  const ApConfig& ap = env.aps[candidate_ap];
  const double floor = env.prop.sidelobe_level_dbi + overlap_margin_db;
  std::vector<int> out;
  for (int l : db.members(existing.ap, existing.beam)) {
    const double gain = antenna_gain(ap, candidate_beam, bearing_deg(ap.position, env.lps[l]), env.prop.sidelobe_level_dbi);
    if (gain > floor) out.push_back(l);
  }
  return out;
}

namespace {

bool harms_serving_beam(const Environment& env, int candidate_ap, int beam, const LinkTable& links) {
  const ApConfig& cand = env.aps[candidate_ap];
  std::vector<double> interference;
  for (const ActiveLink& link : links.entries()) {
    for (int l = 0; l < env.num_lps(); ++l) {
      const Point& at = env.lps[l];
      interference.clear();
      for (const ActiveLink& other : links.entries())
        if (other.ap != link.ap) interference.push_back(rx_power_60(env, env.aps[other.ap], other.beam, at));
      const double signal = rx_power_60(env, env.aps[link.ap], link.beam, at);
      if (mcs_from_sinr(env.mcs, sinr_db(signal, interference, env.noise_floor_60_dbm)) < link.mcs) continue;
      interference.push_back(rx_power_60(env, cand, beam, at));
      if (mcs_from_sinr(env.mcs, sinr_db(signal, interference, env.noise_floor_60_dbm)) < link.mcs) return true;
    }
  }
  return false;
}

}  // namespace

bool is_bad_beam(const Environment& env, const FingerprintDB& db, int candidate_ap, int beam, const LinkTable& links,
                 const SelectorConfig& config) {
  if (config.bad_beam_rule == BadBeamRule::kOff) return false;
  if (config.bad_beam_rule == BadBeamRule::kServingBeam)
    return harms_serving_beam(env, candidate_ap, beam, links);
  for (const ActiveLink& link : links.entries()) {
    for (int l : overlapped_lps(env, db, link, candidate_ap, beam, config.overlap_margin_db)) {
      int protect = link.mcs;
      if (config.bad_beam_rule == BadBeamRule::kAnnouncedOrOffline) protect = std::min(protect, db.mcs_off(l, link.ap));
      else if (config.bad_beam_rule == BadBeamRule::kPlausible && db.mcs_off(l, link.ap) < link.mcs) continue;
      if (db_mcs_with_interferer(env, db, link, l, candidate_ap, beam) < protect) return true;
    }
  }
  return false;
}

std::vector<int> eliminate_bad_beams(const Environment& env, const FingerprintDB& db, int candidate_ap,
                                     const std::vector<int>& theta, const LinkTable& links,
                                     const SelectorConfig& config) {
  std::vector<int> bad;
  for (int beam : theta)
    if (is_bad_beam(env, db, candidate_ap, beam, links, config)) bad.push_back(beam);
  return bad;
}

CandidateSet prepare_candidates(const Environment& env, const FingerprintDB& db, const OnlineFingerprint& fp,
                                const std::vector<int>& unused_aps, const LinkTable& links,
                                const SelectorConfig& config) {
  std::vector<ApEstimate> estimates;
  for (int ap : unused_aps) {
    ApEstimate e{ap, estimate_best_beams(db, fp, ap, config.best_beam_limit), kNoMcs};
    e.expected_mcs = expected_mcs(db, fp, ap, e.best_beams, config.expected_mcs_rule);
    estimates.push_back(std::move(e));
  }
  CandidateSet set = select_candidate_aps(estimates, config.candidate_limit);
  for (RankedAp& c : set.ranked) c.bad_beams = eliminate_bad_beams(env, db, c.ap, c.best_beams, links, config);
  return set;
}

std::vector<int> trainable_beams(const RankedAp& candidate) {
  std::vector<int> out;
  for (int b : candidate.best_beams)
    if (!contains(candidate.bad_beams, b)) out.push_back(b);
  return out;
}

TrainingOutcome train_and_pick(const Environment& env, int ap, const std::vector<int>& trainable,
                               const Point& ue_position, const LinkTable& links,
                               std::optional<int> next_expected_mcs) {
  TrainingOutcome out;
  if (trainable.empty()) return out;
  std::vector<double> interference;
  for (const ActiveLink& l : links.entries())
    if (l.ap != ap) interference.push_back(rx_power_60(env, env.aps[l.ap], l.beam, ue_position));

  const ApConfig& cfg = env.aps[ap];
  double best_power = -std::numeric_limits<double>::infinity();
  for (int b : trainable) {
    const double p = rx_power_60(env, cfg, b, ue_position);
    if (p > best_power || (p == best_power && b < out.best_beam)) {
      best_power = p;
      out.best_beam = b;
    }
  }
  out.measured_mcs = mcs_from_sinr(env.mcs, sinr_db(best_power, interference, env.noise_floor_60_dbm));
  if (out.measured_mcs == kNoMcs) return out;
  if (next_expected_mcs && out.measured_mcs < *next_expected_mcs) return out;
  out.accepted = Assignment{ap, out.best_beam, out.measured_mcs, best_power};
  return out;
}

namespace {

// True MCS of every existing link with all links, plus (ap, beam) when ap >= 0.
std::vector<int> true_mcs(const Environment& env, const LinkTable& links, int ap, int beam) {
  std::vector<int> out;
  std::vector<double> interference;
  for (const ActiveLink& victim : links.entries()) {
    interference.clear();
    for (const ActiveLink& other : links.entries())
      if (other.ap != victim.ap) interference.push_back(rx_power_60(env, env.aps[other.ap], other.beam, victim.ue_position));
    if (ap >= 0) interference.push_back(rx_power_60(env, env.aps[ap], beam, victim.ue_position));
    const double signal = rx_power_60(env, env.aps[victim.ap], victim.beam, victim.ue_position);
    out.push_back(mcs_from_sinr(env.mcs, sinr_db(signal, interference, env.noise_floor_60_dbm)));
  }
  return out;
}

}  // namespace

std::vector<int> true_mcs_now(const Environment& env, const LinkTable& links) { return true_mcs(env, links, -1, 0); }

std::vector<int> true_mcs_after(const Environment& env, const LinkTable& links, int ap, int beam) {
  return true_mcs(env, links, ap, beam);
}

bool protects_existing(const Environment& env, const LinkTable& links, int ap, int beam) {
  const std::vector<int> before = true_mcs_now(env, links);
  const std::vector<int> after = true_mcs_after(env, links, ap, beam);
  for (std::size_t i = 0; i < after.size(); ++i)
    if (after[i] < std::min(before[i], links.entries()[i].mcs)) return false;
  return true;
}

double objective(const Environment& env, const LinkTable& links, const std::optional<Assignment>& added,
                 double new_load_bps) {
  double total = 0.0;
  std::vector<int> after;
  if (added) after = true_mcs_after(env, links, added->ap, added->beam);
  for (std::size_t i = 0; i < links.entries().size(); ++i) {
    const ActiveLink& l = links.entries()[i];
    const int mcs = added ? std::min(l.mcs, after[i]) : l.mcs;
    if (mcs != kNoMcs) total += link_rate(env.mcs.rate_bps(mcs), l.load_bps);
  }
  if (added) total += link_rate(env.mcs.rate_bps(added->mcs), new_load_bps);
  return total;
}

OptimalChoice brute_force_optimal(const Environment& env, const LinkTable& links, const Point& ue_position,
                                  double load_bps, int num_active) {
  OptimalChoice best;
  best.objective = objective(env, links, std::nullopt, load_bps);
  double best_total = -1.0;
  std::vector<double> interference;
  for (const ActiveLink& l : links.entries())
    interference.push_back(rx_power_60(env, env.aps[l.ap], l.beam, ue_position));

  for (int a : links.unused_aps(num_active)) {
    const ApConfig& ap = env.aps[a];
    for (int b = 1; b <= ap.num_sectors; ++b) {
      const double p = rx_power_60(env, ap, b, ue_position);
      const int mcs = mcs_from_sinr(env.mcs, sinr_db(p, interference, env.noise_floor_60_dbm));
      if (mcs == kNoMcs) continue;
      if (!protects_existing(env, links, a, b)) continue;
      const Assignment cand{a, b, mcs, p};
      const double total = objective(env, links, cand, load_bps);
      if (total > best_total) {
        best_total = total;
        best.assignment = cand;
        best.objective = total;
      }
    }
  }
  return best;
}

PipelineResult run_selection_pipeline(const Environment& env, const FingerprintDB& db, const OnlineFingerprint& fp,
                                      const Point& ue_position, const LinkTable& links, int num_active,
                                      const SelectorConfig& config) {
  PipelineResult result;
  result.candidates = prepare_candidates(env, db, fp, links.unused_aps(num_active), links, config);
  const auto& ranked = result.candidates.ranked;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const std::vector<int> trainable = trainable_beams(ranked[i]);
    if (trainable.empty()) continue;
    ++result.attempts;
    std::optional<int> next_expected;
    if (i + 1 < ranked.size()) next_expected = ranked[i + 1].expected_mcs;
    const TrainingOutcome t = train_and_pick(env, ranked[i].ap, trainable, ue_position, links, next_expected);
    if (t.accepted) {
      result.assignment = t.accepted;
      break;
    }
  }
  return result;
}

}  // namespace mmcoord
