#ifndef MMCOORD_LINK_SELECTOR_HPP
#define MMCOORD_LINK_SELECTOR_HPP

#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mmcoord/env_model.hpp"
#include "mmcoord/fingerprint_db.hpp"

namespace mmcoord {

struct OnlineFingerprint {
  Eigen::VectorXd rss;  // one Wi-Fi RSS reading per AP, dBm
};

struct ActiveLink {
  int ap = 0;
  int ue = 0;
  int beam = kNullSector;
  int mcs = kNoMcs;  // as announced in the BID frame
  double rx_power_dbm = 0.0;
  double load_bps = 0.0;
  Point ue_position = Point::Zero();
};

/// Established 60 GHz links: at most one per AP and one per UE.
class LinkTable {
 public:
  /// Throws std::invalid_argument if the AP or UE is already linked or mcs < MCS1.
  void add(const ActiveLink& link);
  void remove_ap(int ap);
  void remove_ue(int ue);
  bool ap_used(int ap) const;
  const ActiveLink* find_ue(int ue) const;
  const ActiveLink* find_ap(int ap) const;
  const std::vector<ActiveLink>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  /// APs among [0, num_active) that carry no link.
  std::vector<int> unused_aps(int num_active) const;

 private:
  std::vector<ActiveLink> entries_;
};

/// How the strict overlapped-LP rule picks the MCS an existing link must keep.
enum class BadBeamRule {
  /// Degradation below the link's announced MCS at any overlapped LP.
  kAnnounced,
  /// Degradation below min(announced MCS, the LP's own offline MCS).
  kAnnouncedOrOffline,
  /// Degradation below the announced MCS, checked only at overlapped LPs whose
  /// offline MCS can support it (where the existing UE can plausibly be).
  kPlausible,
  /// Every LP where the announced beam still sustains the announced MCS under
  /// the other live links; the candidate must not push any of them below it.
  /// Signal is the announced beam's modelled power, interference is aggregate,
  /// and sidelobe exposure counts (no overlap margin).
  kServingBeam,
  /// No elimination; only meaningful as a control.
  kOff,
};

/// How an unused AP's expected MCS is read from the offline maps.
enum class ExpectedMcsRule {
  /// Highest offline MCS anywhere in the clusters of its theta beams.
  kClusterMax,
  /// Offline MCS at the LP nearest the UE in fingerprint space, searched over
  /// the clusters of its theta beams.
  kNearestLp,
};

struct SelectorConfig {
  int best_beam_limit = 6;  // |theta|
  int candidate_limit = 2;  // |A(k)|
  double overlap_margin_db = 3.0;  // candidate gain above the sidelobe floor that counts as coverage
  BadBeamRule bad_beam_rule = BadBeamRule::kServingBeam;
  ExpectedMcsRule expected_mcs_rule = ExpectedMcsRule::kNearestLp;
};

struct RankedAp {
  int ap = 0;
  std::vector<int> best_beams;  // theta, best first
  std::vector<int> bad_beams;   // subset of theta
  int expected_mcs = kNoMcs;
};

struct CandidateSet {
  std::vector<RankedAp> ranked;  // priority order
  bool empty() const { return ranked.empty(); }
};

struct Assignment {
  int ap = 0;
  int beam = kNullSector;
  int mcs = kNoMcs;
  double rx_power_dbm = 0.0;
};

struct TrainingOutcome {
  std::optional<Assignment> accepted;
  int best_beam = kNullSector;  // max-power trainable beam, even when declined
  int measured_mcs = kNoMcs;
};

OnlineFingerprint measure_online_fingerprint(const Environment& env, const Point& ue_position, std::mt19937_64& rng);

/// Sectors of `ap` ranked by min-over-exemplars squared distance to the
/// fingerprint, truncated to `limit`. Ties go to the lower sector id.
std::vector<int> estimate_best_beams(const FingerprintDB& db, const OnlineFingerprint& fp, int ap, int limit);

int expected_mcs(const FingerprintDB& db, const OnlineFingerprint& fp, int ap, const std::vector<int>& theta,
                 ExpectedMcsRule rule);

struct ApEstimate {
  int ap = 0;
  std::vector<int> best_beams;
  int expected_mcs = kNoMcs;
};

/// Keeps the `limit` APs with the highest expected MCS, descending. Input order
/// does not matter; ties go to the lower AP id; empty theta or kNoMcs are skipped.
CandidateSet select_candidate_aps(const std::vector<ApEstimate>& estimates, int limit);

/// The DB-side MCS an existing link would see at LP `lp` with the candidate
/// (ap, beam) transmitting.
int db_mcs_with_interferer(const Environment& env, const FingerprintDB& db, const ActiveLink& existing, int lp,
                           int candidate_ap, int candidate_beam);

/// LPs of `existing`'s best-sector cluster that the candidate beam also covers.
std::vector<int> overlapped_lps(const Environment& env, const FingerprintDB& db, const ActiveLink& existing,
                                int candidate_ap, int candidate_beam, double overlap_margin_db);

/// Whether (candidate_ap, beam) fails the overlapped-LP test for any existing link.
bool is_bad_beam(const Environment& env, const FingerprintDB& db, int candidate_ap, int beam, const LinkTable& links,
                 const SelectorConfig& config = {});

/// Beams of `theta` that would push any existing link below its protected MCS
/// at an overlapped LP. Always a subset of `theta`.
std::vector<int> eliminate_bad_beams(const Environment& env, const FingerprintDB& db, int candidate_ap,
                                     const std::vector<int>& theta, const LinkTable& links,
                                     const SelectorConfig& config = {});

/// Ranks the given unused APs and drops bad beams from each.
CandidateSet prepare_candidates(const Environment& env, const FingerprintDB& db, const OnlineFingerprint& fp,
                                const std::vector<int>& unused_aps, const LinkTable& links,
                                const SelectorConfig& config = {});

/// Beam training on the true channel at the UE's position, under interference
/// from every existing link. Declines when the best MCS is NONE or falls below
/// `next_expected_mcs` (when a next candidate exists).
TrainingOutcome train_and_pick(const Environment& env, int ap, const std::vector<int>& trainable,
                               const Point& ue_position, const LinkTable& links,
                               std::optional<int> next_expected_mcs);

/// trainable = theta minus bad beams, keeping theta's order.
std::vector<int> trainable_beams(const RankedAp& candidate);

/// True SINR -> MCS of every existing link under the current links.
std::vector<int> true_mcs_now(const Environment& env, const LinkTable& links);
/// Same, once (ap, beam) also transmits.
std::vector<int> true_mcs_after(const Environment& env, const LinkTable& links, int ap, int beam);
/// No-degradation test on the true channel: no existing link falls below
/// min(announced MCS, its MCS before the addition).
bool protects_existing(const Environment& env, const LinkTable& links, int ap, int beam);

/// Total-rate objective: Z(new) + sum of Z(existing), each Z = min(rate, load).
/// Existing links contribute at min(announced, post-establishment) MCS.
double objective(const Environment& env, const LinkTable& links, const std::optional<Assignment>& added,
                 double new_load_bps);

struct OptimalChoice {
  std::optional<Assignment> assignment;
  double objective = 0.0;
};

/// Exhaustive search over every unused AP among [0, num_active) and every
/// sector. Feasible pairs keep every existing link's MCS and reach MCS1.
OptimalChoice brute_force_optimal(const Environment& env, const LinkTable& links, const Point& ue_position,
                                  double load_bps, int num_active);

struct PipelineResult {
  CandidateSet candidates;
  std::optional<Assignment> assignment;
  int attempts = 0;  // candidates that trained
};

/// The coordinated selection without airtime: candidates in priority order,
/// bad beams re-evaluated per attempt, handover on decline.
PipelineResult run_selection_pipeline(const Environment& env, const FingerprintDB& db, const OnlineFingerprint& fp,
                                      const Point& ue_position, const LinkTable& links, int num_active,
                                      const SelectorConfig& config = {});

}  // namespace mmcoord

#endif  // MMCOORD_LINK_SELECTOR_HPP
