#ifndef MMCOORD_SCENARIO_HPP
#define MMCOORD_SCENARIO_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mmcoord/env_model.hpp"
#include "mmcoord/fingerprint_db.hpp"
#include "mmcoord/mac_sim.hpp"

namespace mmcoord {

struct SweepSpec {
  std::vector<int> ap_counts{1, 2, 4, 6, 8};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<MacMode> modes{MacMode::kCoordinated, MacMode::kDcf};
};

/// Everything one scenario file describes. Missing keys keep these defaults.
struct Scenario {
  Environment env = default_office();
  ClusterOptions cluster;
  SimConfig sim;
  SweepSpec sweep;
};

/// Parse failure carrying the 1-based line it refers to (0 when not line-specific).
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(const std::string& source, int line, const std::string& message);
  int line() const { return line_; }

 private:
  int line_;
};

/// INI-style text: `[section]` headers, `key = value` lines, `#` or `;`
/// comments. Repeated `ap` lines (environment) and `mcs` lines (mcs_table)
/// replace the default AP list and MCS ladder.
Scenario parse_scenario(std::string_view text, const std::string& source = "<scenario>");
Scenario load_scenario(const std::string& path);

/// Scenario file text that reproduces the built-in defaults.
std::string default_scenario_text();

}  // namespace mmcoord

#endif  // MMCOORD_SCENARIO_HPP
