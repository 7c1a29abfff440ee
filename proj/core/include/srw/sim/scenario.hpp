#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "srw/expected.hpp"
#include "srw/json_codec.hpp"
#include "srw/sim/stats.hpp"
#include "srw/url.hpp"

namespace srw::sim {

enum class StepAction { text, voice_fixture, wake, wait, expect_reply, expect_state, update_config };

}  // namespace srw::sim

template <>
struct srw::EnumNames<srw::sim::StepAction> {
  static constexpr std::array<std::string_view, 7> names{
      "text", "voice_fixture", "wake", "wait", "expect_reply", "expect_state", "update_config"};
};

namespace srw::sim {

struct Step {
  std::int64_t at_ms = 0;  // offset from scenario start
  StepAction action = StepAction::wait;
  Json args = Json::object();
};

/// Line-oriented file: a header {"name","config"} followed by one
/// {"at_ms","action","args"} record per line. Blank lines and lines
/// starting with '#' are ignored.
struct Scenario {
  std::string name;
  Json config = Json::object();  // partial RobotConfig merged over defaults
  std::vector<Step> steps;
  std::filesystem::path base_dir;  // voice fixture paths resolve against it
};

/// Errors use code "bad_scenario" with the offending line number.
Expected<Scenario> parse_scenario(std::string_view text, std::filesystem::path base_dir = {});
Expected<Scenario> load_scenario(const std::filesystem::path& file);

struct ExpectationResult {
  std::size_t step = 0;
  std::string action;
  bool passed = false;
  std::string detail;  // expected vs. observed on failure
};

struct ScenarioReport {
  std::string name;
  std::string session_id;
  std::vector<ExpectationResult> expectations;
  std::vector<double> turn_latency_ms;  // input sent -> robot_reply received
  std::size_t envelopes_received = 0;
  std::uint64_t seq_violations = 0;

  bool passed() const;
  Json to_json() const;
  std::string summary() const;
};

/// Errors: "connect_failed" when the server cannot be reached or the
/// session cannot be set up. Expectation failures are part of the report.
Expected<ScenarioReport> run_scenario(const Url& server, const Scenario& scenario);

}  // namespace srw::sim
