#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "srw/expected.hpp"
#include "srw/json_codec.hpp"
#include "srw/model.hpp"
#include "srw/sim/stats.hpp"
#include "srw/url.hpp"

namespace srw::sim {

struct LoadOptions {
  int sessions = 1;
  int turns = 1;
  /// Keep the channels open this long after the last turn, e.g. to sample
  /// heartbeats.
  std::chrono::milliseconds hold{0};
  std::chrono::milliseconds turn_timeout{10000};
  double heartbeat_ms = 5000;
  double heartbeat_tolerance_ms = 500;
};

struct LoadReport {
  int sessions = 0;
  int turns = 0;
  int completed_sessions = 0;
  std::vector<double> turn_latency_ms;  // user_text sent -> robot_reply received
  std::vector<double> heartbeat_gaps_ms;
  std::uint64_t seq_violations = 0;
  std::uint64_t trajectory_violations = 0;
  std::uint64_t persistence_failures = 0;  // sessions without exactly 2K gapless messages
  double heartbeat_within_fraction = 1.0;
  double heartbeat_tolerance_ms = 500;
  std::vector<std::string> errors;

  bool ok() const;
  Json to_json() const;
  std::string summary() const;
};

/// N concurrent sessions, each running K text turns to completion
/// (playback acknowledged) on its own client pair.
Expected<LoadReport> run_load(const Url& server, const LoadOptions& options);

/// Phases seen on the robot channel between a turn's input and its return
/// to idle, or an explanation of why they differ from
/// listening, thinking, speaking, idle.
std::optional<std::string> check_trajectory(const std::vector<Phase>& phases);

}  // namespace srw::sim
