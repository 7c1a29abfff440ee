#include "srw/sim/load.hpp"

#include <mutex>
#include <sstream>
#include <thread>

#include "srw/sim/client.hpp"

namespace srw::sim {

namespace {

struct SessionOutcome {
  bool completed = false;
  bool persisted = false;
  std::vector<double> latencies;
  std::vector<double> heartbeat_gaps;
  std::uint64_t seq_violations = 0;
  std::uint64_t trajectory_violations = 0;
  std::vector<std::string> errors;
};

/// Counts the exported chat messages and checks turn_index gaplessness and
/// user/robot alternation.
std::optional<std::string> check_transcript(const std::string& text, std::size_t expected) {
  std::istringstream in(text);
  std::string line;
  std::size_t count = 0;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json record = Json::parse(line, nullptr, false);
    if (record.is_discarded()) return "unparseable transcript line";
    if (header) {
      header = false;
      if (!record.contains("communication")) return "transcript lacks a header";
      continue;
    }
    if (!record.contains("chat_message")) return "unexpected transcript record";
    auto msg = chat_message_from_json(record["chat_message"]);
    if (!msg) return msg.error().message;
    if (msg->turn_index != count) {
      return "turn_index " + std::to_string(msg->turn_index) + " at position " + std::to_string(count);
    }
    const auto expected_author = count % 2 == 0 ? Author::user : Author::robot;
    if (msg->author != expected_author) return "author order broken at " + std::to_string(count);
    ++count;
  }
  if (count != expected) {
    return "expected " + std::to_string(expected) + " messages, found " + std::to_string(count);
  }
  return std::nullopt;
}

SessionOutcome run_session(const Url& server, const LoadOptions& options, int index) {
  SessionOutcome out;
  const auto fail = [&](std::string what) { out.errors.push_back("session " + std::to_string(index) + ": " + what); };

  RestClient rest(server);
  auto session = rest.create_session();
  if (!session) {
    fail("create: " + session.error().message);
    return out;
  }
  const auto& id = session->id;
  auto control = WsClient::connect(server, ChannelKind::control, id);
  auto robot = WsClient::connect(server, ChannelKind::robot, id);
  if (!control || !robot) {
    fail("attach failed");
    return out;
  }
  auto& bot = **robot;
  bot.auto_playback(std::chrono::milliseconds{0});

  const auto is_state = [](const Received& r) { return r.is(MessageType::state_update); };
  if (!bot.wait_for(is_state, options.turn_timeout)) {
    fail("no initial state_update");
    return out;
  }
  std::size_t cursor = bot.size();
  int done = 0;
  for (int k = 0; k < options.turns; ++k) {
    const auto t0 = SteadyClock::now();
    auto sent = bot.send(UserText{"session " + std::to_string(index) + " turn " + std::to_string(k)});
    if (!sent) {
      fail("send: " + sent.error().message);
      break;
    }
    auto reply = bot.wait_for(
        [](const Received& r) { return r.is(MessageType::robot_reply) || r.is(MessageType::error); },
        options.turn_timeout, cursor);
    if (!reply) {
      fail("turn " + std::to_string(k) + ": no reply");
      break;
    }
    const auto reply_frame = bot.at(*reply);
    if (reply_frame.is(MessageType::error)) {
      fail("turn " + std::to_string(k) + ": " + std::get<ErrorReport>(reply_frame.envelope->payload).code);
      break;
    }
    out.latencies.push_back(elapsed_ms(t0, reply_frame.at));
    auto idle = bot.wait_for(
        [](const Received& r) {
          return r.is(MessageType::state_update) &&
                 std::get<StateUpdate>(r.envelope->payload).state.phase == Phase::idle;
        },
        options.turn_timeout, *reply + 1);
    if (!idle) {
      fail("turn " + std::to_string(k) + ": never returned to idle");
      break;
    }
    std::vector<Phase> phases;
    for (std::size_t i = cursor; i <= *idle; ++i) {
      const auto r = bot.at(i);
      if (r.is(MessageType::state_update)) phases.push_back(std::get<StateUpdate>(r.envelope->payload).state.phase);
    }
    if (auto bad = check_trajectory(phases)) {
      ++out.trajectory_violations;
      fail("turn " + std::to_string(k) + ": " + *bad);
    }
    cursor = *idle + 1;
    ++done;
  }
  out.completed = done == options.turns;

  if (options.hold.count() > 0) std::this_thread::sleep_for(options.hold);

  std::optional<SteadyTime> last;
  for (const auto& r : (*control)->snapshot()) {
    if (!r.is(MessageType::heartbeat)) continue;
    if (last) out.heartbeat_gaps.push_back(elapsed_ms(*last, r.at));
    last = r.at;
  }

  auto transcript = rest.transcript(id);
  if (!transcript) {
    fail("transcript: " + transcript.error().message);
  } else if (auto bad = check_transcript(*transcript, 2 * static_cast<std::size_t>(options.turns))) {
    fail("persistence: " + *bad);
  } else {
    out.persisted = true;
  }

  out.seq_violations = bot.seq_violations() + (*control)->seq_violations() + bot.decode_failures() +
                       (*control)->decode_failures();
  bot.close();
  (*control)->close();
  return out;
}

}  // namespace

std::optional<std::string> check_trajectory(const std::vector<Phase>& phases) {
  static const std::vector<Phase> expected{Phase::listening, Phase::thinking, Phase::speaking, Phase::idle};
  if (phases == expected) return std::nullopt;
  std::string seen;
  for (const auto p : phases) {
    if (!seen.empty()) seen += ",";
    seen += to_string(p);
  }
  return "trajectory [" + seen + "] instead of [listening,thinking,speaking,idle]";
}

bool LoadReport::ok() const {
  return errors.empty() && completed_sessions == sessions && seq_violations == 0 && trajectory_violations == 0 &&
         persistence_failures == 0 && heartbeat_within_fraction >= 0.99;
}

Json LoadReport::to_json() const {
  return Json{{"ok", ok()},
              {"sessions", sessions},
              {"turns_per_session", turns},
              {"completed_sessions", completed_sessions},
              {"turn_latency_ms", sim::to_json(summarize(turn_latency_ms))},
              {"heartbeat_gap_ms", sim::to_json(summarize(heartbeat_gaps_ms))},
              {"heartbeat_within_fraction", heartbeat_within_fraction},
              {"seq_violations", seq_violations},
              {"trajectory_violations", trajectory_violations},
              {"persistence_failures", persistence_failures},
              {"errors", errors}};
}

std::string LoadReport::summary() const {
  const auto lat = summarize(turn_latency_ms);
  const auto hb = summarize(heartbeat_gaps_ms);
  std::ostringstream out;
  out << "load " << sessions << "x" << turns << ": " << (ok() ? "PASS" : "FAIL") << "\n"
      << "  completed sessions   " << completed_sessions << "/" << sessions << "\n"
      << "  turn latency ms      p50 " << lat.p50 << "  p95 " << lat.p95 << "  p99 " << lat.p99 << "  (n=" << lat.count
      << ")\n"
      << "  heartbeat gaps ms    n=" << hb.count << "  min " << hb.min << "  max " << hb.max << "  within +-"
      << heartbeat_tolerance_ms << ": " << heartbeat_within_fraction * 100 << "%\n"
      << "  seq violations       " << seq_violations << "\n"
      << "  trajectory errors    " << trajectory_violations << "\n"
      << "  persistence failures " << persistence_failures << "\n";
  for (const auto& e : errors) out << "  error: " << e << "\n";
  return out.str();
}

Expected<LoadReport> run_load(const Url& server, const LoadOptions& options) {
  if (options.sessions < 1 || options.turns < 1) return make_error("bad_request", "sessions and turns must be >= 1");
  auto health = RestClient(server).request("GET", "/healthz");
  if (!health) return health.error();

  std::vector<SessionOutcome> outcomes(static_cast<std::size_t>(options.sessions));
  std::vector<std::thread> workers;
  workers.reserve(outcomes.size());
  for (int i = 0; i < options.sessions; ++i) {
    workers.emplace_back([&, i] { outcomes[static_cast<std::size_t>(i)] = run_session(server, options, i); });
  }
  for (auto& w : workers) w.join();

  LoadReport report;
  report.sessions = options.sessions;
  report.turns = options.turns;
  report.heartbeat_tolerance_ms = options.heartbeat_tolerance_ms;
  for (auto& o : outcomes) {
    report.completed_sessions += o.completed ? 1 : 0;
    report.persistence_failures += o.persisted ? 0 : 1;
    report.seq_violations += o.seq_violations;
    report.trajectory_violations += o.trajectory_violations;
    report.turn_latency_ms.insert(report.turn_latency_ms.end(), o.latencies.begin(), o.latencies.end());
    report.heartbeat_gaps_ms.insert(report.heartbeat_gaps_ms.end(), o.heartbeat_gaps.begin(), o.heartbeat_gaps.end());
    report.errors.insert(report.errors.end(), o.errors.begin(), o.errors.end());
  }
  report.heartbeat_within_fraction =
      fraction_within(report.heartbeat_gaps_ms, options.heartbeat_ms, options.heartbeat_tolerance_ms);
  return report;
}

}  // namespace srw::sim
