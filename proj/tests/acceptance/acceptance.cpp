// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
// failure. Run with criterion names as arguments to select a subset.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "oracles.hpp"
#include "srw/gateway.hpp"
#include "srw/pipeline.hpp"
#include "srw/sim/client.hpp"
#include "srw/sim/load.hpp"
#include "srw/sim/scenario.hpp"
#include "srw/sim/stats.hpp"
#include "test_support.hpp"

using namespace srw;
using namespace std::chrono_literals;
using acceptance::transition_table;

namespace {

// Pinned tolerances.
constexpr int kWakeRepetitions = 50;
constexpr int kWakeBatch = 10;
constexpr double kWakeWindowMs = 5000.0;
constexpr double kWakeToleranceMs = 100.0;

constexpr auto kHeartbeatObservation = 60s;
constexpr int kHeartbeatExpected = 12;
constexpr int kHeartbeatCountSlack = 1;
constexpr double kHeartbeatPeriodMs = 5000.0;
constexpr double kHeartbeatGapToleranceMs = 500.0;
constexpr double kHeartbeatGapFraction = 0.99;

constexpr int kLatencyTurns = 100;
constexpr double kLatencyP95LimitMs = 150.0;

constexpr std::size_t kGeneratedEnvelopes = 5000;
constexpr std::size_t kFixtureEnvelopes = 50;

constexpr int kPromptHistories = 1000;
constexpr std::size_t kPromptWindow = 20;

constexpr int kLoadSessions = 20;
constexpr int kLoadTurns = 10;

constexpr int kRaceRepetitions = 100;

constexpr int kDegradationRepetitions = 5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  std::function<Outcome()> run;
};

std::string fmt(double v, int digits = 1) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

/// In-process server on a free loopback port with its own data dir.
struct Server {
  explicit Server(Providers providers = mock_providers(), GatewayConfig base = {}) {
    base.bind_host = "127.0.0.1";
    base.bind_port = 0;
    base.data_dir = dir.path() / "data";
    auto started = Gateway::start(base, std::move(providers));
    if (!started) throw std::runtime_error("server start: " + started.error().message);
    gateway = std::move(*started);
    url = *parse_url(gateway->base_url());
  }

  sim::RestClient rest() const { return sim::RestClient(url); }

  std::unique_ptr<sim::WsClient> ws(ChannelKind kind, const std::string& id) const {
    auto c = sim::WsClient::connect(url, kind, id);
    if (!c) throw std::runtime_error("ws connect: " + c.error().message);
    return std::move(*c);
  }

  test::TempDir dir;
  std::unique_ptr<Gateway> gateway;
  Url url;
};

std::function<bool(const sim::Received&)> of(MessageType t) {
  return [t](const sim::Received& r) { return r.is(t); };
}

// ---------------------------------------------------------------------------

Outcome wake_window_timing() {
  Server server;
  auto scenario = sim::load_scenario(test::fixture_path("scenarios/wake_silence.scenario"));
  if (!scenario) return {false, scenario.error().message};

  std::vector<double> observed;
  std::vector<std::string> failures;
  std::mutex m;
  for (int batch = 0; batch < kWakeRepetitions / kWakeBatch; ++batch) {
    std::vector<std::thread> threads;
    for (int i = 0; i < kWakeBatch; ++i) {
      threads.emplace_back([&] {
        auto report = sim::run_scenario(server.url, *scenario);
        std::lock_guard lock(m);
        if (!report) {
          failures.push_back(report.error().message);
          return;
        }
        if (!report->passed()) failures.push_back(report->summary());
        // the idle expectation is the last one; its detail carries the measurement
        const auto& last = report->expectations.back();
        const auto pos = last.detail.find("observed after ");
        if (pos != std::string::npos) observed.push_back(std::stod(last.detail.substr(pos + 15)));
      });
    }
    for (auto& t : threads) t.join();
  }
  const auto within = std::count_if(observed.begin(), observed.end(), [](double v) {
    return std::abs(v - kWakeWindowMs) <= kWakeToleranceMs;
  });
  const auto s = sim::summarize(observed);
  std::string detail = std::to_string(within) + "/" + std::to_string(kWakeRepetitions) + " idle within " +
                       fmt(kWakeWindowMs, 0) + " +- " + fmt(kWakeToleranceMs, 0) + " ms (min " + fmt(s.min) +
                       ", max " + fmt(s.max) + ")";
  if (!failures.empty()) detail += "; first failure: " + failures.front();
  return {within == kWakeRepetitions && failures.empty(), detail};
}

Outcome heartbeat_cadence() {
  Server server;
  const auto id = server.rest().create_session();
  if (!id) return {false, id.error().message};
  auto control = server.ws(ChannelKind::control, id->id);
  const auto start = SteadyClock::now();
  std::this_thread::sleep_for(kHeartbeatObservation);
  const auto end = start + kHeartbeatObservation;
  std::vector<SteadyTime> beats;
  for (const auto& r : control->snapshot()) {
    if (r.is(MessageType::heartbeat) && r.at <= end) beats.push_back(r.at);
  }
  std::vector<double> gaps;
  for (std::size_t i = 1; i < beats.size(); ++i) gaps.push_back(elapsed_ms(beats[i - 1], beats[i]));
  const double fraction = sim::fraction_within(gaps, kHeartbeatPeriodMs, kHeartbeatGapToleranceMs);
  const int count = static_cast<int>(beats.size());
  const bool pass = std::abs(count - kHeartbeatExpected) <= kHeartbeatCountSlack && !gaps.empty() &&
                    fraction >= kHeartbeatGapFraction && control->seq_violations() == 0;
  const auto s = sim::summarize(gaps);
  return {pass, std::to_string(count) + " heartbeats in 60 s; gaps within 5000 +- 500 ms: " +
                    fmt(100.0 * fraction) + "% (min " + fmt(s.min) + ", max " + fmt(s.max) + ")"};
}

Outcome turn_latency() {
  Server server;
  sim::LoadOptions o;
  o.sessions = 1;
  o.turns = kLatencyTurns;
  auto report = sim::run_load(server.url, o);
  if (!report) return {false, report.error().message};
  const auto s = sim::summarize(report->turn_latency_ms);
  const bool pass = report->ok() && s.count == static_cast<std::size_t>(kLatencyTurns) && s.p95 < kLatencyP95LimitMs;
  return {pass, std::to_string(s.count) + " text turns, p50 " + fmt(s.p50, 2) + " ms, p95 " + fmt(s.p95, 2) +
                    " ms, max " + fmt(s.max, 2) + " ms (limit p95 < " + fmt(kLatencyP95LimitMs, 0) + " ms)"};
}

Outcome envelope_round_trip() {
  std::size_t fixture_ok = 0;
  std::vector<std::string> problems;
  const auto lines = test::read_lines(test::fixture_path("envelopes.ndjson"));
  for (const auto& line : lines) {
    auto env = decode(line);
    if (!env) {
      problems.push_back("fixture decode: " + env.error().message);
      continue;
    }
    auto text = encode(*env);
    if (!text || *text != acceptance::canonical_oracle(line) || !decode(*text) || *decode(*text) != *env) {
      problems.push_back("fixture mismatch: " + line.substr(0, 80));
      continue;
    }
    ++fixture_ok;
  }

  std::mt19937_64 rng(20240521);
  std::unordered_set<std::string> encodings;
  std::size_t generated_ok = 0;
  for (std::size_t i = 0; i < kGeneratedEnvelopes; ++i) {
    // seq is unique, so every envelope is distinct and must encode distinctly
    const auto env = acceptance::random_envelope(rng, i * 7919 + (rng() % 2 ? 0 : 1ULL << 63));
    auto text = encode(env);
    if (!text) {
      problems.push_back("generated encode: " + text.error().message);
      continue;
    }
    auto back = decode(*text);
    if (!back || *back != env || *text != acceptance::canonical_oracle(*text)) {
      problems.push_back("generated mismatch: " + text->substr(0, 80));
      continue;
    }
    encodings.insert(*text);
    ++generated_ok;
  }
  const bool injective = encodings.size() == generated_ok;
  const bool pass = fixture_ok == kFixtureEnvelopes && lines.size() == kFixtureEnvelopes &&
                    generated_ok == kGeneratedEnvelopes && injective && problems.empty();
  std::string detail = std::to_string(fixture_ok) + "/" + std::to_string(lines.size()) + " fixtures, " +
                       std::to_string(generated_ok) + "/" + std::to_string(kGeneratedEnvelopes) +
                       " generated round-trip; " + std::to_string(encodings.size()) + " distinct encodings";
  if (!problems.empty()) detail += "; " + problems.front();
  return {pass, detail};
}

Outcome prompt_assembly() {
  std::mt19937_64 rng(99);
  const std::vector<std::size_t> pinned{0, 1, 20, 21, 25};
  std::set<std::size_t> covered;
  int agree = 0, formula = 0;
  for (int i = 0; i < kPromptHistories; ++i) {
    const std::size_t turns = i < static_cast<int>(pinned.size()) * 4
                                  ? pinned[static_cast<std::size_t>(i) % pinned.size()]
                                  : std::uniform_int_distribution<std::size_t>(0, 40)(rng);
    covered.insert(turns);
    const auto history = acceptance::random_history(rng, turns);
    const std::string system = rng() % 2 ? "You are a friendly robot." : "";
    const auto got = assemble_prompt(system, history, "new input", kPromptWindow);
    if (got == acceptance::prompt_oracle(system, history, "new input", kPromptWindow)) ++agree;
    if (got.size() == std::min(turns, kPromptWindow) * 2 + 1 + (system.empty() ? 0 : 1)) ++formula;
  }
  const bool all_pinned = std::all_of(pinned.begin(), pinned.end(), [&](auto t) { return covered.contains(t); });
  return {agree == kPromptHistories && formula == kPromptHistories && all_pinned,
          std::to_string(agree) + "/" + std::to_string(kPromptHistories) + " match the oracle, " +
              std::to_string(formula) + "/" + std::to_string(kPromptHistories) +
              " satisfy the length formula (0/1/20/21/25 turns included)"};
}

Outcome state_trajectory() {
  int pairs = 0, pairs_ok = 0;
  for (std::size_t p = 0; p < enum_count<Phase>(); ++p) {
    for (std::size_t e = 0; e < enum_count<AvatarEvent>(); ++e) {
      const auto phase = static_cast<Phase>(p);
      const auto event = static_cast<AvatarEvent>(e);
      const auto got = transition(AvatarState{phase, false}, event);
      const auto it = transition_table().find({phase, event});
      const bool ok = it == transition_table().end() ? !got : (got && got->phase == it->second);
      ++pairs;
      pairs_ok += ok ? 1 : 0;
    }
  }

  Server server;
  sim::LoadOptions o;
  o.sessions = 5;
  o.turns = 20;
  auto report = sim::run_load(server.url, o);
  if (!report) return {false, report.error().message};
  const std::size_t turns = report->turn_latency_ms.size();
  const bool pass = pairs == 24 && pairs_ok == 24 && report->trajectory_violations == 0 && report->ok() &&
                    turns == static_cast<std::size_t>(o.sessions * o.turns);
  return {pass, std::to_string(pairs_ok) + "/24 transition pairs agree with the table; " + std::to_string(turns) +
                    " turns observed, " + std::to_string(report->trajectory_violations) +
                    " off the idle>listening>thinking>speaking>idle path"};
}

/// A forked writer appends until it is killed; the reopened store must hold
/// a gapless prefix.
std::optional<std::string> kill_during_writes(const fs::path& dir) {
  {
    auto store = Store::open(dir);
    if (!store) return store.error().message;
    CommunicationSession s;
    s.id = "crash-test-000";
    s.created_at = now_epoch_ms();
    if (!(*store)->save_communication(s)) return std::string("save failed");
  }
  std::cout.flush();
  const pid_t child = ::fork();
  if (child == 0) {
    auto store = Store::open(dir);
    if (!store) ::_exit(3);
    for (std::uint64_t i = 0;; ++i) {
      ChatMessage m;
      m.session_id = "crash-test-000";
      m.author = i % 2 == 0 ? Author::user : Author::robot;
      if (m.author == Author::user) m.modality = Modality::text;
      m.text = std::string(200 + i % 300, 'x');
      (void)(*store)->append_chat_message(m);
    }
  }
  if (child < 0) return std::string("fork failed");
  std::this_thread::sleep_for(300ms);
  ::kill(child, SIGKILL);
  int status = 0;
  ::waitpid(child, &status, 0);
  auto store = Store::open(dir);
  if (!store) return "reopen after kill: " + store.error().message;
  auto history = (*store)->fetch_history("crash-test-000");
  if (!history || history->empty()) return std::string("no messages survived the kill");
  for (std::size_t i = 0; i < history->size(); ++i) {
    if ((*history)[i].turn_index != i) return "gap at " + std::to_string(i);
  }
  // the store keeps working after recovery
  ChatMessage next;
  next.session_id = "crash-test-000";
  next.author = Author::user;
  next.modality = Modality::text;
  next.text = "after";
  auto appended = (*store)->append_chat_message(next);
  if (!appended || appended->turn_index != history->size()) return std::string("append after recovery failed");
  return std::nullopt;
}

/// Cut a log in the middle of its last record (and separately leave junk
/// after it); reopening must yield the prefix of complete records.
std::optional<std::string> torn_tails(const fs::path& source, const std::vector<std::string>& ids) {
  std::mt19937_64 rng(5);
  int case_no = 0;
  for (const auto& id : ids) {
    for (const bool junk : {false, true}) {
      test::TempDir copy;
      fs::copy(source, copy.path(), fs::copy_options::recursive);
      const auto log = copy.path() / "chat_messages" / (id + ".log");
      std::string bytes;
      {
        std::ifstream in(log, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
      }
      const auto last_start = bytes.rfind('\n', bytes.size() - 2) + 1;
      const std::size_t keep_lines = static_cast<std::size_t>(std::count(bytes.begin(), bytes.end(), '\n')) - 1;
      if (junk) {
        std::ofstream(log, std::ios::binary | std::ios::app) << "{\"chat_message\":{\"id\":\"torn";
      } else {
        const auto cut = last_start + 1 + rng() % (bytes.size() - last_start - 2);
        fs::resize_file(log, cut);
      }
      auto original = Store::open(source);
      auto reopened = Store::open(copy.path());
      if (!original || !reopened) return std::string("open failed");
      auto want = *(*original)->fetch_history(id);
      if (!junk) want.resize(keep_lines);
      auto got = (*reopened)->fetch_history(id);
      if (!got || *got != want) return "torn tail case " + std::to_string(case_no) + " did not recover the prefix";
      if ((*reopened)->recovered_tail_bytes() == 0) return std::string("recovery did not report dropped bytes");
      ++case_no;
    }
  }
  return std::nullopt;
}

Outcome persistence() {
  test::TempDir snapshot;
  std::vector<std::string> ids;
  std::string detail;
  int gapless = 0, round_trips = 0;
  {
    Server server;
    sim::LoadOptions o;
    o.sessions = kLoadSessions;
    o.turns = kLoadTurns;
    auto report = sim::run_load(server.url, o);
    if (!report) return {false, report.error().message};
    if (!report->ok()) return {false, "load run: " + report->summary()};

    ids = server.gateway->registry().session_ids();
    for (const auto& id : ids) {
      auto h = server.gateway->store().fetch_history(id);
      bool ok = h && h->size() == static_cast<std::size_t>(2 * kLoadTurns);
      for (std::size_t i = 0; ok && i < h->size(); ++i) {
        const auto& m = (*h)[i];
        ok = m.turn_index == i && m.author == (i % 2 == 0 ? Author::user : Author::robot) &&
             (i % 2 == 0 || m.in_reply_to == (*h)[i - 1].id);
      }
      gapless += ok ? 1 : 0;

      test::TempDir fresh;
      auto exported = server.rest().transcript(id);
      auto store = Store::open(fresh.path());
      if (exported && store && (*store)->import_transcript(*exported)) {
        if (*(*store)->fetch_history(id) == *h && *(*store)->export_transcript(id) == *exported) ++round_trips;
      }
    }
    server.gateway->shutdown();
    fs::copy(server.gateway->store().data_dir(), snapshot.path() / "data", fs::copy_options::recursive);
  }

  const std::vector<std::string> torn_ids(ids.begin(), ids.begin() + std::min<std::size_t>(5, ids.size()));
  const auto torn = torn_tails(snapshot.path() / "data", torn_ids);
  test::TempDir crash_dir;
  const auto killed = kill_during_writes(crash_dir.path());

  const bool pass = static_cast<int>(ids.size()) == kLoadSessions && gapless == kLoadSessions &&
                    round_trips == kLoadSessions && !torn && !killed;
  detail = std::to_string(gapless) + "/" + std::to_string(kLoadSessions) + " sessions with " +
           std::to_string(2 * kLoadTurns) + " ordered gapless messages; " + std::to_string(round_trips) + "/" +
           std::to_string(kLoadSessions) + " export>import>fetch equal; crash recovery " +
           (torn || killed ? "FAILED: " + torn.value_or(killed.value_or("")) : std::string("clean prefix"));
  return {pass, detail};
}

Outcome config_race() {
  Server server;
  auto session = server.rest().create_session();
  if (!session) return {false, session.error().message};
  const auto id = session->id;
  auto control = server.ws(ChannelKind::control, id);
  int clean = 0;
  std::string first_problem;
  for (int rep = 0; rep < kRaceRepetitions; ++rep) {
    const std::uint64_t version = static_cast<std::uint64_t>(rep) + 1;
    std::promise<void> go;
    auto gate = go.get_future().share();
    auto writer = [&, gate](const char* gender) {
      gate.wait();
      auto r = server.rest().patch_config(id, Json{{"voice_gender", gender}}, version);
      return r ? r->status : -1;
    };
    auto a = std::async(std::launch::async, writer, "female");
    auto b = std::async(std::launch::async, writer, "male");
    go.set_value();
    const int sa = a.get(), sb = b.get();
    if ((sa == 200 && sb == 409) || (sa == 409 && sb == 200)) {
      ++clean;
    } else if (first_problem.empty()) {
      first_problem = "rep " + std::to_string(rep) + ": " + std::to_string(sa) + "/" + std::to_string(sb);
    }
  }
  const auto expected_last = static_cast<std::uint64_t>(kRaceRepetitions) + 1;
  control->wait_for(
      [&](const sim::Received& r) {
        return r.is(MessageType::config_update) &&
               std::get<ConfigUpdate>(r.envelope->payload).config_version == expected_last;
      },
      5s);
  std::vector<std::uint64_t> versions;
  for (const auto& r : control->snapshot()) {
    if (r.is(MessageType::config_update)) versions.push_back(std::get<ConfigUpdate>(r.envelope->payload).config_version);
  }
  bool gapless = !versions.empty();
  for (std::size_t i = 0; gapless && i < versions.size(); ++i) gapless = versions[i] == i + 1;
  gapless = gapless && versions.back() == expected_last;
  std::string detail = std::to_string(clean) + "/" + std::to_string(kRaceRepetitions) +
                       " races with one 200 and one 409; channel saw versions 1.." +
                       std::to_string(versions.empty() ? 0 : versions.back()) +
                       (gapless ? " gapless" : " WITH GAPS");
  if (!first_problem.empty()) detail += "; " + first_problem;
  return {clean == kRaceRepetitions && gapless && control->seq_violations() == 0, detail};
}

Outcome degradation_matrix() {
  struct Case {
    std::string name;
    test::Fault fault;
    bool voice;
    bool text_disabled;
    std::size_t messages;      // persisted by the turn
    std::string error;         // expected error code, empty for a reply
    bool degraded_reply;
  };
  const std::vector<Case> cases{
      {"ok", test::Fault::none, false, false, 2, "", false},
      {"stt_failed", test::Fault::stt_failed, true, false, 0, "stt_failed", false},
      {"llm_failed", test::Fault::llm_failed, false, false, 1, "llm_failed", false},
      {"llm_timeout", test::Fault::llm_timeout, false, false, 1, "llm_failed", false},
      {"tts_failed", test::Fault::tts_failed, false, false, 2, "", true},
      {"mode_disabled", test::Fault::none, false, true, 0, "mode_disabled", false},
  };
  auto faults = std::make_shared<test::FaultSwitch>();
  Server server(test::faulty_providers(faults));
  int passed = 0, total = 0;
  std::string first_problem;
  for (const auto& c : cases) {
    for (int rep = 0; rep < kDegradationRepetitions; ++rep) {
      ++total;
      faults->set(c.fault);
      Json config{{"llm_model", "echo"}};
      if (c.text_disabled) config["modes"] = Json{{"text_enabled", false}, {"push_to_talk_enabled", true}};
      auto session = server.rest().create_session(config);
      if (!session) return {false, session.error().message};
      const auto id = session->id;
      auto robot = server.ws(ChannelKind::robot, id);
      robot->auto_playback(0ms);
      robot->wait_for(of(MessageType::state_update), 2s);
      const auto from = robot->size();
      if (c.voice) {
        robot->send(UserAudio{test::transcript_clip("hello"), Modality::voice_button});
      } else {
        robot->send(UserText{"hello"});
      }
      auto idx = robot->wait_for(
          [](const sim::Received& r) { return r.is(MessageType::robot_reply) || r.is(MessageType::error); }, 5s,
          from);
      std::string problem;
      if (!idx) {
        problem = "no outcome";
      } else {
        const auto frame = robot->at(*idx);
        if (c.error.empty()) {
          if (!frame.is(MessageType::robot_reply)) {
            problem = "expected a reply";
          } else {
            const auto& reply = std::get<RobotReply>(frame.envelope->payload);
            if (c.degraded_reply != !reply.audio || c.degraded_reply != reply.warning.has_value()) {
              problem = "wrong degradation flags";
            }
          }
        } else if (!frame.is(MessageType::error) ||
                   std::get<ErrorReport>(frame.envelope->payload).code != c.error) {
          problem = "expected error " + c.error;
        }
      }
      // back to idle: pipeline state and the last state_update on the channel
      const auto deadline = SteadyClock::now() + 3s;
      while (SteadyClock::now() < deadline && server.gateway->pipeline().state(id).phase != Phase::idle) {
        std::this_thread::sleep_for(5ms);
      }
      std::this_thread::sleep_for(20ms);
      std::optional<Phase> last_phase;
      for (const auto& r : robot->snapshot()) {
        if (r.is(MessageType::state_update)) last_phase = std::get<StateUpdate>(r.envelope->payload).state.phase;
      }
      if (problem.empty() && (server.gateway->pipeline().state(id).phase != Phase::idle || last_phase != Phase::idle)) {
        problem = "avatar not back to idle";
      }
      const auto history = server.gateway->store().fetch_history(id);
      if (problem.empty() && (!history || history->size() != c.messages)) {
        problem = "persisted " + std::to_string(history ? history->size() : 0) + " messages, want " +
                  std::to_string(c.messages);
      }
      if (problem.empty() && history->size() == 2 && (*history)[1].in_reply_to != (*history)[0].id) {
        problem = "robot message not tied to its user message";
      }
      if (problem.empty()) {
        ++passed;
      } else if (first_problem.empty()) {
        first_problem = c.name + ": " + problem;
      }
    }
  }
  faults->set(test::Fault::none);
  std::string detail = std::to_string(passed) + "/" + std::to_string(total) +
                       " fault cases (ok, stt_failed, llm_failed, llm_timeout, tts_failed, mode_disabled) persisted "
                       "the expected messages and returned to idle";
  if (!first_problem.empty()) detail += "; " + first_problem;
  return {passed == total, detail};
}

Outcome live_llm_contract() {
  std::vector<std::string> problems;
  const auto check = [&](bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  };

  LlmRequest request;
  request.model = "llama3.2";
  request.messages = {{LlmRole::system, "You are a robot."},
                      {LlmRole::user, "hi"},
                      {LlmRole::assistant, "hello"},
                      {LlmRole::user, "what is 2+2"}};
  request.options.temperature.reset();
  const Json documented{{"model", "llama3.2"},
                        {"messages",
                         {{{"role", "system"}, {"content", "You are a robot."}},
                          {{"role", "user"}, {"content", "hi"}},
                          {{"role", "assistant"}, {"content", "hello"}},
                          {{"role", "user"}, {"content", "what is 2+2"}}}},
                        {"stream", false}};
  {
    test::StubLlmServer stub({200, test::StubLlmServer::chat_body("Four.", "llama3.2"), 0ms});
    stub.start();
    HttpLlm llm({stub.base_url(), {}});
    auto r = llm.generate(request);
    check(r && r->text == "Four.", "single JSON reply parsed");
    const auto rec = stub.requests();
    check(rec.size() == 1, "one request per call");
    if (!rec.empty()) {
      check(rec[0].method == "POST" && rec[0].target == "/api/chat", "POST /api/chat");
      check(rec[0].content_type == "application/json", "JSON content type");
      check(Json::parse(rec[0].body, nullptr, false) == documented, "body equals the documented body");
    }
  }
  {
    const auto port = test::unused_port();
    test::StubLlmServer stub({200, test::StubLlmServer::chat_body("retried"), 0ms});
    int attempts = 0;
    HttpLlm llm({"http://127.0.0.1:" + std::to_string(port), [&](int n, std::string_view) {
                   ++attempts;
                   if (n == 1) stub.start(port);
                 }});
    auto r = llm.generate(request);
    check(r && r->text == "retried" && attempts == 2 && stub.request_count() == 1, "one retry after refusal");
  }
  {
    int attempts = 0;
    HttpLlm llm({"http://127.0.0.1:" + std::to_string(test::unused_port()),
                 [&](int, std::string_view) { ++attempts; }});
    check(!llm.generate(request) && attempts == 2, "refused twice stops at 2 attempts");
  }
  const std::vector<test::StubLlmServer::Reply> single_shot{
      {500, R"({"error":"boom"})", 0ms}, {200, "{not json", 0ms}, {200, test::StubLlmServer::chat_body("slow"), 1500ms}};
  for (const auto& reply : single_shot) {
    test::StubLlmServer stub(reply);
    stub.start();
    HttpLlm llm({stub.base_url(), {}});
    auto timed = request;
    timed.options.timeout = 300ms;
    auto r = llm.generate(timed);
    check(!r && stub.request_count() == 1, "no retry after HTTP " + std::to_string(reply.status) + " / delay " +
                                              std::to_string(reply.delay.count()) + " ms");
  }
  {
    // the live server end to end
    test::StubLlmServer stub({200, test::StubLlmServer::chat_body("live says hi"), 0ms});
    stub.start();
    GatewayConfig config;
    config.provider_mode = ProviderMode::live;
    config.llm_base_url = stub.base_url();
    Server server(make_providers(config), config);
    auto session = server.rest().create_session(Json{{"system_prompt", "Be brief."}});
    if (session) {
      auto robot = server.ws(ChannelKind::robot, session->id);
      robot->send(UserText{"hello there"});
      auto idx = robot->wait_for(of(MessageType::robot_reply), 5s);
      check(idx && std::get<RobotReply>(robot->at(*idx).envelope->payload).text == "live says hi", "live turn reply");
      const auto rec = stub.requests();
      const Json body = rec.empty() ? Json() : Json::parse(rec[0].body, nullptr, false);
      check(rec.size() == 1 && body.value("stream", true) == false && body["options"] == Json{{"temperature", 0.7}} &&
                body["messages"] == Json::parse(R"([{"role":"system","content":"Be brief."},{"role":"user","content":"hello there"}])"),
            "live turn body");
    } else {
      check(false, "live session: " + session.error().message);
    }
  }
  std::string detail = problems.empty() ? "documented body, stream:false, one retry on refusal, at most 2 requests"
                                        : "failed: " + problems.front();
  return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"wake_window_timing", wake_window_timing}, {"heartbeat_cadence", heartbeat_cadence},
      {"turn_latency", turn_latency},             {"envelope_round_trip", envelope_round_trip},
      {"prompt_assembly", prompt_assembly},       {"state_trajectory", state_trajectory},
      {"persistence", persistence},               {"config_race", config_race},
      {"degradation_matrix", degradation_matrix}, {"live_llm_contract", live_llm_contract},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failures = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.name)) continue;
    ++ran;
    const auto started = SteadyClock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failures += outcome.pass ? 0 : 1;
    std::cout << (outcome.pass ? "PASS " : "FAIL ") << c.name << ": " << outcome.detail << " ["
              << fmt(elapsed_ms(started) / 1000.0) << " s]" << std::endl;
  }
  if (ran == 0) {
    std::cerr << "no such criterion\n";
    return 2;
  }
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << " (" << ran << " criteria)"
            << std::endl;
  return failures == 0 ? 0 : 1;
}
