#include "srw/sim/scenario.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <thread>

#include "srw/audio.hpp"
#include "srw/sim/client.hpp"
#include "srw/sim/spectrum.hpp"

namespace srw::sim {

namespace {

constexpr double kDefaultStateToleranceMs = 100;
constexpr double kDefaultFrequencyToleranceHz = 5;
constexpr std::int64_t kDefaultReplyTimeoutMs = 5000;
constexpr std::int64_t kDefaultStateTimeoutMs = 10000;

bool is_input(StepAction a) { return a == StepAction::text || a == StepAction::voice_fixture; }

void check_args(const Step& step, bool input_seen, bool action_seen) {
  detail::FieldReader r(step.args, "args");
  switch (step.action) {
    case StepAction::text:
      r.string("text");
      break;
    case StepAction::voice_fixture: {
      const bool has_path = r.optional_string("path").has_value();
      const bool has_transcript = r.optional_string("transcript").has_value();
      if (has_path == has_transcript) r.fail("path", "exactly one of path or transcript is required");
      if (auto m = r.optional_string("modality")) {
        auto parsed = parse_enum<Modality>(*m);
        if (!parsed || *parsed == Modality::text) r.fail("modality", "must be voice_button or voice_wake");
      }
      break;
    }
    case StepAction::wake:
      break;
    case StepAction::wait:
      r.uint("ms");
      break;
    case StepAction::expect_reply:
      if (!input_seen) r.fail("action", "expect_reply needs an earlier text or voice_fixture step");
      r.optional_string("equals");
      r.optional_string("contains");
      r.optional_number("dominant_hz");
      r.optional_number("tolerance_hz");
      r.optional_uint("timeout_ms");
      break;
    case StepAction::expect_state: {
      if (!action_seen) r.fail("action", "expect_state needs an earlier action step");
      const auto phase = r.string("phase");
      if (!parse_enum<Phase>(phase)) r.fail("phase", "unknown phase \"" + phase + "\"");
      r.optional_number("after_ms");
      r.optional_number("tolerance_ms");
      r.optional_uint("timeout_ms");
      break;
    }
    case StepAction::update_config: {
      auto patch = config_patch_from_json(r.raw("patch"));
      if (!patch) r.fail("patch", patch.error().message);
      break;
    }
  }
  r.finish();
}

Expected<AudioClip> fixture_clip(const Scenario& scenario, const Json& args) {
  if (args.contains("path")) {
    const auto path = scenario.base_dir / args["path"].get<std::string>();
    std::ifstream in(path, std::ios::binary);
    if (!in) return make_error("bad_scenario", "cannot read fixture " + path.string());
    const Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return make_audio_clip(bytes);
  }
  // 300 ms of silence carrying the transcript for the mock recognizer
  const std::vector<std::int16_t> silence(4800, 0);
  const auto wav = write_wav_pcm16(silence, 16000, 1, args["transcript"].get<std::string>());
  return make_audio_clip(wav);
}

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

}  // namespace

Expected<Scenario> parse_scenario(std::string_view text, std::filesystem::path base_dir) {
  Scenario scenario;
  scenario.base_dir = std::move(base_dir);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  bool header = true;
  bool input_seen = false;
  bool action_seen = false;
  std::int64_t last_at = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto fail = [&](const std::string& msg) {
      return make_error("bad_scenario", "line " + std::to_string(number) + ": " + msg);
    };
    Json record = Json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object()) return fail("not a JSON object");
    try {
      detail::FieldReader r(record, "");
      if (header) {
        scenario.name = r.string("name");
        if (const auto* config = r.optional_raw("config")) {
          auto patch = config_patch_from_json(*config);
          if (!patch) return fail(patch.error().message);
          scenario.config = *config;
        }
        r.finish();
        header = false;
        continue;
      }
      Step step;
      step.at_ms = r.integer("at_ms");
      step.action = r.enumeration<StepAction>("action");
      if (const auto* args = r.optional_raw("args")) step.args = *args;
      r.finish();
      if (step.at_ms < last_at) return fail("at_ms must be non-decreasing");
      if (!step.args.is_object()) return fail("args must be an object");
      check_args(step, input_seen, action_seen);
      last_at = step.at_ms;
      input_seen = input_seen || is_input(step.action);
      action_seen = action_seen || (step.action != StepAction::expect_reply && step.action != StepAction::expect_state &&
                                    step.action != StepAction::wait);
      scenario.steps.push_back(std::move(step));
    } catch (const detail::SchemaError& e) {
      return fail(detail::to_error(e).message);
    }
  }
  if (header) return make_error("bad_scenario", "missing header line");
  return scenario;
}

Expected<Scenario> load_scenario(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) return make_error("bad_scenario", "cannot read " + file.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str(), file.parent_path());
}

bool ScenarioReport::passed() const {
  if (seq_violations != 0) return false;
  for (const auto& e : expectations) {
    if (!e.passed) return false;
  }
  return true;
}

Json ScenarioReport::to_json() const {
  Json list = Json::array();
  for (const auto& e : expectations) {
    list.push_back(Json{{"step", e.step}, {"action", e.action}, {"passed", e.passed}, {"detail", e.detail}});
  }
  return Json{{"name", name},
              {"session_id", session_id},
              {"passed", passed()},
              {"expectations", std::move(list)},
              {"turn_latency_ms", sim::to_json(summarize(turn_latency_ms))},
              {"envelopes_received", envelopes_received},
              {"seq_violations", seq_violations}};
}

std::string ScenarioReport::summary() const {
  std::size_t ok = 0;
  for (const auto& e : expectations) ok += e.passed ? 1 : 0;
  std::ostringstream out;
  out << "scenario " << name << " (session " << session_id << "): " << (passed() ? "PASS" : "FAIL") << ", " << ok
      << "/" << expectations.size() << " expectations\n";
  for (const auto& e : expectations) {
    out << "  [" << (e.passed ? "ok" : "FAIL") << "] step " << e.step << " " << e.action;
    if (!e.detail.empty()) out << ": " << e.detail;
    out << "\n";
  }
  if (seq_violations != 0) out << "  seq violations: " << seq_violations << "\n";
  if (!turn_latency_ms.empty()) {
    const auto s = summarize(turn_latency_ms);
    out << "  turn latency ms: p50 " << s.p50 << "  p95 " << s.p95 << "  max " << s.max << "\n";
  }
  return out.str();
}

Expected<ScenarioReport> run_scenario(const Url& server, const Scenario& scenario) {
  RestClient rest(server);
  auto session = rest.create_session(scenario.config);
  if (!session) {
    if (session.error().code == "connect_failed") return session.error();
    return make_error("connect_failed", "session setup failed: " + session.error().message);
  }
  auto control = WsClient::connect(server, ChannelKind::control, session->id);
  if (!control) return control.error();
  auto robot = WsClient::connect(server, ChannelKind::robot, session->id);
  if (!robot) return robot.error();
  auto& bot = **robot;
  bot.auto_playback(std::chrono::milliseconds{0});
  if (!bot.wait_for([](const Received& r) { return r.is(MessageType::state_update); }, std::chrono::seconds(5))) {
    return make_error("connect_failed", "robot channel never received its initial state");
  }

  ScenarioReport report;
  report.name = scenario.name;
  report.session_id = session->id;
  std::uint64_t config_version = session->config_version;

  std::size_t reply_cursor = bot.size();
  std::size_t ref_index = bot.size();
  SteadyTime ref_time = SteadyClock::now();
  std::deque<SteadyTime> pending_inputs;

  const auto start = SteadyClock::now();
  for (std::size_t i = 0; i < scenario.steps.size(); ++i) {
    const auto& step = scenario.steps[i];
    const auto& args = step.args;
    std::this_thread::sleep_until(start + std::chrono::milliseconds(step.at_ms));
    ExpectationResult result{i, std::string(to_string(step.action)), true, {}};
    bool record = false;

    switch (step.action) {
      case StepAction::text:
      case StepAction::voice_fixture: {
        Payload payload;
        if (step.action == StepAction::text) {
          payload = UserText{args["text"].get<std::string>()};
        } else {
          auto clip = fixture_clip(scenario, args);
          if (!clip) {
            record = true;
            result.passed = false;
            result.detail = clip.error().message;
            break;
          }
          const auto modality = parse_enum<Modality>(args.value("modality", "voice_button")).value();
          payload = UserAudio{*clip, modality};
        }
        ref_index = bot.size();
        ref_time = SteadyClock::now();
        pending_inputs.push_back(ref_time);
        if (auto sent = bot.send(payload); !sent) return make_error("connect_failed", sent.error().message);
        break;
      }
      case StepAction::wake:
        ref_index = bot.size();
        ref_time = SteadyClock::now();
        if (auto sent = bot.send(WakeDetected{}); !sent) return make_error("connect_failed", sent.error().message);
        break;
      case StepAction::wait:
        std::this_thread::sleep_for(std::chrono::milliseconds(args["ms"].get<std::int64_t>()));
        break;
      case StepAction::update_config: {
        ref_index = bot.size();
        ref_time = SteadyClock::now();
        auto res = rest.patch_config(session->id, args["patch"], config_version);
        if (!res) return res.error();
        if (res->status != 200) {
          record = true;
          result.passed = false;
          result.detail = "PATCH returned " + std::to_string(res->status) + ": " + res->body;
        } else if (auto body = res->json(); body && body->contains("config_version")) {
          config_version = (*body)["config_version"].get<std::uint64_t>();
        }
        break;
      }
      case StepAction::expect_reply: {
        record = true;
        const auto timeout = std::chrono::milliseconds(args.value("timeout_ms", kDefaultReplyTimeoutMs));
        auto idx = bot.wait_for(
            [](const Received& r) { return r.is(MessageType::robot_reply) || r.is(MessageType::error); }, timeout,
            reply_cursor);
        if (!idx) {
          result.passed = false;
          result.detail = "no robot_reply within " + std::to_string(timeout.count()) + " ms";
          break;
        }
        reply_cursor = *idx + 1;
        const auto frame = bot.at(*idx);
        if (!pending_inputs.empty()) {
          report.turn_latency_ms.push_back(elapsed_ms(pending_inputs.front(), frame.at));
          pending_inputs.pop_front();
        }
        if (frame.is(MessageType::error)) {
          const auto& e = std::get<ErrorReport>(frame.envelope->payload);
          result.passed = false;
          result.detail = "expected robot_reply, got error " + e.code + ": " + e.message;
          break;
        }
        const auto& reply = std::get<RobotReply>(frame.envelope->payload);
        std::vector<std::string> problems;
        if (args.contains("equals") && reply.text != args["equals"].get<std::string>()) {
          problems.push_back("text: expected " + quoted(args["equals"]) + ", got " + quoted(reply.text));
        }
        if (args.contains("contains") && reply.text.find(args["contains"].get<std::string>()) == std::string::npos) {
          problems.push_back("text: expected to contain " + quoted(args["contains"]) + ", got " + quoted(reply.text));
        }
        if (args.contains("dominant_hz")) {
          const double want = args["dominant_hz"].get<double>();
          const double tol = args.value("tolerance_hz", kDefaultFrequencyToleranceHz);
          if (!reply.audio) {
            problems.push_back("audio: reply carries no audio");
          } else if (auto hz = dominant_frequency_hz(*reply.audio); !hz) {
            problems.push_back("audio: " + hz.error().message);
          } else if (std::abs(*hz - want) > tol) {
            problems.push_back("audio: expected " + std::to_string(want) + " Hz, got " + std::to_string(*hz) + " Hz");
          }
        }
        for (const auto& p : problems) {
          if (!result.detail.empty()) result.detail += "; ";
          result.detail += p;
        }
        result.passed = problems.empty();
        break;
      }
      case StepAction::expect_state: {
        record = true;
        const auto phase = *parse_enum<Phase>(args["phase"].get<std::string>());
        const auto timeout = std::chrono::milliseconds(args.value("timeout_ms", kDefaultStateTimeoutMs));
        const auto waited = std::chrono::duration_cast<std::chrono::milliseconds>(SteadyClock::now() - ref_time);
        auto idx = bot.wait_for(
            [phase](const Received& r) {
              return r.is(MessageType::state_update) && std::get<StateUpdate>(r.envelope->payload).state.phase == phase;
            },
            std::max(std::chrono::milliseconds{0}, timeout - waited), ref_index);
        if (!idx) {
          result.passed = false;
          result.detail = "state " + std::string(to_string(phase)) + " not observed";
          break;
        }
        const double observed = elapsed_ms(ref_time, bot.at(*idx).at);
        if (args.contains("after_ms")) {
          const double want = args["after_ms"].get<double>();
          const double tol = args.value("tolerance_ms", kDefaultStateToleranceMs);
          result.passed = std::abs(observed - want) <= tol;
          result.detail = "observed after " + std::to_string(observed) + " ms (expected " + std::to_string(want) +
                          " +- " + std::to_string(tol) + ")";
        }
        break;
      }
    }
    if (record) report.expectations.push_back(std::move(result));
  }

  // let trailing envelopes (e.g. the final idle) arrive before counting
  std::this_thread::sleep_for(std::chrono::milliseconds(50));
  report.envelopes_received = bot.size() + (*control)->size();
  report.seq_violations = bot.seq_violations() + (*control)->seq_violations();
  bot.close();
  (*control)->close();
  return report;
}

}  // namespace srw::sim
