#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "srw/clock.hpp"
#include "srw/expected.hpp"
#include "srw/model.hpp"
#include "srw/providers.hpp"
#include "srw/registry.hpp"
#include "srw/store.hpp"

namespace srw {

/// One user input. Exactly one of text/audio; audio iff modality != text.
struct TurnRequest {
  std::string session_id;
  Modality modality = Modality::text;
  std::optional<std::string> text;
  std::optional<AudioClip> audio;
  SteadyTime received_at = SteadyClock::now();
};

Expected<void> validate_turn_request(const TurnRequest& request);

struct TurnLatency {
  std::optional<double> stt;
  double llm = 0.0;
  double tts = 0.0;
  double total = 0.0;  // request receipt to robot_reply emission
};

struct TurnResult {
  ChatMessage user_message;
  ChatMessage robot_message;
  std::optional<AudioClip> reply_audio;  // absent when degraded
  TurnLatency latency_ms;
  bool degraded = false;
};

enum class WakeWindowState { open, consumed, expired };

struct WakeWindow {
  std::string session_id;
  SteadyTime opened_at;
  SteadyTime deadline;
  WakeWindowState state = WakeWindowState::open;
};

enum class LatencyStage { stt, llm, tts };

/// Per-turn stage timings; each stage may be recorded once.
class LatencyRecorder {
 public:
  /// Recording a stage twice fails with "internal_invariant".
  Expected<void> record(LatencyStage stage, double elapsed_ms);
  std::optional<double> get(LatencyStage stage) const;
  LatencyBreakdown breakdown() const;

 private:
  std::optional<double> stt_, llm_, tts_;
};

/// LLM message list for one turn: optional system prompt, the last
/// `max_turns` complete user/robot turns in order, then the new input.
/// User messages without a reply are not part of any turn.
std::vector<LlmMessage> assemble_prompt(std::string_view system_prompt, std::span<const ChatMessage> history,
                                        std::string_view user_text, std::size_t max_turns = 20);

struct PipelineOptions {
  std::size_t history_turns = 20;
  std::chrono::milliseconds wake_window{5000};
  std::chrono::milliseconds playback_timeout{60000};
  LlmOptions llm;
};

/// Runs turns: one serialized executor per session, sessions in parallel.
/// State changes are broadcast as state_update envelopes through the
/// registry; replies as robot_reply.
class Pipeline {
 public:
  using TurnCallback = std::function<void(const Expected<TurnResult>&)>;
  using WakeCallback = std::function<void(const Expected<WakeWindow>&)>;
  using DoneCallback = std::function<void(const Expected<void>&)>;

  Pipeline(Store& store, SessionRegistry& registry, Providers providers, PipelineOptions options = {});
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  /// Queues a turn. The callback fires on the session worker once the reply
  /// is emitted or the turn failed. Error codes: mode_disabled,
  /// wake_window_closed, stt_failed, llm_failed, store_failed,
  /// session_closed, not_found, bad_request.
  void submit(TurnRequest request, TurnCallback on_done);
  Expected<TurnResult> run_turn(TurnRequest request);

  /// Opens the proactive listening window (idempotent while open).
  void wake(const std::string& session_id, SteadyTime now, WakeCallback on_done);
  Expected<WakeWindow> open_wake_window(const std::string& session_id, SteadyTime now = SteadyClock::now());

  /// Robot screen finished playing the last reply.
  void playback_done(const std::string& session_id, DoneCallback on_done = {});

  /// Aborts the in-flight turn (if any), drops queued work and resets the
  /// avatar to idle. Used after the session was closed.
  void abort_session(const std::string& session_id);

  AvatarState state(const std::string& session_id) const;

  /// Calls `fn` with the current state while holding the session's state
  /// lock; no state_update can be emitted in between.
  void with_state(const std::string& session_id, const std::function<void(const AvatarState&)>& fn);
  std::optional<WakeWindow> wake_window(const std::string& session_id) const;

  /// Stops all workers. Queued work fails with "shutdown".
  void shutdown();

  const PipelineOptions& options() const noexcept { return options_; }

 private:
  struct TurnEvent {
    TurnRequest request;
    TurnCallback on_done;
  };
  struct WakeEvent {
    SteadyTime now;
    WakeCallback on_done;
  };
  struct PlaybackEvent {
    DoneCallback on_done;
  };
  using Event = std::variant<TurnEvent, WakeEvent, PlaybackEvent>;

  struct Runtime {
    std::string session_id;
    mutable std::mutex mutex;
    std::condition_variable cv;
    std::deque<Event> queue;
    AvatarState state;
    std::optional<WakeWindow> window;
    std::optional<SteadyTime> playback_deadline;  // set while awaiting playback_done
    bool closed = false;
    bool stopping = false;
    bool running = false;
    std::thread worker;
  };

  std::shared_ptr<Runtime> runtime(const std::string& session_id);
  std::shared_ptr<Runtime> find_runtime(const std::string& session_id) const;
  bool enqueue(const std::shared_ptr<Runtime>& rt, Event event);
  void worker_loop(Runtime& rt);
  void handle(Runtime& rt, Event& event, std::unique_lock<std::mutex>& lock);
  Expected<TurnResult> execute_turn(Runtime& rt, const TurnRequest& request, std::unique_lock<std::mutex>& lock);
  Expected<WakeWindow> execute_wake(Runtime& rt, SteadyTime now);
  void apply(Runtime& rt, AvatarEvent event);
  void reset(Runtime& rt);
  void emit_state(const Runtime& rt);

  Store& store_;
  SessionRegistry& registry_;
  Providers providers_;
  PipelineOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Runtime>> runtimes_;
  bool shut_down_ = false;
};

}  // namespace srw
