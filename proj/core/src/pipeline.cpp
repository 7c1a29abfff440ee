#include "srw/pipeline.hpp"

#include <algorithm>
#include <future>

namespace srw {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Error err(std::string_view code, std::string message) { return make_error(std::string(code), std::move(message)); }

bool modality_enabled(const InteractionModes& modes, Modality modality) {
  switch (modality) {
    case Modality::text:
      return modes.text_enabled;
    case Modality::voice_button:
      return modes.push_to_talk_enabled;
    case Modality::voice_wake:
      return modes.proactive_enabled;
  }
  return false;
}

}  // namespace

Expected<void> validate_turn_request(const TurnRequest& request) {
  if (request.modality == Modality::text) {
    if (!request.text || request.audio) return err("bad_request", "text turn needs text and no audio");
  } else if (!request.audio || request.text) {
    return err("bad_request", "voice turn needs audio and no text");
  }
  return {};
}

// ---------------------------------------------------------------------------

Expected<void> LatencyRecorder::record(LatencyStage stage, double elapsed) {
  auto& slot = stage == LatencyStage::stt ? stt_ : stage == LatencyStage::llm ? llm_ : tts_;
  if (slot) return err("internal_invariant", "latency stage recorded twice");
  slot = elapsed;
  return {};
}

std::optional<double> LatencyRecorder::get(LatencyStage stage) const {
  return stage == LatencyStage::stt ? stt_ : stage == LatencyStage::llm ? llm_ : tts_;
}

LatencyBreakdown LatencyRecorder::breakdown() const {
  return LatencyBreakdown{stt_, llm_.value_or(0.0), tts_.value_or(0.0)};
}

std::vector<LlmMessage> assemble_prompt(std::string_view system_prompt, std::span<const ChatMessage> history,
                                        std::string_view user_text, std::size_t max_turns) {
  std::vector<std::pair<const ChatMessage*, const ChatMessage*>> turns;
  const ChatMessage* pending_user = nullptr;
  for (const auto& m : history) {
    if (m.author == Author::user) {
      pending_user = &m;
    } else if (pending_user != nullptr && m.in_reply_to == pending_user->id) {
      turns.emplace_back(pending_user, &m);
      pending_user = nullptr;
    }
  }
  const std::size_t first = turns.size() > max_turns ? turns.size() - max_turns : 0;

  std::vector<LlmMessage> out;
  out.reserve(2 + 2 * (turns.size() - first));
  if (!system_prompt.empty()) out.push_back({LlmRole::system, std::string(system_prompt)});
  for (std::size_t i = first; i < turns.size(); ++i) {
    out.push_back({LlmRole::user, turns[i].first->text});
    out.push_back({LlmRole::assistant, turns[i].second->text});
  }
  out.push_back({LlmRole::user, std::string(user_text)});
  return out;
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(Store& store, SessionRegistry& registry, Providers providers, PipelineOptions options)
    : store_(store), registry_(registry), providers_(std::move(providers)), options_(std::move(options)) {}

Pipeline::~Pipeline() { shutdown(); }

std::shared_ptr<Pipeline::Runtime> Pipeline::find_runtime(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = runtimes_.find(session_id);
  return it == runtimes_.end() ? nullptr : it->second;
}

std::shared_ptr<Pipeline::Runtime> Pipeline::runtime(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  if (shut_down_) return nullptr;
  auto& slot = runtimes_[session_id];
  if (!slot) {
    slot = std::make_shared<Runtime>();
    slot->session_id = session_id;
    slot->running = true;
    slot->worker = std::thread([this, rt = slot.get()] { worker_loop(*rt); });
  }
  return slot;
}

bool Pipeline::enqueue(const std::shared_ptr<Runtime>& rt, Event event) {
  if (!rt) return false;
  {
    std::lock_guard lock(rt->mutex);
    if (rt->closed || rt->stopping || !rt->running) return false;
    rt->queue.push_back(std::move(event));
  }
  rt->cv.notify_one();
  return true;
}

void Pipeline::submit(TurnRequest request, TurnCallback on_done) {
  if (auto ok = validate_turn_request(request); !ok) {
    on_done(ok.error());
    return;
  }
  const auto session = registry_.get(request.session_id);
  if (!session) {
    on_done(session.error());
    return;
  }
  const auto id = request.session_id;
  auto rt = session->status == SessionStatus::active ? runtime(id) : nullptr;
  if (!enqueue(rt, TurnEvent{std::move(request), on_done})) on_done(err("session_closed", "session is closed"));
}

Expected<TurnResult> Pipeline::run_turn(TurnRequest request) {
  std::promise<Expected<TurnResult>> promise;
  auto future = promise.get_future();
  submit(std::move(request), [&promise](const Expected<TurnResult>& r) { promise.set_value(r); });
  return future.get();
}

void Pipeline::wake(const std::string& session_id, SteadyTime now, WakeCallback on_done) {
  const auto session = registry_.get(session_id);
  if (!session) {
    on_done(session.error());
    return;
  }
  auto rt = session->status == SessionStatus::active ? runtime(session_id) : nullptr;
  if (!enqueue(rt, WakeEvent{now, on_done})) on_done(err("session_closed", "session is closed"));
}

Expected<WakeWindow> Pipeline::open_wake_window(const std::string& session_id, SteadyTime now) {
  std::promise<Expected<WakeWindow>> promise;
  auto future = promise.get_future();
  wake(session_id, now, [&promise](const Expected<WakeWindow>& r) { promise.set_value(r); });
  return future.get();
}

void Pipeline::playback_done(const std::string& session_id, DoneCallback on_done) {
  if (!on_done) on_done = [](const Expected<void>&) {};
  auto rt = find_runtime(session_id);
  if (!enqueue(rt, PlaybackEvent{on_done})) on_done(err("illegal_transition", "nothing is playing"));
}

void Pipeline::abort_session(const std::string& session_id) {
  auto rt = find_runtime(session_id);
  if (!rt) return;
  std::deque<Event> dropped;
  {
    std::lock_guard lock(rt->mutex);
    rt->closed = true;
    dropped.swap(rt->queue);
    if (rt->window && rt->window->state == WakeWindowState::open) rt->window->state = WakeWindowState::expired;
    rt->playback_deadline.reset();
    if (rt->state.phase != Phase::idle) reset(*rt);
  }
  rt->cv.notify_all();
  const Error closed = err("session_closed", "session is closed");
  for (auto& e : dropped) {
    std::visit(Overloaded{[&](TurnEvent& t) { t.on_done(closed); }, [&](WakeEvent& w) { w.on_done(closed); },
                          [&](PlaybackEvent& p) { p.on_done(closed); }},
               e);
  }
}

AvatarState Pipeline::state(const std::string& session_id) const {
  auto rt = find_runtime(session_id);
  if (!rt) return AvatarState{};
  std::lock_guard lock(rt->mutex);
  return rt->state;
}

void Pipeline::with_state(const std::string& session_id, const std::function<void(const AvatarState&)>& fn) {
  auto rt = runtime(session_id);
  if (!rt) {
    fn(AvatarState{});
    return;
  }
  std::lock_guard lock(rt->mutex);
  fn(rt->state);
}

std::optional<WakeWindow> Pipeline::wake_window(const std::string& session_id) const {
  auto rt = find_runtime(session_id);
  if (!rt) return std::nullopt;
  std::lock_guard lock(rt->mutex);
  return rt->window;
}

void Pipeline::shutdown() {
  std::map<std::string, std::shared_ptr<Runtime>> runtimes;
  {
    std::lock_guard lock(mutex_);
    shut_down_ = true;
    runtimes = runtimes_;
  }
  for (auto& [id, rt] : runtimes) {
    std::deque<Event> dropped;
    {
      std::lock_guard lock(rt->mutex);
      rt->stopping = true;
      dropped.swap(rt->queue);
    }
    rt->cv.notify_all();
    if (rt->worker.joinable()) rt->worker.join();
    const Error stopped = err("shutdown", "server is shutting down");
    for (auto& e : dropped) {
      std::visit(Overloaded{[&](TurnEvent& t) { t.on_done(stopped); }, [&](WakeEvent& w) { w.on_done(stopped); },
                            [&](PlaybackEvent& p) { p.on_done(stopped); }},
                 e);
    }
  }
}

// ---------------------------------------------------------------------------
// Session worker
// ---------------------------------------------------------------------------

void Pipeline::emit_state(const Runtime& rt) {
  registry_.send(rt.session_id, Audience::all, StateUpdate{rt.state});
}

void Pipeline::apply(Runtime& rt, AvatarEvent event) {
  auto next = transition(rt.state, event);
  if (!next) {
    // Illegal transition means a bookkeeping bug; fall back to idle.
    reset(rt);
    return;
  }
  rt.state = *next;
  emit_state(rt);
}

void Pipeline::reset(Runtime& rt) {
  rt.state = *transition(rt.state, AvatarEvent::error_reset);
  rt.playback_deadline.reset();
  if (rt.window && rt.window->state == WakeWindowState::open) rt.window->state = WakeWindowState::expired;
  emit_state(rt);
}

void Pipeline::worker_loop(Runtime& rt) {
  std::unique_lock lock(rt.mutex);
  while (!rt.stopping) {
    const auto now = SteadyClock::now();
    if (rt.window && rt.window->state == WakeWindowState::open && now >= rt.window->deadline) {
      rt.window->state = WakeWindowState::expired;
      apply(rt, AvatarEvent::timeout);
      continue;
    }
    if (rt.playback_deadline && now >= *rt.playback_deadline) {
      rt.playback_deadline.reset();
      apply(rt, AvatarEvent::playback_done);
      continue;
    }

    std::optional<Event> next;
    if (rt.playback_deadline) {
      // While speaking only a playback confirmation can make progress.
      const auto it = std::find_if(rt.queue.begin(), rt.queue.end(),
                                   [](const Event& e) { return std::holds_alternative<PlaybackEvent>(e); });
      if (it != rt.queue.end()) {
        next = std::move(*it);
        rt.queue.erase(it);
      }
    } else if (!rt.queue.empty()) {
      next = std::move(rt.queue.front());
      rt.queue.pop_front();
    }

    if (!next) {
      if (rt.closed) break;
      std::optional<SteadyTime> wake_at;
      if (rt.window && rt.window->state == WakeWindowState::open) wake_at = rt.window->deadline;
      if (rt.playback_deadline && (!wake_at || *rt.playback_deadline < *wake_at)) wake_at = rt.playback_deadline;
      if (wake_at) {
        rt.cv.wait_until(lock, *wake_at);
      } else {
        rt.cv.wait(lock);
      }
      continue;
    }
    handle(rt, *next, lock);
  }
  rt.running = false;
}

void Pipeline::handle(Runtime& rt, Event& event, std::unique_lock<std::mutex>& lock) {
  std::visit(Overloaded{
                 [&](TurnEvent& t) {
                   auto result = execute_turn(rt, t.request, lock);
                   lock.unlock();
                   t.on_done(result);
                   lock.lock();
                 },
                 [&](WakeEvent& w) {
                   auto result = execute_wake(rt, w.now);
                   lock.unlock();
                   w.on_done(result);
                   lock.lock();
                 },
                 [&](PlaybackEvent& p) {
                   Expected<void> result;
                   if (rt.playback_deadline) {
                     rt.playback_deadline.reset();
                     apply(rt, AvatarEvent::playback_done);
                   } else {
                     result = err("illegal_transition", "playback_done while not speaking");
                   }
                   lock.unlock();
                   p.on_done(result);
                   lock.lock();
                 },
             },
             event);
}

Expected<WakeWindow> Pipeline::execute_wake(Runtime& rt, SteadyTime now) {
  if (rt.closed) return err("session_closed", "session is closed");
  const auto session = registry_.get(rt.session_id);
  if (!session) return session.error();
  if (session->status == SessionStatus::closed) return err("session_closed", "session is closed");
  if (!session->config.modes.proactive_enabled) return err("mode_disabled", "proactive mode is disabled");
  if (rt.window && rt.window->state == WakeWindowState::open) return *rt.window;
  if (rt.state.phase != Phase::idle) {
    return err("illegal_transition", std::string("wake while ") + std::string(to_string(rt.state.phase)));
  }
  rt.window = WakeWindow{rt.session_id, now, now + options_.wake_window, WakeWindowState::open};
  apply(rt, AvatarEvent::wake_or_input);
  return *rt.window;
}

Expected<TurnResult> Pipeline::execute_turn(Runtime& rt, const TurnRequest& request,
                                            std::unique_lock<std::mutex>& lock) {
  const auto closed_error = [] { return err("session_closed", "session is closed"); };
  if (rt.closed) return closed_error();
  const auto session = registry_.get(rt.session_id);
  if (!session) return session.error();
  if (session->status == SessionStatus::closed) return closed_error();

  const RobotConfig config = session->config;
  const std::uint64_t config_version = session->config_version;
  if (!modality_enabled(config.modes, request.modality)) {
    return err("mode_disabled", std::string(to_string(request.modality)) + " input is disabled");
  }
  const bool window_open = rt.window && rt.window->state == WakeWindowState::open;
  if (request.modality == Modality::voice_wake && !window_open) {
    return err("wake_window_closed", "no open wake window");
  }
  if (window_open) rt.window->state = WakeWindowState::consumed;
  if (rt.state.phase == Phase::idle) apply(rt, AvatarEvent::wake_or_input);

  lock.unlock();
  LatencyRecorder latency;
  std::string user_text;
  std::optional<Error> failure;

  if (request.modality != Modality::text) {
    const auto started = SteadyClock::now();
    auto transcript = providers_.stt->transcribe(*request.audio, config.language);
    if (auto recorded = latency.record(LatencyStage::stt, elapsed_ms(started)); !recorded) {
      failure = recorded.error();
    } else if (transcript) {
      user_text = std::move(transcript->text);
    } else if (transcript.error().code != provider_errc::stt_empty) {
      failure = err("stt_failed", transcript.error().code + ": " + transcript.error().message);
    }
  } else {
    user_text = *request.text;
  }

  std::optional<ChatMessage> stored_user;
  std::vector<ChatMessage> history;
  if (!failure) {
    auto past = store_.fetch_history(rt.session_id);
    if (!past) {
      failure = err("store_failed", past.error().message);
    } else {
      history = std::move(*past);
      ChatMessage user;
      user.session_id = rt.session_id;
      user.author = Author::user;
      user.modality = request.modality;
      user.text = user_text;
      user.created_at = now_epoch_ms();
      auto appended = store_.append_chat_message(std::move(user));
      if (appended) {
        stored_user = std::move(*appended);
      } else {
        failure = err("store_failed", appended.error().message);
      }
    }
  }

  lock.lock();
  if (rt.closed) return closed_error();
  if (failure) {
    reset(rt);
    return *failure;
  }
  apply(rt, AvatarEvent::pipeline_started);
  lock.unlock();

  LlmRequest llm_request;
  llm_request.model = config.llm_model;
  llm_request.messages = assemble_prompt(config.system_prompt, history, user_text, options_.history_turns);
  llm_request.options = options_.llm;
  const auto llm_started = SteadyClock::now();
  auto reply = providers_.llm->generate(llm_request);
  auto llm_recorded = latency.record(LatencyStage::llm, elapsed_ms(llm_started));

  lock.lock();
  if (rt.closed) return closed_error();
  if (!llm_recorded) {
    reset(rt);
    return llm_recorded.error();
  }
  if (!reply) {
    reset(rt);
    return err("llm_failed", reply.error().code + ": " + reply.error().message);
  }
  apply(rt, AvatarEvent::reply_ready);
  lock.unlock();

  const auto tts_started = SteadyClock::now();
  auto audio = providers_.tts->synthesize(reply->text, config.language, config.voice_gender);
  if (auto recorded = latency.record(LatencyStage::tts, elapsed_ms(tts_started)); !recorded) {
    lock.lock();
    reset(rt);
    return recorded.error();
  }

  ChatMessage robot;
  robot.session_id = rt.session_id;
  robot.author = Author::robot;
  robot.text = reply->text;
  robot.in_reply_to = stored_user->id;
  robot.llm_model_used = config.llm_model;
  robot.config_version_used = config_version;
  robot.latency_ms = latency.breakdown();
  if (!audio) robot.warning = std::string(provider_errc::tts_failed);
  robot.created_at = now_epoch_ms();
  auto stored_robot = store_.append_chat_message(std::move(robot));

  lock.lock();
  if (rt.closed) return closed_error();
  if (!stored_robot) {
    reset(rt);
    return err("store_failed", stored_robot.error().message);
  }

  RobotReply payload;
  payload.in_reply_to = stored_user->id;
  payload.text = stored_robot->text;
  if (audio) payload.audio = *audio;
  payload.latency_ms = *stored_robot->latency_ms;
  payload.warning = stored_robot->warning;
  registry_.send(rt.session_id, Audience::all, payload);

  TurnResult result;
  result.user_message = std::move(*stored_user);
  result.robot_message = std::move(*stored_robot);
  if (audio) result.reply_audio = std::move(*audio);
  result.degraded = !audio;
  result.latency_ms = TurnLatency{latency.get(LatencyStage::stt), *latency.get(LatencyStage::llm),
                                  *latency.get(LatencyStage::tts), elapsed_ms(request.received_at)};
  rt.playback_deadline = SteadyClock::now() + options_.playback_timeout;
  return result;
}

}  // namespace srw
