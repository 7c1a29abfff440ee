#include "srw/gateway.hpp"

#include <atomic>
#include <charconv>
#include <condition_variable>
#include <map>
#include <mutex>
#include <thread>

#include <boost/asio/dispatch.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "srw/json_codec.hpp"
#include "srw/url.hpp"

namespace srw {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kMaxWsMessage = 16 * 1024 * 1024;
constexpr std::size_t kMaxHttpBody = 1024 * 1024;

Error config_error(std::string message) { return make_error("config_error", std::move(message)); }

template <class T>
std::optional<T> parse_number(std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

Expected<void> validate_gateway_config(const GatewayConfig& config) {
  if (config.heartbeat < std::chrono::milliseconds{1000}) return config_error("heartbeat_ms must be >= 1000");
  if (config.history_turns < 1) return config_error("history_turns must be >= 1");
  if (config.outbound_queue_limit < 1) return config_error("outbound queue limit must be >= 1");
  if (!(config.llm_temperature >= 0.0 && config.llm_temperature <= 2.0)) {
    return config_error("llm_temperature must be in [0, 2]");
  }
  if (config.io_threads < 1) return config_error("io_threads must be >= 1");
  if (config.provider_mode == ProviderMode::live) {
    if (auto url = parse_url(config.llm_base_url); !url) {
      return config_error("llm_base_url: " + url.error().message);
    }
  }
  return {};
}

Expected<GatewayConfig> gateway_config_from_env(GatewayConfig base,
                                                const std::function<const char*(const char*)>& getenv) {
  const auto get = [&](const char* name) -> std::optional<std::string> {
    const char* v = getenv(name);
    if (v == nullptr) return std::nullopt;
    return std::string(v);
  };
  if (auto v = get("SRW_BIND_ADDR")) {
    auto hp = parse_host_port(*v);
    if (!hp) return config_error("SRW_BIND_ADDR: " + hp.error().message);
    base.bind_host = hp->first;
    base.bind_port = hp->second;
  }
  if (auto v = get("SRW_LLM_BASE_URL")) base.llm_base_url = *v;
  if (auto v = get("SRW_PROVIDER_MODE")) {
    auto mode = parse_enum<ProviderMode>(*v);
    if (!mode) return config_error("SRW_PROVIDER_MODE must be mock or live");
    base.provider_mode = *mode;
  }
  if (auto v = get("SRW_DATA_DIR")) {
    if (v->empty()) return config_error("SRW_DATA_DIR is empty");
    base.data_dir = *v;
  }
  if (auto v = get("SRW_HEARTBEAT_MS")) {
    auto ms = parse_number<std::int64_t>(*v);
    if (!ms) return config_error("SRW_HEARTBEAT_MS is not an integer");
    base.heartbeat = std::chrono::milliseconds{*ms};
  }
  if (auto v = get("SRW_HISTORY_TURNS")) {
    auto n = parse_number<std::size_t>(*v);
    if (!n) return config_error("SRW_HISTORY_TURNS is not an integer");
    base.history_turns = *n;
  }
  if (auto v = get("SRW_LLM_TEMPERATURE")) {
    auto t = parse_number<double>(*v);
    if (!t) return config_error("SRW_LLM_TEMPERATURE is not a number");
    base.llm_temperature = *t;
  }
  if (auto v = get("SRW_STT_COMMAND")) base.stt_command = *v;
  if (auto v = get("SRW_TTS_COMMAND")) base.tts_command = *v;
  if (auto ok = validate_gateway_config(base); !ok) return ok.error();
  return base;
}

Providers make_providers(const GatewayConfig& config) {
  if (config.provider_mode == ProviderMode::mock) return mock_providers();
  Providers p = mock_providers();
  p.llm = std::make_shared<HttpLlm>(HttpLlm::Options{config.llm_base_url, {}});
  if (!config.stt_command.empty()) p.stt = std::make_shared<CommandStt>(ExternalCommand::parse(config.stt_command));
  if (!config.tts_command.empty()) p.tts = std::make_shared<CommandTts>(ExternalCommand::parse(config.tts_command));
  return p;
}

// ---------------------------------------------------------------------------
// OutboundQueue
// ---------------------------------------------------------------------------

void OutboundQueue::stamp(const std::string& session_id, const Payload& payload) {
  Envelope env;
  env.session_id = session_id;
  env.seq = seq_.next();
  env.ts = now_epoch_ms();
  env.payload = payload;
  auto frame = encode(env);
  // Server payloads are built from validated domain values; encode cannot
  // fail short of a bug, in which case the frame turns into an error report.
  if (!frame) {
    env.payload = ErrorReport{"internal_error", frame.error().message, std::nullopt};
    frame = encode(env);
  }
  frames_.push_back(std::move(*frame));
}

OutboundQueue::Push OutboundQueue::push(const std::string& session_id, const Payload& payload) {
  if (refused_ || overflowed_) return Push::refused;
  if (frames_.size() >= limit_) {
    overflowed_ = true;
    stamp(session_id, ErrorReport{"slow_consumer", "outbound queue overflow", std::nullopt});
    return Push::overflow;
  }
  stamp(session_id, payload);
  return Push::queued;
}

// ---------------------------------------------------------------------------
// Gateway internals
// ---------------------------------------------------------------------------

class WsConnection;

struct Gateway::Impl {
  GatewayConfig config;
  std::unique_ptr<Store> store;
  std::unique_ptr<SessionRegistry> registry;
  std::unique_ptr<Pipeline> pipeline;

  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::vector<std::thread> io_threads;
  std::uint16_t port = 0;
  std::atomic<std::uint64_t> next_connection_id{1};

  std::mutex conns_mutex;
  std::condition_variable conns_cv;
  std::map<std::uint64_t, std::weak_ptr<WsConnection>> conns;

  std::mutex hb_mutex;
  std::condition_variable hb_cv;
  std::map<std::string, SteadyTime> hb_due;
  bool hb_stop = false;
  std::thread hb_thread;

  std::mutex shutdown_mutex;
  bool shut_down = false;

  void do_accept();
  void heartbeat_loop();
  void track_heartbeat(const std::string& session_id);
  /// To every control channel, or only to connection `only`.
  void send_heartbeat(const std::string& session_id, std::optional<std::uint64_t> only = std::nullopt);
  void connection_closed(const std::string& session_id, std::uint64_t connection_id);
};

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

Response json_response(const Request& req, http::status status, const Json& body) {
  Response res{status, req.version()};
  res.set(http::field::content_type, "application/json");
  res.keep_alive(req.keep_alive());
  res.body() = canonical_dump(body);
  res.prepare_payload();
  return res;
}

Json error_body(const std::string& code, const std::string& message) {
  return Json{{"error", Json{{"code", code}, {"message", message}}}};
}

Response error_response(const Request& req, http::status status, const Error& e) {
  return json_response(req, status, error_body(e.code, e.message));
}

std::string_view target_of(const Request& req) { return {req.target().data(), req.target().size()}; }

std::vector<std::string_view> split_path(std::string_view target) {
  if (auto q = target.find('?'); q != std::string_view::npos) target = target.substr(0, q);
  std::vector<std::string_view> parts;
  while (!target.empty()) {
    if (target.front() == '/') {
      target.remove_prefix(1);
      continue;
    }
    const auto slash = target.find('/');
    parts.push_back(target.substr(0, slash));
    if (slash == std::string_view::npos) break;
    target.remove_prefix(slash);
  }
  return parts;
}

Expected<Json> parse_body(const Request& req) {
  if (req.body().empty()) return Json::object();
  Json body = Json::parse(req.body(), nullptr, false);
  if (body.is_discarded()) return make_error("malformed", "request body is not JSON");
  if (!body.is_object()) return make_error("malformed", "request body must be an object");
  return body;
}

http::status status_for(const std::string& code) {
  if (code == "not_found") return http::status::not_found;
  if (code == "version_conflict") return http::status::conflict;
  if (code == "session_closed") return http::status::gone;
  if (code == "invalid_config") return http::status::unprocessable_entity;
  if (code == "schema_violation" || code == "malformed") return http::status::bad_request;
  return http::status::internal_server_error;
}

Response handle_rest(Gateway::Impl& gw, const Request& req) {
  const auto parts = split_path(target_of(req));
  const auto method = req.method();

  if (parts.size() == 1 && parts[0] == "healthz" && method == http::verb::get) {
    return json_response(req, http::status::ok,
                         Json{{"status", "ok"}, {"sessions", gw.registry->active_count()}});
  }
  if (parts.empty() || parts[0] != "api" || parts.size() < 2 || parts[1] != "sessions") {
    return error_response(req, http::status::not_found, make_error("not_found", "no such endpoint"));
  }

  if (parts.size() == 2) {
    if (method != http::verb::post) {
      return error_response(req, http::status::method_not_allowed, make_error("method_not_allowed", "use POST"));
    }
    auto body = parse_body(req);
    if (!body) return error_response(req, http::status::bad_request, body.error());
    RobotConfig config;
    for (const auto& [key, value] : body->items()) {
      if (key != "config") {
        return error_response(req, http::status::bad_request,
                              make_error("schema_violation", key + ": unknown field"));
      }
      auto patch = config_patch_from_json(value);
      if (!patch) return error_response(req, http::status::bad_request, patch.error());
      config = apply_patch(config, *patch);
    }
    if (auto violations = validate_config(config); !violations.empty()) {
      Json list = Json::array();
      for (const auto& v : violations) list.push_back(to_json(v));
      Json err = error_body("invalid_config", "configuration rejected");
      err["error"]["violations"] = std::move(list);
      return json_response(req, http::status::unprocessable_entity, err);
    }
    auto session = gw.registry->create_session(config);
    if (!session) return error_response(req, status_for(session.error().code), session.error());
    return json_response(req, http::status::created, Json{{"session", to_json(*session)}});
  }

  const std::string id(parts[2]);

  if (parts.size() == 3) {
    if (method == http::verb::get) {
      auto session = gw.registry->get(id);
      if (!session) return error_response(req, status_for(session.error().code), session.error());
      return json_response(req, http::status::ok, Json{{"session", to_json(*session)}});
    }
    if (method == http::verb::delete_) {
      auto session = gw.registry->close_session(id, "closed_by_operator");
      if (!session) return error_response(req, status_for(session.error().code), session.error());
      gw.pipeline->abort_session(id);
      return json_response(req, http::status::ok, Json{{"session", to_json(*session)}});
    }
    return error_response(req, http::status::method_not_allowed, make_error("method_not_allowed", "use GET or DELETE"));
  }

  if (parts.size() == 4 && parts[3] == "config") {
    if (method != http::verb::patch) {
      return error_response(req, http::status::method_not_allowed, make_error("method_not_allowed", "use PATCH"));
    }
    auto body = parse_body(req);
    if (!body) return error_response(req, http::status::bad_request, body.error());
    RobotConfigPatch patch;
    std::optional<std::uint64_t> expected;
    try {
      detail::FieldReader r(*body, "");
      auto parsed = config_patch_from_json(r.raw("patch"));
      if (!parsed) return error_response(req, http::status::bad_request, parsed.error());
      patch = *parsed;
      expected = r.uint("expected_version");
      r.finish();
    } catch (const detail::SchemaError& e) {
      return error_response(req, http::status::bad_request, detail::to_error(e));
    }
    auto result = gw.registry->update_config(id, patch, *expected);
    if (!result) {
      const auto& e = result.error();
      Json err = error_body(e.error.code, e.error.message);
      if (e.error.code == "version_conflict") err["error"]["current_version"] = e.current_version;
      if (!e.violations.empty()) {
        Json list = Json::array();
        for (const auto& v : e.violations) list.push_back(to_json(v));
        err["error"]["violations"] = std::move(list);
      }
      return json_response(req, status_for(e.error.code), err);
    }
    return json_response(req, http::status::ok,
                         Json{{"config", to_json(result->config)}, {"config_version", result->config_version}});
  }

  if (parts.size() == 4 && parts[3] == "transcript") {
    if (method != http::verb::get) {
      return error_response(req, http::status::method_not_allowed, make_error("method_not_allowed", "use GET"));
    }
    auto text = gw.store->export_transcript(id);
    if (!text) return error_response(req, status_for(text.error().code), text.error());
    Response res{http::status::ok, req.version()};
    res.set(http::field::content_type, "application/x-ndjson");
    res.keep_alive(req.keep_alive());
    res.body() = std::move(*text);
    res.prepare_payload();
    return res;
  }

  return error_response(req, http::status::not_found, make_error("not_found", "no such endpoint"));
}

/// Which inbound envelope types each channel may send.
bool authorized(ChannelKind channel, const Envelope& env) {
  switch (env.type()) {
    case MessageType::user_text:
    case MessageType::user_audio:
    case MessageType::wake_detected:
      return channel == ChannelKind::robot;
    case MessageType::state_update:
      // only "playback finished", expressed as a return to idle
      return channel == ChannelKind::robot && std::get<StateUpdate>(env.payload).state.phase == Phase::idle;
    case MessageType::config_update:
    case MessageType::session_closed:
      return channel == ChannelKind::control;
    default:
      return false;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// WebSocket connection
// ---------------------------------------------------------------------------

class WsConnection final : public Connection, public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(Gateway::Impl& gw, tcp::socket&& socket, ChannelKind kind, std::string session_id)
      : gw_(gw),
        ws_(std::move(socket)),
        kind_(kind),
        session_id_(std::move(session_id)),
        id_(gw.next_connection_id++),
        queue_(gw.config.outbound_queue_limit) {}

  void start(Request req) {
    {
      std::lock_guard lock(gw_.conns_mutex);
      gw_.conns[id_] = weak_from_this();
    }
    beast::get_lowest_layer(ws_).expires_never();
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.read_message_max(kMaxWsMessage);
    ws_.async_accept(req, beast::bind_front_handler(&WsConnection::on_accept, shared_from_this()));
  }

  std::uint64_t connection_id() const override { return id_; }

  bool deliver(const std::string& session_id, const Payload& payload) override {
    bool kick = false;
    OutboundQueue::Push result;
    {
      std::lock_guard lock(mutex_);
      if (closed_) return false;
      result = queue_.push(session_id, payload);
      if (result == OutboundQueue::Push::refused) return false;
      if (result == OutboundQueue::Push::overflow) close_requested_ = true;
      if (!writing_) {
        writing_ = true;
        kick = true;
      }
    }
    if (kick) asio::post(ws_.get_executor(), beast::bind_front_handler(&WsConnection::do_write, shared_from_this()));
    return result == OutboundQueue::Push::queued;
  }

  void close_after_flush(std::string_view) override {
    bool kick = false;
    {
      std::lock_guard lock(mutex_);
      if (closed_) return;
      close_requested_ = true;
      queue_.refuse();
      if (!writing_) {
        writing_ = true;
        kick = true;
      }
    }
    if (kick) asio::post(ws_.get_executor(), beast::bind_front_handler(&WsConnection::do_write, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return finish();
    auto attached = gw_.registry->attach(session_id_, kind_, shared_from_this());
    if (!attached) {
      deliver(session_id_, ErrorReport{attached.error().code, attached.error().message, std::nullopt});
      close_after_flush(attached.error().code);
      return do_read();
    }
    attached_ = true;
    gw_.pipeline->with_state(session_id_, [&](const AvatarState& s) { deliver(session_id_, StateUpdate{s}); });
    if (kind_ == ChannelKind::control) {
      // status right away instead of after the first full period
      gw_.send_heartbeat(session_id_, id_);
      gw_.track_heartbeat(session_id_);
    }
    do_read();
  }

  void do_read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return finish();
    const auto received = SteadyClock::now();
    std::string frame = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    if (attached_) handle_frame(frame, received);
    do_read();
  }

  void send_error(const std::string& code, const std::string& message, std::optional<std::uint64_t> in_reply_to) {
    deliver(session_id_, ErrorReport{code, message, in_reply_to});
  }

  void handle_frame(const std::string& frame, SteadyTime received) {
    auto env = decode(frame);
    if (!env) return send_error(env.error().code, env.error().message, std::nullopt);
    const auto seq = env->seq;
    if (auto ok = inbound_.observe(seq); !ok) send_error(ok.error().code, ok.error().message, seq);
    if (env->session_id != session_id_) {
      return send_error("session_mismatch", "envelope addressed to another session", seq);
    }
    if (!authorized(kind_, *env)) {
      return send_error("not_authorized",
                        std::string(to_string(env->type())) + " not allowed on " + std::string(to_string(kind_)) +
                            " channel",
                        seq);
    }

    auto self = shared_from_this();
    const auto report = [self, seq](const Error& e) { self->send_error(e.code, e.message, seq); };

    switch (env->type()) {
      case MessageType::user_text:
      case MessageType::user_audio: {
        TurnRequest request;
        request.session_id = session_id_;
        request.received_at = received;
        if (auto* t = std::get_if<UserText>(&env->payload)) {
          request.modality = Modality::text;
          request.text = std::move(t->text);
        } else {
          auto& a = std::get<UserAudio>(env->payload);
          request.modality = a.modality;
          request.audio = std::move(a.audio);
        }
        gw_.pipeline->submit(std::move(request), [report](const Expected<TurnResult>& r) {
          if (!r) report(r.error());
        });
        break;
      }
      case MessageType::wake_detected:
        gw_.pipeline->wake(session_id_, received, [report](const Expected<WakeWindow>& r) {
          if (!r) report(r.error());
        });
        break;
      case MessageType::state_update:
        gw_.pipeline->playback_done(session_id_, [report](const Expected<void>& r) {
          if (!r) report(r.error());
        });
        break;
      case MessageType::config_update: {
        const auto& update = std::get<ConfigUpdate>(env->payload);
        auto result = gw_.registry->update_config(session_id_, RobotConfigPatch::replace_all(update.config),
                                                  update.config_version);
        if (!result) {
          auto message = result.error().error.message;
          if (result.error().error.code == "version_conflict") {
            message += " (current_version " + std::to_string(result.error().current_version) + ")";
          }
          send_error(result.error().error.code, message, seq);
        }
        break;
      }
      case MessageType::session_closed: {
        const auto& reason = std::get<SessionClosed>(env->payload).reason;
        auto closed = gw_.registry->close_session(session_id_, reason);
        if (!closed) return send_error(closed.error().code, closed.error().message, seq);
        gw_.pipeline->abort_session(session_id_);
        break;
      }
      default:
        break;
    }
  }

  void do_write() {
    std::unique_lock lock(mutex_);
    if (closed_) {
      writing_ = false;
      return;
    }
    if (const auto* front = queue_.front()) {
      current_ = *front;
      queue_.pop();
      lock.unlock();
      ws_.text(true);
      ws_.async_write(asio::buffer(current_), beast::bind_front_handler(&WsConnection::on_write, shared_from_this()));
      return;
    }
    writing_ = false;
    if (close_requested_ && !closing_) {
      closing_ = true;
      lock.unlock();
      ws_.async_close(websocket::close_code::normal,
                      beast::bind_front_handler(&WsConnection::on_close, shared_from_this()));
    }
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) return finish();
    do_write();
  }

  void on_close(beast::error_code) { finish(); }

  void finish() {
    {
      std::lock_guard lock(mutex_);
      if (closed_) return;
      closed_ = true;
    }
    if (attached_) gw_.registry->detach(session_id_, id_);
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).socket().shutdown(tcp::socket::shutdown_both, ignored);
    beast::get_lowest_layer(ws_).close();
    gw_.connection_closed(session_id_, id_);
  }

  Gateway::Impl& gw_;
  websocket::stream<beast::tcp_stream> ws_;
  ChannelKind kind_;
  std::string session_id_;
  std::uint64_t id_;
  beast::flat_buffer buffer_;
  SeqTracker inbound_;
  bool attached_ = false;  // strand-confined

  std::mutex mutex_;
  OutboundQueue queue_;
  std::string current_;
  bool writing_ = false;
  bool close_requested_ = false;
  bool closing_ = false;
  bool closed_ = false;
};

// ---------------------------------------------------------------------------
// HTTP session
// ---------------------------------------------------------------------------

namespace {

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(Gateway::Impl& gw, tcp::socket&& socket) : gw_(gw), stream_(std::move(socket)) {}

  void run() {
    asio::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    parser_.emplace();
    parser_->body_limit(kMaxHttpBody);
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, *parser_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return close();
    Request req = parser_->release();

    if (websocket::is_upgrade(req)) {
      const auto parts = split_path(target_of(req));
      std::optional<ChannelKind> kind;
      if (parts.size() == 3 && parts[0] == "ws") kind = parse_enum<ChannelKind>(parts[1]);
      if (!kind) {
        return write(error_response(req, http::status::not_found, make_error("not_found", "no such endpoint")));
      }
      auto conn = std::make_shared<WsConnection>(gw_, stream_.release_socket(), *kind, std::string(parts[2]));
      conn->start(std::move(req));
      return;
    }

    Response res;
    try {
      res = handle_rest(gw_, req);
    } catch (const std::exception& e) {
      res = error_response(req, http::status::internal_server_error, make_error("internal_error", e.what()));
    }
    write(std::move(res));
  }

  void write(Response res) {
    response_ = std::make_shared<Response>(std::move(res));
    http::async_write(stream_, *response_, beast::bind_front_handler(&HttpSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    if (ec) return close();
    if (!response_->keep_alive()) return close();
    response_.reset();
    do_read();
  }

  void close() {
    beast::error_code ignored;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
  }

  Gateway::Impl& gw_;
  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  std::optional<http::request_parser<http::string_body>> parser_;
  std::shared_ptr<Response> response_;
};

}  // namespace

void Gateway::Impl::do_accept() {
  acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec == asio::error::operation_aborted || !acceptor.is_open()) return;
    } else {
      // small envelopes; don't let Nagle hold them back
      beast::error_code ignored;
      socket.set_option(tcp::no_delay(true), ignored);
      std::make_shared<HttpSession>(*this, std::move(socket))->run();
    }
    do_accept();
  });
}

void Gateway::Impl::connection_closed(const std::string&, std::uint64_t connection_id) {
  {
    std::lock_guard lock(conns_mutex);
    conns.erase(connection_id);
  }
  conns_cv.notify_all();
}

// ---------------------------------------------------------------------------
// Heartbeats
// ---------------------------------------------------------------------------

void Gateway::Impl::track_heartbeat(const std::string& session_id) {
  {
    std::lock_guard lock(hb_mutex);
    if (hb_stop || hb_due.count(session_id) != 0) return;
    hb_due[session_id] = SteadyClock::now() + config.heartbeat;
  }
  hb_cv.notify_all();
}

void Gateway::Impl::send_heartbeat(const std::string& session_id, std::optional<std::uint64_t> only) {
  pipeline->with_state(session_id, [&](const AvatarState& state) {
    const auto build = [&](const CommunicationSession& s) -> Payload {
      return Heartbeat{state, s.robot_connected, s.control_connected, s.config_version};
    };
    if (only) {
      registry->send_built_to(session_id, *only, build);
    } else {
      registry->send_built(session_id, Audience::control, build);
    }
  });
}

void Gateway::Impl::heartbeat_loop() {
  std::unique_lock lock(hb_mutex);
  while (!hb_stop) {
    if (hb_due.empty()) {
      hb_cv.wait(lock);
      continue;
    }
    auto earliest = SteadyTime::max();
    for (const auto& [id, due] : hb_due) earliest = std::min(earliest, due);
    if (SteadyClock::now() < earliest) {
      hb_cv.wait_until(lock, earliest);
      continue;
    }
    const auto now = SteadyClock::now();
    std::vector<std::string> ready;
    for (auto& [id, due] : hb_due) {
      if (due > now) continue;
      ready.push_back(id);
      due += config.heartbeat;
      if (due <= now) due = now + config.heartbeat;  // fell behind; don't burst
    }
    lock.unlock();
    std::vector<std::string> idle;
    for (const auto& id : ready) {
      if (registry->control_count(id) == 0) {
        idle.push_back(id);
        continue;
      }
      send_heartbeat(id);
    }
    lock.lock();
    for (const auto& id : idle) {
      // re-check under the lock: a control channel may have attached meanwhile
      if (registry->control_count(id) == 0) hb_due.erase(id);
    }
  }
}

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

Gateway::Gateway(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

Gateway::~Gateway() { shutdown(); }

Expected<std::unique_ptr<Gateway>> Gateway::start(GatewayConfig config, Providers providers) {
  if (auto ok = validate_gateway_config(config); !ok) return ok.error();
  auto impl = std::make_unique<Impl>();
  impl->config = config;

  auto store = Store::open(config.data_dir);
  if (!store) return make_error("store_failed", store.error().message);
  impl->store = std::move(*store);
  impl->registry = std::make_unique<SessionRegistry>(*impl->store);

  PipelineOptions options;
  options.history_turns = config.history_turns;
  options.playback_timeout = config.playback_timeout;
  options.llm.timeout = config.llm_timeout;
  options.llm.temperature = config.llm_temperature;
  impl->pipeline = std::make_unique<Pipeline>(*impl->store, *impl->registry, std::move(providers), options);

  beast::error_code ec;
  const auto address = asio::ip::make_address(config.bind_host, ec);
  if (ec) return make_error("bind_failed", "bad bind address " + config.bind_host);
  const tcp::endpoint endpoint{address, config.bind_port};
  impl->acceptor.open(endpoint.protocol(), ec);
  if (!ec) impl->acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) impl->acceptor.bind(endpoint, ec);
  if (!ec) impl->acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    impl->pipeline->shutdown();
    return make_error("bind_failed", config.bind_host + ":" + std::to_string(config.bind_port) + ": " + ec.message());
  }
  impl->port = impl->acceptor.local_endpoint().port();

  impl->do_accept();
  auto* raw = impl.get();
  for (int i = 0; i < config.io_threads; ++i) raw->io_threads.emplace_back([raw] { raw->ioc.run(); });
  raw->hb_thread = std::thread([raw] { raw->heartbeat_loop(); });
  return std::unique_ptr<Gateway>(new Gateway(std::move(impl)));
}

std::uint16_t Gateway::port() const { return impl_->port; }

std::string Gateway::base_url() const {
  return "http://" + impl_->config.bind_host + ":" + std::to_string(impl_->port);
}

SessionRegistry& Gateway::registry() { return *impl_->registry; }
Pipeline& Gateway::pipeline() { return *impl_->pipeline; }
Store& Gateway::store() { return *impl_->store; }

void Gateway::shutdown(const std::string& reason) {
  if (!impl_) return;
  auto& gw = *impl_;
  {
    std::lock_guard lock(gw.shutdown_mutex);
    if (gw.shut_down) return;
    gw.shut_down = true;
  }
  asio::post(gw.ioc, [&gw] {
    beast::error_code ignored;
    gw.acceptor.close(ignored);
  });
  {
    std::lock_guard lock(gw.hb_mutex);
    gw.hb_stop = true;
  }
  gw.hb_cv.notify_all();
  if (gw.hb_thread.joinable()) gw.hb_thread.join();

  gw.registry->disconnect_all(SessionClosed{reason});
  gw.pipeline->shutdown();
  {
    std::unique_lock lock(gw.conns_mutex);
    gw.conns_cv.wait_for(lock, std::chrono::seconds(3), [&] { return gw.conns.empty(); });
  }
  gw.ioc.stop();
  for (auto& t : gw.io_threads) {
    if (t.joinable()) t.join();
  }
}

}  // namespace srw
