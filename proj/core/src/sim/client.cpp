#include "srw/sim/client.hpp"

#include <deque>
#include <future>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace srw::sim {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

Error connect_failed(const std::string& what) { return make_error("connect_failed", what); }

}  // namespace

Expected<Json> HttpResult::json() const {
  Json value = Json::parse(body, nullptr, false);
  if (value.is_discarded()) return make_error("malformed", "response is not JSON");
  return value;
}

// ---------------------------------------------------------------------------
// RestClient
// ---------------------------------------------------------------------------

Expected<HttpResult> RestClient::request(std::string_view method, const std::string& target,
                                         const std::optional<Json>& body) const {
  const auto verb = http::string_to_verb(beast::string_view(method.data(), method.size()));
  if (verb == http::verb::unknown) return make_error("bad_request", "unknown method");
  try {
    asio::io_context ioc;
    tcp::resolver resolver(ioc);
    beast::tcp_stream stream(ioc);
    stream.expires_after(std::chrono::seconds(30));
    stream.connect(resolver.resolve(base_.host, std::to_string(base_.port)));

    http::request<http::string_body> req{verb, base_.path + target, 11};
    req.set(http::field::host, base_.authority());
    req.keep_alive(false);
    if (body) {
      req.set(http::field::content_type, "application/json");
      req.body() = canonical_dump(*body);
    }
    req.prepare_payload();
    http::write(stream, req);

    beast::flat_buffer buffer;
    http::response_parser<http::string_body> parser;
    parser.body_limit(64 * 1024 * 1024);
    http::read(stream, buffer, parser);
    beast::error_code ignored;
    stream.socket().shutdown(tcp::socket::shutdown_both, ignored);
    auto res = parser.release();
    return HttpResult{static_cast<int>(res.result_int()), std::move(res.body())};
  } catch (const std::exception& e) {
    return connect_failed(base_.authority() + ": " + e.what());
  }
}

Expected<CommunicationSession> RestClient::create_session(const Json& config) const {
  auto res = request("POST", "/api/sessions", Json{{"config", config}});
  if (!res) return res.error();
  if (res->status != 201) return make_error("http_" + std::to_string(res->status), res->body);
  auto body = res->json();
  if (!body) return body.error();
  if (!body->contains("session")) return make_error("malformed", "missing session");
  return session_from_json((*body)["session"]);
}

Expected<HttpResult> RestClient::get_session(const std::string& id) const {
  return request("GET", "/api/sessions/" + id);
}

Expected<HttpResult> RestClient::patch_config(const std::string& id, const Json& patch,
                                              std::uint64_t expected_version) const {
  return request("PATCH", "/api/sessions/" + id + "/config",
                 Json{{"patch", patch}, {"expected_version", expected_version}});
}

Expected<HttpResult> RestClient::delete_session(const std::string& id) const {
  return request("DELETE", "/api/sessions/" + id);
}

Expected<std::string> RestClient::transcript(const std::string& id) const {
  auto res = request("GET", "/api/sessions/" + id + "/transcript");
  if (!res) return res.error();
  if (res->status != 200) return make_error("http_" + std::to_string(res->status), res->body);
  return std::move(res->body);
}

// ---------------------------------------------------------------------------
// WsClient
// ---------------------------------------------------------------------------

struct WsClient::Impl {
  asio::io_context ioc;
  websocket::stream<beast::tcp_stream> ws{ioc};
  beast::flat_buffer buffer;
  std::thread thread;

  // io-thread state
  struct Pending {
    std::string frame;
    std::promise<Expected<SteadyTime>> done;
  };
  std::deque<std::shared_ptr<Pending>> writes;
  bool writing = false;
  bool close_started = false;
  std::optional<std::chrono::milliseconds> playback_delay;

  std::mutex send_mutex;
  SeqCounter seq;

  mutable std::mutex mutex;
  std::condition_variable cv;
  std::vector<Received> inbox;
  SeqTracker tracker;
  std::uint64_t decode_failures = 0;
  bool closed = false;

  std::string session_id;
  ChannelKind channel = ChannelKind::robot;

  void do_read() {
    ws.async_read(buffer, [this](beast::error_code ec, std::size_t) { on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) {
      mark_closed();
      fail_writes();
      return;
    }
    Received r;
    r.at = SteadyClock::now();
    r.raw = beast::buffers_to_string(buffer.data());
    buffer.consume(buffer.size());
    auto env = decode(r.raw);
    bool reply = false;
    {
      std::lock_guard lock(mutex);
      if (env) {
        (void)tracker.observe(env->seq);
        reply = env->type() == MessageType::robot_reply;
        r.envelope = std::move(*env);
      } else {
        ++decode_failures;
      }
      inbox.push_back(std::move(r));
    }
    cv.notify_all();
    if (reply && channel == ChannelKind::robot && playback_delay) schedule_playback(*playback_delay);
    do_read();
  }

  void schedule_playback(std::chrono::milliseconds delay) {
    auto timer = std::make_shared<asio::steady_timer>(ioc, delay);
    timer->async_wait([this, timer](beast::error_code ec) {
      if (ec) return;
      // must not block the io thread: enqueue without waiting
      (void)enqueue_envelope(StateUpdate{AvatarState{Phase::idle, false}});
    });
  }

  std::future<Expected<SteadyTime>> enqueue_envelope(const Payload& payload) {
    std::lock_guard lock(send_mutex);
    Envelope env;
    env.session_id = session_id;
    env.seq = seq.next();
    env.ts = now_epoch_ms();
    env.payload = payload;
    auto frame = encode(env);
    if (!frame) {
      std::promise<Expected<SteadyTime>> p;
      p.set_value(frame.error());
      return p.get_future();
    }
    return enqueue_frame(std::move(*frame));
  }

  // Caller holds send_mutex when ordering matters.
  std::future<Expected<SteadyTime>> enqueue_frame(std::string frame) {
    auto pending = std::make_shared<Pending>();
    pending->frame = std::move(frame);
    auto future = pending->done.get_future();
    asio::post(ioc, [this, pending] {
      writes.push_back(pending);
      if (!writing) do_write();
    });
    return future;
  }

  void do_write() {
    if (writes.empty()) {
      writing = false;
      return;
    }
    if (is_closed()) return fail_writes();
    writing = true;
    auto pending = writes.front();
    ws.text(true);
    ws.async_write(asio::buffer(pending->frame), [this, pending](beast::error_code ec, std::size_t) {
      writes.pop_front();
      if (ec) {
        pending->done.set_value(make_error("send_failed", ec.message()));
      } else {
        pending->done.set_value(SteadyClock::now());
      }
      do_write();
    });
  }

  void fail_writes() {
    while (!writes.empty()) {
      writes.front()->done.set_value(make_error("send_failed", "connection closed"));
      writes.pop_front();
    }
    writing = false;
  }

  bool is_closed() const {
    std::lock_guard lock(mutex);
    return closed;
  }

  void mark_closed() {
    {
      std::lock_guard lock(mutex);
      closed = true;
    }
    cv.notify_all();
  }
};

WsClient::WsClient(std::unique_ptr<Impl> impl, ChannelKind channel, std::string session_id)
    : impl_(std::move(impl)), channel_(channel), session_id_(std::move(session_id)) {}

Expected<std::unique_ptr<WsClient>> WsClient::connect(const Url& server, ChannelKind channel,
                                                      const std::string& session_id) {
  auto impl = std::make_unique<Impl>();
  impl->session_id = session_id;
  impl->channel = channel;
  try {
    tcp::resolver resolver(impl->ioc);
    auto& lowest = beast::get_lowest_layer(impl->ws);
    lowest.expires_after(std::chrono::seconds(10));
    lowest.connect(resolver.resolve(server.host, std::to_string(server.port)));
    lowest.socket().set_option(tcp::no_delay(true));
    impl->ws.read_message_max(64 * 1024 * 1024);
    impl->ws.handshake(server.authority(),
                       server.path + "/ws/" + std::string(to_string(channel)) + "/" + session_id);
    lowest.expires_never();
  } catch (const std::exception& e) {
    return connect_failed(server.authority() + ": " + e.what());
  }
  auto* raw = impl.get();
  raw->do_read();
  raw->thread = std::thread([raw] { raw->ioc.run(); });
  return std::unique_ptr<WsClient>(new WsClient(std::move(impl), channel, session_id));
}

WsClient::~WsClient() { close(); }

Expected<std::pair<std::uint64_t, SteadyTime>> WsClient::send(const Payload& payload) {
  std::future<Expected<SteadyTime>> done;
  std::uint64_t seq = 0;
  {
    // hold the lock across numbering and queueing so seq order is send order
    std::lock_guard lock(impl_->send_mutex);
    Envelope env;
    env.session_id = session_id_;
    env.seq = seq = impl_->seq.next();
    env.ts = now_epoch_ms();
    env.payload = payload;
    auto frame = encode(env);
    if (!frame) return frame.error();
    done = impl_->enqueue_frame(std::move(*frame));
  }
  auto sent = done.get();
  if (!sent) return sent.error();
  return std::make_pair(seq, *sent);
}

Expected<SteadyTime> WsClient::send_raw(const std::string& frame) {
  std::future<Expected<SteadyTime>> done;
  {
    std::lock_guard lock(impl_->send_mutex);
    done = impl_->enqueue_frame(frame);
  }
  return done.get();
}

std::optional<std::size_t> WsClient::wait_for(const std::function<bool(const Received&)>& pred,
                                              std::chrono::milliseconds timeout, std::size_t from) {
  const auto deadline = SteadyClock::now() + timeout;
  std::unique_lock lock(impl_->mutex);
  std::size_t next = from;
  while (true) {
    for (; next < impl_->inbox.size(); ++next) {
      if (pred(impl_->inbox[next])) return next;
    }
    if (impl_->closed) return std::nullopt;
    if (impl_->cv.wait_until(lock, deadline) == std::cv_status::timeout) {
      for (; next < impl_->inbox.size(); ++next) {
        if (pred(impl_->inbox[next])) return next;
      }
      return std::nullopt;
    }
  }
}

bool WsClient::wait_closed(std::chrono::milliseconds timeout) {
  std::unique_lock lock(impl_->mutex);
  return impl_->cv.wait_for(lock, timeout, [&] { return impl_->closed; });
}

Received WsClient::at(std::size_t index) const {
  std::lock_guard lock(impl_->mutex);
  return impl_->inbox.at(index);
}

std::vector<Received> WsClient::snapshot() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->inbox;
}

std::size_t WsClient::size() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->inbox.size();
}

std::uint64_t WsClient::seq_violations() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->tracker.violations();
}

std::uint64_t WsClient::decode_failures() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->decode_failures;
}

bool WsClient::closed() const { return impl_->is_closed(); }

void WsClient::auto_playback(std::optional<std::chrono::milliseconds> delay) {
  std::promise<void> set;
  auto future = set.get_future();
  asio::post(impl_->ioc, [this, delay, &set] {
    impl_->playback_delay = delay;
    set.set_value();
  });
  if (impl_->thread.joinable() && !impl_->ioc.stopped()) {
    future.wait_for(std::chrono::seconds(5));
  }
}

void WsClient::close() {
  if (!impl_ || !impl_->thread.joinable()) return;
  asio::post(impl_->ioc, [raw = impl_.get()] {
    if (raw->close_started || raw->is_closed()) return;
    raw->close_started = true;
    raw->ws.async_close(websocket::close_code::normal, [raw](beast::error_code) {});
  });
  wait_closed(std::chrono::seconds(2));
  impl_->ioc.stop();
  impl_->thread.join();
  impl_->mark_closed();
}

}  // namespace srw::sim
