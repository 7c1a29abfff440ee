#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "srw/clock.hpp"
#include "srw/expected.hpp"
#include "srw/json_codec.hpp"
#include "srw/protocol.hpp"
#include "srw/registry.hpp"
#include "srw/url.hpp"

namespace srw::sim {

struct HttpResult {
  int status = 0;
  std::string body;

  Expected<Json> json() const;
};

/// Blocking REST client, one connection per request. Transport failures
/// use code "connect_failed".
class RestClient {
 public:
  explicit RestClient(Url base) : base_(std::move(base)) {}

  Expected<HttpResult> request(std::string_view method, const std::string& target,
                               const std::optional<Json>& body = std::nullopt) const;

  /// POST /api/sessions with a (partial) config. Non-201 responses fail
  /// with code "http_<status>".
  Expected<CommunicationSession> create_session(const Json& config = Json::object()) const;
  Expected<HttpResult> get_session(const std::string& id) const;
  Expected<HttpResult> patch_config(const std::string& id, const Json& patch, std::uint64_t expected_version) const;
  Expected<HttpResult> delete_session(const std::string& id) const;
  Expected<std::string> transcript(const std::string& id) const;

  const Url& base() const noexcept { return base_; }

 private:
  Url base_;
};

/// One inbound frame with its local receive time.
struct Received {
  std::optional<Envelope> envelope;  // empty when the frame did not decode
  std::string raw;
  SteadyTime at;

  bool is(MessageType type) const { return envelope && envelope->type() == type; }
};

/// Scripted WebSocket client for one channel. Sends are stamped with a
/// gapless outbound seq; inbound frames are recorded in arrival order and
/// their seq is checked.
class WsClient {
 public:
  static Expected<std::unique_ptr<WsClient>> connect(const Url& server, ChannelKind channel,
                                                     const std::string& session_id);
  ~WsClient();
  WsClient(const WsClient&) = delete;
  WsClient& operator=(const WsClient&) = delete;

  /// Returns the seq used and the local send time once the frame is written.
  Expected<std::pair<std::uint64_t, SteadyTime>> send(const Payload& payload);
  /// Writes `frame` verbatim, bypassing the encoder and the seq counter.
  Expected<SteadyTime> send_raw(const std::string& frame);

  /// First recorded frame at index >= `from` satisfying `pred`.
  std::optional<std::size_t> wait_for(const std::function<bool(const Received&)>& pred,
                                      std::chrono::milliseconds timeout, std::size_t from = 0);
  bool wait_closed(std::chrono::milliseconds timeout);

  Received at(std::size_t index) const;
  std::vector<Received> snapshot() const;
  std::size_t size() const;
  std::uint64_t seq_violations() const;
  std::uint64_t decode_failures() const;
  bool closed() const;

  /// Robot role: answer every robot_reply with playback_done after `delay`.
  void auto_playback(std::optional<std::chrono::milliseconds> delay);

  void close();

  const std::string& session_id() const noexcept { return session_id_; }
  ChannelKind channel() const noexcept { return channel_; }

  struct Impl;

 private:
  WsClient(std::unique_ptr<Impl> impl, ChannelKind channel, std::string session_id);

  std::unique_ptr<Impl> impl_;
  ChannelKind channel_;
  std::string session_id_;
};

}  // namespace srw::sim
