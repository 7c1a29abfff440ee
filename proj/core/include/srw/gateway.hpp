#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "srw/expected.hpp"
#include "srw/pipeline.hpp"
#include "srw/protocol.hpp"
#include "srw/providers.hpp"
#include "srw/registry.hpp"
#include "srw/store.hpp"

namespace srw {

enum class ProviderMode { mock, live };

template <>
struct EnumNames<ProviderMode> {
  static constexpr std::array<std::string_view, 2> names{"mock", "live"};
};

struct GatewayConfig {
  std::string bind_host = "127.0.0.1";
  std::uint16_t bind_port = 8080;  // 0 picks a free port
  std::string llm_base_url = "http://127.0.0.1:11434";
  ProviderMode provider_mode = ProviderMode::mock;
  std::filesystem::path data_dir = "srw-data";
  std::chrono::milliseconds heartbeat{5000};
  std::size_t history_turns = 20;
  std::size_t outbound_queue_limit = 256;
  std::chrono::milliseconds playback_timeout{60000};
  std::chrono::milliseconds llm_timeout{30000};
  double llm_temperature = 0.7;
  std::string stt_command;  // live mode: external command, empty = mock
  std::string tts_command;
  int io_threads = 2;
};

/// heartbeat >= 1000 ms, history_turns >= 1, queue limit >= 1.
/// Errors use code "config_error".
Expected<void> validate_gateway_config(const GatewayConfig& config);

/// Reads SRW_BIND_ADDR, SRW_LLM_BASE_URL, SRW_PROVIDER_MODE, SRW_DATA_DIR,
/// SRW_HEARTBEAT_MS, SRW_HISTORY_TURNS, SRW_STT_COMMAND, SRW_TTS_COMMAND
/// on top of `base`.
Expected<GatewayConfig> gateway_config_from_env(GatewayConfig base,
                                                const std::function<const char*(const char*)>& getenv);

/// Mock mode: the deterministic providers. Live mode: the HTTP LLM client,
/// external-command STT/TTS where configured and mocks otherwise.
Providers make_providers(const GatewayConfig& config);

/// Bounded per-connection outbound queue. Stamps seq and ts at push time so
/// seq order equals send order. When full, the connection is marked
/// overflowed: one final "slow_consumer" error frame is queued past the
/// bound and every later push is refused.
class OutboundQueue {
 public:
  enum class Push { queued, overflow, refused };

  explicit OutboundQueue(std::size_t limit) : limit_(limit) {}

  Push push(const std::string& session_id, const Payload& payload);
  const std::string* front() const { return frames_.empty() ? nullptr : &frames_.front(); }
  void pop() { frames_.pop_front(); }
  std::size_t size() const noexcept { return frames_.size(); }
  bool overflowed() const noexcept { return overflowed_; }
  void refuse() noexcept { refused_ = true; }
  std::uint64_t next_seq() const noexcept { return seq_.sent(); }

 private:
  void stamp(const std::string& session_id, const Payload& payload);

  std::size_t limit_;
  std::deque<std::string> frames_;
  SeqCounter seq_;
  bool overflowed_ = false;
  bool refused_ = false;
};

/// The network face: REST for session CRUD, /ws/robot/{id} and
/// /ws/control/{id} for envelopes, heartbeats to control channels.
class Gateway {
 public:
  /// Errors: "bind_failed", "store_failed", "config_error".
  static Expected<std::unique_ptr<Gateway>> start(GatewayConfig config, Providers providers);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  std::uint16_t port() const;
  std::string base_url() const;

  /// Sends session_closed(reason) to every channel, closes sockets after
  /// flushing, stops workers. Sessions stay active in the store so clients
  /// can re-attach after a restart. Idempotent.
  void shutdown(const std::string& reason = "shutdown");

  SessionRegistry& registry();
  Pipeline& pipeline();
  Store& store();

  struct Impl;

 private:
  explicit Gateway(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

}  // namespace srw
