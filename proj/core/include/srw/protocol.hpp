#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "srw/expected.hpp"
#include "srw/json_codec.hpp"
#include "srw/model.hpp"

namespace srw {

inline constexpr int kProtocolVersion = 1;

enum class MessageType {
  user_text,
  user_audio,
  wake_detected,
  robot_reply,
  state_update,
  config_update,
  heartbeat,
  error,
  session_closed,
};

template <>
struct EnumNames<MessageType> {
  static constexpr std::array<std::string_view, 9> names{
      "user_text",     "user_audio", "wake_detected", "robot_reply",   "state_update",
      "config_update", "heartbeat",  "error",         "session_closed"};
};

struct UserText {
  std::string text;
  bool operator==(const UserText&) const = default;
};

struct UserAudio {
  AudioClip audio;
  Modality modality = Modality::voice_button;  // voice_button | voice_wake
  bool operator==(const UserAudio&) const = default;
};

struct WakeDetected {
  bool operator==(const WakeDetected&) const = default;
};

struct RobotReply {
  std::string in_reply_to;
  std::string text;
  std::optional<AudioClip> audio;      // absent on a degraded (TTS failed) reply
  LatencyBreakdown latency_ms;
  std::optional<std::string> warning;  // present iff degraded
  bool operator==(const RobotReply&) const = default;
};

/// Server -> clients: current avatar state. Robot -> server with
/// phase=idle: playback of the last reply finished.
struct StateUpdate {
  AvatarState state;
  bool operator==(const StateUpdate&) const = default;
};

/// Server -> clients: the config now in effect. Control -> server: a
/// full-config update request where `config_version` is the version the
/// edit was based on (expected version).
struct ConfigUpdate {
  RobotConfig config;
  std::uint64_t config_version = 1;
  bool operator==(const ConfigUpdate&) const = default;
};

struct Heartbeat {
  AvatarState robot_state;
  bool robot_connected = false;
  bool control_connected = false;
  std::uint64_t config_version = 1;
  bool operator==(const Heartbeat&) const = default;
};

struct ErrorReport {
  std::string code;
  std::string message;
  std::optional<std::uint64_t> in_reply_to;  // seq of the offending inbound envelope
  bool operator==(const ErrorReport&) const = default;
};

struct SessionClosed {
  std::string reason;
  bool operator==(const SessionClosed&) const = default;
};

/// Alternative index matches MessageType.
using Payload = std::variant<UserText, UserAudio, WakeDetected, RobotReply, StateUpdate, ConfigUpdate,
                             Heartbeat, ErrorReport, SessionClosed>;

struct Envelope {
  int v = kProtocolVersion;
  std::string session_id;
  std::uint64_t seq = 0;
  EpochMs ts = 0;
  Payload payload;

  MessageType type() const { return static_cast<MessageType>(payload.index()); }
  bool operator==(const Envelope&) const = default;
};

inline MessageType type_of(const Payload& payload) { return static_cast<MessageType>(payload.index()); }

/// Stable error codes produced by this module.
namespace protocol_errc {
inline constexpr std::string_view malformed = "malformed";
inline constexpr std::string_view unsupported_version = "unsupported_version";
inline constexpr std::string_view unknown_type = "unknown_type";
inline constexpr std::string_view schema_violation = "schema_violation";
inline constexpr std::string_view seq_violation = "seq_violation";
}  // namespace protocol_errc

Json to_json(const Envelope& envelope);

/// Canonical text frame. Fails with "schema_violation" naming the field.
Expected<std::string> encode(const Envelope& envelope);

/// Validates an arbitrary JSON envelope against the closed schemas and
/// returns its canonical encoding.
Expected<std::string> encode_document(const Json& document);

/// Tolerant of key order and whitespace, strict about schema.
Expected<Envelope> decode(std::string_view frame);
Expected<Envelope> decode_json(const Json& document);

/// Outbound per-connection sequence numbers: 0, 1, 2, ...
class SeqCounter {
 public:
  std::uint64_t next() noexcept { return next_++; }
  std::uint64_t sent() const noexcept { return next_; }

 private:
  std::uint64_t next_ = 0;
};

/// Receiver-side gap/repeat detection. After a violation the tracker
/// resynchronises on the observed value.
class SeqTracker {
 public:
  Expected<void> observe(std::uint64_t seq);
  std::uint64_t expected() const noexcept { return expected_; }
  std::uint64_t violations() const noexcept { return violations_; }

 private:
  std::uint64_t expected_ = 0;
  std::uint64_t violations_ = 0;
};

}  // namespace srw
