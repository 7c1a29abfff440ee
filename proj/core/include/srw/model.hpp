#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "srw/clock.hpp"
#include "srw/expected.hpp"

namespace srw {

// ---------------------------------------------------------------------------
// Enumerations and their canonical wire names
// ---------------------------------------------------------------------------

enum class Phase { idle, listening, thinking, speaking };

enum class AvatarEvent {
  wake_or_input,
  pipeline_started,
  reply_ready,
  playback_done,
  timeout,
  error_reset,
};

enum class Author { user, robot };

enum class Modality { text, voice_button, voice_wake };

enum class VoiceGender { female, male, neutral };

enum class AvatarId { robot_blue, robot_orange, humanoid_gray, abstract_orb };

enum class SessionStatus { active, closed };

template <class E>
struct EnumNames;

template <>
struct EnumNames<Phase> {
  static constexpr std::array<std::string_view, 4> names{"idle", "listening", "thinking", "speaking"};
};
template <>
struct EnumNames<AvatarEvent> {
  static constexpr std::array<std::string_view, 6> names{
      "wake_or_input", "pipeline_started", "reply_ready", "playback_done", "timeout", "error_reset"};
};
template <>
struct EnumNames<Author> {
  static constexpr std::array<std::string_view, 2> names{"user", "robot"};
};
template <>
struct EnumNames<Modality> {
  static constexpr std::array<std::string_view, 3> names{"text", "voice_button", "voice_wake"};
};
template <>
struct EnumNames<VoiceGender> {
  static constexpr std::array<std::string_view, 3> names{"female", "male", "neutral"};
};
template <>
struct EnumNames<AvatarId> {
  static constexpr std::array<std::string_view, 4> names{
      "robot-blue", "robot-orange", "humanoid-gray", "abstract-orb"};
};
template <>
struct EnumNames<SessionStatus> {
  static constexpr std::array<std::string_view, 2> names{"active", "closed"};
};

template <class E>
constexpr std::string_view to_string(E value) {
  return EnumNames<E>::names[static_cast<std::size_t>(value)];
}

template <class E>
constexpr std::optional<E> parse_enum(std::string_view text) {
  const auto& names = EnumNames<E>::names;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == text) return static_cast<E>(i);
  }
  return std::nullopt;
}

template <class E>
constexpr std::size_t enum_count() {
  return EnumNames<E>::names.size();
}

// ---------------------------------------------------------------------------
// Robot configuration
// ---------------------------------------------------------------------------

inline constexpr std::size_t kMaxSystemPromptChars = 8000;

struct InteractionModes {
  bool text_enabled = true;
  bool push_to_talk_enabled = true;
  bool proactive_enabled = true;

  bool operator==(const InteractionModes&) const = default;
};

/// The wizard-editable robot character.
struct RobotConfig {
  AvatarId avatar_id = AvatarId::robot_blue;
  std::string language = "en-US";
  InteractionModes modes;
  std::string llm_model = "llama3.2";
  std::string system_prompt;
  VoiceGender voice_gender = VoiceGender::neutral;

  bool operator==(const RobotConfig&) const = default;
};

struct ModesPatch {
  std::optional<bool> text_enabled;
  std::optional<bool> push_to_talk_enabled;
  std::optional<bool> proactive_enabled;
};

/// Partial RobotConfig; absent fields keep their current value.
struct RobotConfigPatch {
  std::optional<AvatarId> avatar_id;
  std::optional<std::string> language;
  std::optional<ModesPatch> modes;
  std::optional<std::string> llm_model;
  std::optional<std::string> system_prompt;
  std::optional<VoiceGender> voice_gender;

  /// Patch that replaces every field of a config.
  static RobotConfigPatch replace_all(const RobotConfig& config);
};

RobotConfig apply_patch(RobotConfig base, const RobotConfigPatch& patch);

struct ConfigViolation {
  std::string field;
  std::string message;

  bool operator==(const ConfigViolation&) const = default;
};

/// Every violated RobotConfig rule; empty means the config is valid.
std::vector<ConfigViolation> validate_config(const RobotConfig& config);

/// Number of Unicode scalar values in a UTF-8 string, or nullopt when the
/// bytes are not well-formed UTF-8.
std::optional<std::size_t> utf8_length(std::string_view text);

// ---------------------------------------------------------------------------
// Avatar state machine
// ---------------------------------------------------------------------------

struct AvatarState {
  Phase phase = Phase::idle;
  bool blinking = false;

  bool operator==(const AvatarState&) const = default;
};

struct TransitionRejection {
  Phase from;
  AvatarEvent event;

  bool operator==(const TransitionRejection&) const = default;
};

/// Legal-transition table for the avatar phase. `blinking` passes through.
Expected<AvatarState, TransitionRejection> transition(AvatarState state, AvatarEvent event);

// ---------------------------------------------------------------------------
// Sessions, messages, audio
// ---------------------------------------------------------------------------

struct CommunicationSession {
  std::string id;
  EpochMs created_at = 0;
  RobotConfig config;
  std::uint64_t config_version = 1;
  SessionStatus status = SessionStatus::active;
  bool robot_connected = false;
  bool control_connected = false;

  bool operator==(const CommunicationSession&) const = default;
};

/// Stage latencies in (fractional) milliseconds.
struct LatencyBreakdown {
  std::optional<double> stt;
  double llm = 0.0;
  double tts = 0.0;

  bool operator==(const LatencyBreakdown&) const = default;
};

struct ChatMessage {
  std::string id;
  std::string session_id;
  std::uint64_t turn_index = 0;
  Author author = Author::user;
  std::optional<Modality> modality;              // user messages only
  std::string text;
  std::optional<std::string> in_reply_to;        // robot messages only
  std::optional<std::string> llm_model_used;     // robot messages only
  std::optional<std::uint64_t> config_version_used;
  std::optional<LatencyBreakdown> latency_ms;
  std::optional<std::string> warning;            // e.g. "tts_failed" on a degraded reply
  EpochMs created_at = 0;

  bool operator==(const ChatMessage&) const = default;
};

inline constexpr std::string_view kAudioMime = "audio/wav";

struct AudioClip {
  std::string payload_b64;
  std::uint32_t sample_rate_hz = 0;
  std::uint64_t duration_ms = 0;

  bool operator==(const AudioClip&) const = default;
};

}  // namespace srw
