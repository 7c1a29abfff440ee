#pragma once

// Canonical JSON field names for the domain types. Every reader here is
// strict: unknown keys, missing required keys and wrong JSON types are
// rejected with code "schema_violation" and a message naming the field.

#include <string>

#include <nlohmann/json.hpp>

#include "srw/expected.hpp"
#include "srw/model.hpp"

namespace srw {

using Json = nlohmann::json;

/// Sorted keys, no insignificant whitespace, raw UTF-8.
std::string canonical_dump(const Json& value);

Json to_json(const RobotConfig& config);
Json to_json(const CommunicationSession& session);
Json to_json(const ChatMessage& message);
Json to_json(const AudioClip& clip);
Json to_json(const LatencyBreakdown& latency);
Json to_json(const AvatarState& state);
Json to_json(const ConfigViolation& violation);

Expected<RobotConfig> robot_config_from_json(const Json& value);
Expected<RobotConfigPatch> config_patch_from_json(const Json& value);
Expected<CommunicationSession> session_from_json(const Json& value);
Expected<ChatMessage> chat_message_from_json(const Json& value);

namespace detail {

/// Thrown by FieldReader; converted to Error at API boundaries.
struct SchemaError {
  std::string field;
  std::string message;
};

/// Reads a JSON object field by field and rejects leftovers on finish().
class FieldReader {
 public:
  FieldReader(const Json& object, std::string path);

  const Json& raw(const char* key);
  const Json* optional_raw(const char* key);

  std::string string(const char* key);
  std::optional<std::string> optional_string(const char* key);
  bool boolean(const char* key);
  std::optional<bool> optional_boolean(const char* key);
  std::uint64_t uint(const char* key);
  std::optional<std::uint64_t> optional_uint(const char* key);
  std::int64_t integer(const char* key);
  double number(const char* key);
  std::optional<double> optional_number(const char* key);
  const Json& object(const char* key);

  template <class E>
  E enumeration(const char* key) {
    const auto text = string(key);
    auto parsed = parse_enum<E>(text);
    if (!parsed) fail(key, "unknown value \"" + text + "\"");
    return *parsed;
  }

  std::string child_path(const char* key) const;
  [[noreturn]] void fail(const char* key, const std::string& message) const;
  void finish() const;

 private:
  const Json& object_;
  std::string path_;
  std::vector<std::string> consumed_;
};

RobotConfig read_robot_config(const Json& value, const std::string& path);
AudioClip read_audio_clip(const Json& value, const std::string& path);
LatencyBreakdown read_latency(const Json& value, const std::string& path);
AvatarState read_avatar_state(const Json& value, const std::string& path);

Error to_error(const SchemaError& e);

}  // namespace detail
}  // namespace srw
