#include "srw/json_codec.hpp"

#include <algorithm>

namespace srw {
namespace detail {

FieldReader::FieldReader(const Json& object, std::string path) : object_(object), path_(std::move(path)) {
  if (!object_.is_object()) throw SchemaError{path_.empty() ? "$" : path_, "expected an object"};
}

std::string FieldReader::child_path(const char* key) const {
  return path_.empty() ? std::string(key) : path_ + "." + key;
}

void FieldReader::fail(const char* key, const std::string& message) const {
  throw SchemaError{child_path(key), message};
}

const Json* FieldReader::optional_raw(const char* key) {
  const auto it = object_.find(key);
  if (it == object_.end()) return nullptr;
  consumed_.emplace_back(key);
  return &*it;
}

const Json& FieldReader::raw(const char* key) {
  const auto* value = optional_raw(key);
  if (value == nullptr) fail(key, "missing field");
  return *value;
}

std::string FieldReader::string(const char* key) {
  const auto& v = raw(key);
  if (!v.is_string()) fail(key, "expected a string");
  return v.get<std::string>();
}

std::optional<std::string> FieldReader::optional_string(const char* key) {
  if (object_.find(key) == object_.end()) return std::nullopt;
  return string(key);
}

bool FieldReader::boolean(const char* key) {
  const auto& v = raw(key);
  if (!v.is_boolean()) fail(key, "expected a boolean");
  return v.get<bool>();
}

std::optional<bool> FieldReader::optional_boolean(const char* key) {
  if (object_.find(key) == object_.end()) return std::nullopt;
  return boolean(key);
}

std::uint64_t FieldReader::uint(const char* key) {
  const auto& v = raw(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  fail(key, "expected a non-negative integer");
}

std::optional<std::uint64_t> FieldReader::optional_uint(const char* key) {
  if (object_.find(key) == object_.end()) return std::nullopt;
  return uint(key);
}

std::int64_t FieldReader::integer(const char* key) {
  const auto& v = raw(key);
  if (v.is_number_integer()) {
    if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
      fail(key, "integer out of range");
    }
    return v.get<std::int64_t>();
  }
  fail(key, "expected an integer");
}

double FieldReader::number(const char* key) {
  const auto& v = raw(key);
  if (!v.is_number()) fail(key, "expected a number");
  return v.get<double>();
}

std::optional<double> FieldReader::optional_number(const char* key) {
  if (object_.find(key) == object_.end()) return std::nullopt;
  return number(key);
}

const Json& FieldReader::object(const char* key) {
  const auto& v = raw(key);
  if (!v.is_object()) fail(key, "expected an object");
  return v;
}

void FieldReader::finish() const {
  for (const auto& [key, value] : object_.items()) {
    if (std::find(consumed_.begin(), consumed_.end(), key) == consumed_.end()) {
      throw SchemaError{child_path(key.c_str()), "unknown field"};
    }
  }
}

Error to_error(const SchemaError& e) {
  return make_error("schema_violation", e.field + ": " + e.message);
}

RobotConfig read_robot_config(const Json& value, const std::string& path) {
  FieldReader r(value, path);
  RobotConfig c;
  c.avatar_id = r.enumeration<AvatarId>("avatar_id");
  c.language = r.string("language");
  {
    FieldReader m(r.object("modes"), r.child_path("modes"));
    c.modes.text_enabled = m.boolean("text_enabled");
    c.modes.push_to_talk_enabled = m.boolean("push_to_talk_enabled");
    c.modes.proactive_enabled = m.boolean("proactive_enabled");
    m.finish();
  }
  c.llm_model = r.string("llm_model");
  c.system_prompt = r.string("system_prompt");
  c.voice_gender = r.enumeration<VoiceGender>("voice_gender");
  r.finish();
  return c;
}

AudioClip read_audio_clip(const Json& value, const std::string& path) {
  FieldReader r(value, path);
  AudioClip clip;
  clip.payload_b64 = r.string("payload_b64");
  if (r.string("mime") != kAudioMime) r.fail("mime", "expected \"audio/wav\"");
  clip.sample_rate_hz = static_cast<std::uint32_t>(r.uint("sample_rate_hz"));
  if (clip.sample_rate_hz == 0) r.fail("sample_rate_hz", "must be positive");
  clip.duration_ms = r.uint("duration_ms");
  if (clip.duration_ms == 0) r.fail("duration_ms", "must be positive");
  r.finish();
  return clip;
}

LatencyBreakdown read_latency(const Json& value, const std::string& path) {
  FieldReader r(value, path);
  LatencyBreakdown l;
  l.stt = r.optional_number("stt");
  l.llm = r.number("llm");
  l.tts = r.number("tts");
  if ((l.stt && *l.stt < 0) || l.llm < 0 || l.tts < 0) throw SchemaError{path, "latency must be non-negative"};
  r.finish();
  return l;
}

AvatarState read_avatar_state(const Json& value, const std::string& path) {
  FieldReader r(value, path);
  AvatarState s;
  s.phase = r.enumeration<Phase>("phase");
  s.blinking = r.boolean("blinking");
  r.finish();
  return s;
}

}  // namespace detail

std::string canonical_dump(const Json& value) {
  return value.dump(-1, ' ', false, Json::error_handler_t::replace);
}

Json to_json(const RobotConfig& c) {
  return Json{{"avatar_id", to_string(c.avatar_id)},
              {"language", c.language},
              {"modes",
               {{"text_enabled", c.modes.text_enabled},
                {"push_to_talk_enabled", c.modes.push_to_talk_enabled},
                {"proactive_enabled", c.modes.proactive_enabled}}},
              {"llm_model", c.llm_model},
              {"system_prompt", c.system_prompt},
              {"voice_gender", to_string(c.voice_gender)}};
}

Json to_json(const CommunicationSession& s) {
  return Json{{"id", s.id},
              {"created_at", s.created_at},
              {"config", to_json(s.config)},
              {"config_version", s.config_version},
              {"status", to_string(s.status)},
              {"robot_connected", s.robot_connected},
              {"control_connected", s.control_connected}};
}

Json to_json(const LatencyBreakdown& l) {
  Json j{{"llm", l.llm}, {"tts", l.tts}};
  if (l.stt) j["stt"] = *l.stt;
  return j;
}

Json to_json(const ChatMessage& m) {
  Json j{{"id", m.id},
         {"session_id", m.session_id},
         {"turn_index", m.turn_index},
         {"author", to_string(m.author)},
         {"text", m.text},
         {"created_at", m.created_at}};
  if (m.modality) j["modality"] = to_string(*m.modality);
  if (m.in_reply_to) j["in_reply_to"] = *m.in_reply_to;
  if (m.llm_model_used) j["llm_model_used"] = *m.llm_model_used;
  if (m.config_version_used) j["config_version_used"] = *m.config_version_used;
  if (m.latency_ms) j["latency_ms"] = to_json(*m.latency_ms);
  if (m.warning) j["warning"] = *m.warning;
  return j;
}

Json to_json(const AudioClip& clip) {
  return Json{{"payload_b64", clip.payload_b64},
              {"mime", kAudioMime},
              {"sample_rate_hz", clip.sample_rate_hz},
              {"duration_ms", clip.duration_ms}};
}

Json to_json(const AvatarState& s) { return Json{{"phase", to_string(s.phase)}, {"blinking", s.blinking}}; }

Json to_json(const ConfigViolation& v) { return Json{{"field", v.field}, {"message", v.message}}; }

Expected<RobotConfig> robot_config_from_json(const Json& value) {
  try {
    return detail::read_robot_config(value, "");
  } catch (const detail::SchemaError& e) {
    return detail::to_error(e);
  }
}

Expected<RobotConfigPatch> config_patch_from_json(const Json& value) {
  try {
    detail::FieldReader r(value, "");
    RobotConfigPatch p;
    if (r.optional_raw("avatar_id")) p.avatar_id = r.enumeration<AvatarId>("avatar_id");
    p.language = r.optional_string("language");
    if (const auto* modes = r.optional_raw("modes")) {
      detail::FieldReader m(*modes, "modes");
      p.modes = ModesPatch{m.optional_boolean("text_enabled"), m.optional_boolean("push_to_talk_enabled"),
                           m.optional_boolean("proactive_enabled")};
      m.finish();
    }
    p.llm_model = r.optional_string("llm_model");
    p.system_prompt = r.optional_string("system_prompt");
    if (r.optional_raw("voice_gender")) p.voice_gender = r.enumeration<VoiceGender>("voice_gender");
    r.finish();
    return p;
  } catch (const detail::SchemaError& e) {
    return detail::to_error(e);
  }
}

Expected<CommunicationSession> session_from_json(const Json& value) {
  try {
    detail::FieldReader r(value, "");
    CommunicationSession s;
    s.id = r.string("id");
    s.created_at = r.integer("created_at");
    s.config = detail::read_robot_config(r.object("config"), "config");
    s.config_version = r.uint("config_version");
    s.status = r.enumeration<SessionStatus>("status");
    s.robot_connected = r.boolean("robot_connected");
    s.control_connected = r.boolean("control_connected");
    r.finish();
    return s;
  } catch (const detail::SchemaError& e) {
    return detail::to_error(e);
  }
}

Expected<ChatMessage> chat_message_from_json(const Json& value) {
  try {
    detail::FieldReader r(value, "");
    ChatMessage m;
    m.id = r.string("id");
    m.session_id = r.string("session_id");
    m.turn_index = r.uint("turn_index");
    m.author = r.enumeration<Author>("author");
    if (r.optional_raw("modality")) m.modality = r.enumeration<Modality>("modality");
    m.text = r.string("text");
    m.in_reply_to = r.optional_string("in_reply_to");
    m.llm_model_used = r.optional_string("llm_model_used");
    m.config_version_used = r.optional_uint("config_version_used");
    if (const auto* l = r.optional_raw("latency_ms")) m.latency_ms = detail::read_latency(*l, "latency_ms");
    m.warning = r.optional_string("warning");
    m.created_at = r.integer("created_at");
    r.finish();
    return m;
  } catch (const detail::SchemaError& e) {
    return detail::to_error(e);
  }
}

}  // namespace srw
