#include "srw/protocol.hpp"

namespace srw {
namespace {

using detail::FieldReader;
using detail::SchemaError;

Json payload_to_json(const Payload& payload) {
  struct Visitor {
    Json operator()(const UserText& p) const { return Json{{"text", p.text}}; }
    Json operator()(const UserAudio& p) const {
      return Json{{"audio", to_json(p.audio)}, {"modality", to_string(p.modality)}};
    }
    Json operator()(const WakeDetected&) const { return Json::object(); }
    Json operator()(const RobotReply& p) const {
      Json j{{"in_reply_to", p.in_reply_to}, {"text", p.text}, {"latency_ms", to_json(p.latency_ms)}};
      if (p.audio) j["audio"] = to_json(*p.audio);
      if (p.warning) j["warning"] = *p.warning;
      return j;
    }
    Json operator()(const StateUpdate& p) const { return to_json(p.state); }
    Json operator()(const ConfigUpdate& p) const {
      return Json{{"config", to_json(p.config)}, {"config_version", p.config_version}};
    }
    Json operator()(const Heartbeat& p) const {
      return Json{{"robot_state", to_json(p.robot_state)},
                  {"robot_connected", p.robot_connected},
                  {"control_connected", p.control_connected},
                  {"config_version", p.config_version}};
    }
    Json operator()(const ErrorReport& p) const {
      Json j{{"code", p.code}, {"message", p.message}};
      if (p.in_reply_to) j["in_reply_to"] = *p.in_reply_to;
      return j;
    }
    Json operator()(const SessionClosed& p) const { return Json{{"reason", p.reason}}; }
  };
  return std::visit(Visitor{}, payload);
}

Payload read_payload(MessageType type, const Json& value) {
  const std::string path = "payload";
  FieldReader r(value, path);
  Payload out;
  switch (type) {
    case MessageType::user_text:
      out = UserText{r.string("text")};
      break;
    case MessageType::user_audio: {
      UserAudio p;
      p.audio = detail::read_audio_clip(r.object("audio"), "payload.audio");
      p.modality = r.enumeration<Modality>("modality");
      if (p.modality == Modality::text) r.fail("modality", "must be voice_button or voice_wake");
      out = std::move(p);
      break;
    }
    case MessageType::wake_detected:
      out = WakeDetected{};
      break;
    case MessageType::robot_reply: {
      RobotReply p;
      p.in_reply_to = r.string("in_reply_to");
      p.text = r.string("text");
      if (const auto* audio = r.optional_raw("audio")) p.audio = detail::read_audio_clip(*audio, "payload.audio");
      p.latency_ms = detail::read_latency(r.object("latency_ms"), "payload.latency_ms");
      p.warning = r.optional_string("warning");
      out = std::move(p);
      break;
    }
    case MessageType::state_update: {
      StateUpdate p;
      p.state.phase = r.enumeration<Phase>("phase");
      p.state.blinking = r.boolean("blinking");
      out = p;
      break;
    }
    case MessageType::config_update: {
      ConfigUpdate p;
      p.config = detail::read_robot_config(r.object("config"), "payload.config");
      p.config_version = r.uint("config_version");
      if (p.config_version == 0) r.fail("config_version", "must be positive");
      out = std::move(p);
      break;
    }
    case MessageType::heartbeat: {
      Heartbeat p;
      p.robot_state = detail::read_avatar_state(r.object("robot_state"), "payload.robot_state");
      p.robot_connected = r.boolean("robot_connected");
      p.control_connected = r.boolean("control_connected");
      p.config_version = r.uint("config_version");
      if (p.config_version == 0) r.fail("config_version", "must be positive");
      out = p;
      break;
    }
    case MessageType::error: {
      ErrorReport p;
      p.code = r.string("code");
      p.message = r.string("message");
      p.in_reply_to = r.optional_uint("in_reply_to");
      out = std::move(p);
      break;
    }
    case MessageType::session_closed:
      out = SessionClosed{r.string("reason")};
      break;
  }
  r.finish();
  return out;
}

}  // namespace

Json to_json(const Envelope& e) {
  return Json{{"v", e.v},
              {"type", to_string(e.type())},
              {"session_id", e.session_id},
              {"seq", e.seq},
              {"ts", e.ts},
              {"payload", payload_to_json(e.payload)}};
}

Expected<Envelope> decode_json(const Json& doc) {
  if (!doc.is_object()) return make_error(std::string(protocol_errc::malformed), "frame is not a JSON object");
  const auto v = doc.find("v");
  if (v == doc.end() || !v->is_number_integer()) {
    return make_error(std::string(protocol_errc::schema_violation), "v: missing or not an integer");
  }
  if (v->get<std::int64_t>() != kProtocolVersion) {
    return make_error(std::string(protocol_errc::unsupported_version),
                      "protocol version " + v->dump() + " is not supported");
  }
  const auto t = doc.find("type");
  if (t == doc.end() || !t->is_string()) {
    return make_error(std::string(protocol_errc::schema_violation), "type: missing or not a string");
  }
  const auto type = parse_enum<MessageType>(t->get<std::string>());
  if (!type) {
    return make_error(std::string(protocol_errc::unknown_type), "unknown type \"" + t->get<std::string>() + "\"");
  }
  try {
    FieldReader r(doc, "");
    Envelope e;
    e.v = static_cast<int>(r.integer("v"));
    (void)r.string("type");
    e.session_id = r.string("session_id");
    e.seq = r.uint("seq");
    e.ts = r.integer("ts");
    e.payload = read_payload(*type, r.object("payload"));
    r.finish();
    return e;
  } catch (const SchemaError& err) {
    return detail::to_error(err);
  }
}

Expected<Envelope> decode(std::string_view frame) {
  Json doc = Json::parse(frame.begin(), frame.end(), nullptr, false);
  if (doc.is_discarded()) return make_error(std::string(protocol_errc::malformed), "frame is not valid JSON");
  return decode_json(doc);
}

Expected<std::string> encode_document(const Json& document) {
  auto checked = decode_json(document);
  if (!checked) return checked.error();
  return canonical_dump(to_json(*checked));
}

Expected<std::string> encode(const Envelope& envelope) {
  const Json doc = to_json(envelope);
  auto checked = decode_json(doc);
  if (!checked) return checked.error();
  return canonical_dump(doc);
}

Expected<void> SeqTracker::observe(std::uint64_t seq) {
  if (seq == expected_) {
    ++expected_;
    return {};
  }
  ++violations_;
  const auto wanted = expected_;
  expected_ = seq + 1;
  return make_error(std::string(protocol_errc::seq_violation),
                    "expected seq " + std::to_string(wanted) + ", got " + std::to_string(seq));
}

}  // namespace srw
