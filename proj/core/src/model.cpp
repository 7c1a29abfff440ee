#include "srw/model.hpp"

#include "srw/bcp47.hpp"

namespace srw {

RobotConfigPatch RobotConfigPatch::replace_all(const RobotConfig& config) {
  RobotConfigPatch patch;
  patch.avatar_id = config.avatar_id;
  patch.language = config.language;
  patch.modes = ModesPatch{config.modes.text_enabled, config.modes.push_to_talk_enabled,
                           config.modes.proactive_enabled};
  patch.llm_model = config.llm_model;
  patch.system_prompt = config.system_prompt;
  patch.voice_gender = config.voice_gender;
  return patch;
}

RobotConfig apply_patch(RobotConfig base, const RobotConfigPatch& patch) {
  if (patch.avatar_id) base.avatar_id = *patch.avatar_id;
  if (patch.language) base.language = *patch.language;
  if (patch.modes) {
    const auto& m = *patch.modes;
    if (m.text_enabled) base.modes.text_enabled = *m.text_enabled;
    if (m.push_to_talk_enabled) base.modes.push_to_talk_enabled = *m.push_to_talk_enabled;
    if (m.proactive_enabled) base.modes.proactive_enabled = *m.proactive_enabled;
  }
  if (patch.llm_model) base.llm_model = *patch.llm_model;
  if (patch.system_prompt) base.system_prompt = *patch.system_prompt;
  if (patch.voice_gender) base.voice_gender = *patch.voice_gender;
  return base;
}

std::optional<std::size_t> utf8_length(std::string_view text) {
  std::size_t count = 0;
  std::size_t i = 0;
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
  while (i < text.size()) {
    const unsigned char lead = byte(i);
    std::size_t extra = 0;
    std::uint32_t cp = 0;
    if (lead < 0x80) {
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      extra = 1;
      cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
      extra = 2;
      cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
      extra = 3;
      cp = lead & 0x07;
    } else {
      return std::nullopt;
    }
    if (i + extra >= text.size() && extra > 0) return std::nullopt;
    for (std::size_t k = 1; k <= extra; ++k) {
      const unsigned char c = byte(i + k);
      if ((c & 0xC0) != 0x80) return std::nullopt;
      cp = (cp << 6) | (c & 0x3F);
    }
    // overlong forms, surrogates, out of range
    if ((extra == 1 && cp < 0x80) || (extra == 2 && cp < 0x800) || (extra == 3 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
      return std::nullopt;
    }
    i += extra + 1;
    ++count;
  }
  return count;
}

std::vector<ConfigViolation> validate_config(const RobotConfig& config) {
  std::vector<ConfigViolation> violations;
  if (static_cast<std::size_t>(config.avatar_id) >= enum_count<AvatarId>()) {
    violations.push_back({"avatar_id", "unknown avatar preset"});
  }
  if (!is_well_formed_language_tag(config.language)) {
    violations.push_back({"language", "not a well-formed BCP-47 language tag"});
  }
  const auto& m = config.modes;
  if (!m.text_enabled && !m.push_to_talk_enabled && !m.proactive_enabled) {
    violations.push_back({"modes", "no interaction mode enabled"});
  }
  if (config.llm_model.empty()) {
    violations.push_back({"llm_model", "model identifier must not be empty"});
  }
  if (const auto len = utf8_length(config.system_prompt); !len) {
    violations.push_back({"system_prompt", "not valid UTF-8"});
  } else if (*len > kMaxSystemPromptChars) {
    violations.push_back({"system_prompt", "exceeds 8000 characters"});
  }
  if (static_cast<std::size_t>(config.voice_gender) >= enum_count<VoiceGender>()) {
    violations.push_back({"voice_gender", "unknown voice gender"});
  }
  return violations;
}

Expected<AvatarState, TransitionRejection> transition(AvatarState state, AvatarEvent event) {
  const auto to = [&](Phase next) -> Expected<AvatarState, TransitionRejection> {
    return AvatarState{next, state.blinking};
  };
  if (event == AvatarEvent::error_reset) return to(Phase::idle);
  switch (state.phase) {
    case Phase::idle:
      if (event == AvatarEvent::wake_or_input) return to(Phase::listening);
      break;
    case Phase::listening:
      if (event == AvatarEvent::pipeline_started) return to(Phase::thinking);
      if (event == AvatarEvent::timeout) return to(Phase::idle);
      break;
    case Phase::thinking:
      if (event == AvatarEvent::reply_ready) return to(Phase::speaking);
      break;
    case Phase::speaking:
      if (event == AvatarEvent::playback_done) return to(Phase::idle);
      break;
  }
  return TransitionRejection{state.phase, event};
}

}  // namespace srw
