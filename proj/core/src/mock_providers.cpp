#include <cmath>
#include <numbers>
#include <thread>

#include "srw/audio.hpp"
#include "srw/providers.hpp"

namespace srw {

Expected<void> validate_llm_request(const LlmRequest& request) {
  if (request.model.empty()) return make_error("llm_bad_request", "model name is empty");
  if (request.messages.empty()) return make_error("llm_bad_request", "no messages");
  for (std::size_t i = 0; i < request.messages.size(); ++i) {
    if (request.messages[i].role == LlmRole::system && i != 0) {
      return make_error("llm_bad_request", "system message must come first");
    }
  }
  if (const auto t = request.options.temperature; t && (*t < 0.0 || *t > 2.0)) {
    return make_error("llm_bad_request", "temperature outside [0, 2]");
  }
  return {};
}

Expected<LlmResponse> MockLlm::generate(const LlmRequest& request) {
  if (auto ok = validate_llm_request(request); !ok) return ok.error();
  const auto started = SteadyClock::now();
  if (options_.delay.count() > 0) std::this_thread::sleep_for(options_.delay);

  LlmResponse response;
  response.model = request.model;
  if (request.model == "fixed") {
    response.text = options_.fixed_text;
  } else {
    std::string last_user;
    for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
      if (it->role == LlmRole::user) {
        last_user = it->content;
        break;
      }
    }
    response.text = "echo: " + last_user;
  }
  response.gen_ms = elapsed_ms(started);
  return response;
}

Expected<Transcript> MockStt::transcribe(const AudioClip& audio, std::string_view /*language*/) {
  const auto started = SteadyClock::now();
  auto bytes = decode_audio_clip(audio);
  if (!bytes) return make_error(std::string(provider_errc::bad_audio), bytes.error().message);
  auto info = parse_wav(*bytes);
  if (!info) return make_error(std::string(provider_errc::bad_audio), info.error().message);
  if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
  if (!info->comment) return make_error(std::string(provider_errc::stt_failed), "no transcript in INFO chunk");
  if (info->comment->empty()) return make_error(std::string(provider_errc::stt_empty), "empty transcript");
  return Transcript{*info->comment, elapsed_ms(started)};
}

double MockTts::frequency_hz(VoiceGender voice) {
  switch (voice) {
    case VoiceGender::female:
      return 440.0;
    case VoiceGender::male:
      return 220.0;
    case VoiceGender::neutral:
      break;
  }
  return 330.0;
}

std::uint64_t MockTts::duration_ms_for(std::string_view text) {
  const auto chars = utf8_length(text).value_or(text.size());
  return std::max<std::uint64_t>(200, 50 * static_cast<std::uint64_t>(chars));
}

Expected<AudioClip> MockTts::synthesize(std::string_view text, std::string_view /*language*/, VoiceGender voice) {
  if (delay_.count() > 0) std::this_thread::sleep_for(delay_);
  const auto duration = duration_ms_for(text);
  const auto frames = static_cast<std::size_t>(kMockTtsSampleRate * duration / 1000);
  const double freq = frequency_hz(voice);
  std::vector<std::int16_t> samples(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const double t = static_cast<double>(i) / kMockTtsSampleRate;
    samples[i] = static_cast<std::int16_t>(std::lround(0.3 * 32767.0 * std::sin(2.0 * std::numbers::pi * freq * t)));
  }
  const auto wav = write_wav_pcm16(samples, kMockTtsSampleRate);
  auto clip = make_audio_clip(wav);
  if (!clip) return make_error(std::string(provider_errc::tts_failed), clip.error().message);
  return clip;
}

Providers mock_providers() {
  return Providers{std::make_shared<MockLlm>(), std::make_shared<MockStt>(), std::make_shared<MockTts>()};
}

}  // namespace srw
