#pragma once

// Provider interfaces for generation, transcription and synthesis. None of
// them sees a session identifier: a provider only receives the content of
// the current request.

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "srw/expected.hpp"
#include "srw/model.hpp"

namespace srw {

enum class LlmRole { system, user, assistant };

template <>
struct EnumNames<LlmRole> {
  static constexpr std::array<std::string_view, 3> names{"system", "user", "assistant"};
};

struct LlmMessage {
  LlmRole role = LlmRole::user;
  std::string content;
  bool operator==(const LlmMessage&) const = default;
};

struct LlmOptions {
  /// Sent as options.temperature when set; unset leaves it to the server.
  /// Range [0, 2].
  std::optional<double> temperature = 0.7;
  std::chrono::milliseconds timeout{30000};
};

struct LlmRequest {
  std::string model;
  std::vector<LlmMessage> messages;
  LlmOptions options;
};

/// Nonempty messages; at most one system message and only in front; model
/// nonempty; temperature within [0, 2]. Errors use code "llm_bad_request".
Expected<void> validate_llm_request(const LlmRequest& request);

struct LlmResponse {
  std::string text;
  std::string model;
  double gen_ms = 0.0;
  /// Raw body for logs. Only retained by the HTTP client.
  std::string raw_body;
};

struct Transcript {
  std::string text;
  double stt_ms = 0.0;
};

/// Error codes shared by providers.
namespace provider_errc {
inline constexpr std::string_view llm_failed = "llm_failed";
inline constexpr std::string_view llm_timeout = "llm_timeout";
inline constexpr std::string_view llm_malformed = "llm_malformed";
inline constexpr std::string_view stt_failed = "stt_failed";
inline constexpr std::string_view stt_empty = "stt_empty";
inline constexpr std::string_view bad_audio = "bad_audio";
inline constexpr std::string_view tts_failed = "tts_failed";
}  // namespace provider_errc

class LlmProvider {
 public:
  virtual ~LlmProvider() = default;
  virtual Expected<LlmResponse> generate(const LlmRequest& request) = 0;
};

class SttProvider {
 public:
  virtual ~SttProvider() = default;
  virtual Expected<Transcript> transcribe(const AudioClip& audio, std::string_view language) = 0;
};

class TtsProvider {
 public:
  virtual ~TtsProvider() = default;
  virtual Expected<AudioClip> synthesize(std::string_view text, std::string_view language,
                                         VoiceGender voice) = 0;
};

struct Providers {
  std::shared_ptr<LlmProvider> llm;
  std::shared_ptr<SttProvider> stt;
  std::shared_ptr<TtsProvider> tts;
};

// ---------------------------------------------------------------------------
// Deterministic offline providers
// ---------------------------------------------------------------------------

/// "fixed" answers with a constant; every other model name echoes the last
/// user message as "echo: <text>".
class MockLlm final : public LlmProvider {
 public:
  struct Options {
    std::string fixed_text = "I am a mock robot.";
    std::chrono::milliseconds delay{0};
  };

  MockLlm() = default;
  explicit MockLlm(Options options) : options_(std::move(options)) {}

  Expected<LlmResponse> generate(const LlmRequest& request) override;

 private:
  Options options_;
};

/// Reads the transcript from the WAV LIST/INFO ICMT chunk.
class MockStt final : public SttProvider {
 public:
  explicit MockStt(std::chrono::milliseconds delay = std::chrono::milliseconds{0}) : delay_(delay) {}
  Expected<Transcript> transcribe(const AudioClip& audio, std::string_view language) override;

 private:
  std::chrono::milliseconds delay_;
};

inline constexpr std::uint32_t kMockTtsSampleRate = 16000;

/// Sine-tone speech stand-in: 16 kHz mono PCM16, max(200, 50 x chars) ms,
/// 440 Hz female / 220 Hz male / 330 Hz neutral.
class MockTts final : public TtsProvider {
 public:
  explicit MockTts(std::chrono::milliseconds delay = std::chrono::milliseconds{0}) : delay_(delay) {}
  Expected<AudioClip> synthesize(std::string_view text, std::string_view language, VoiceGender voice) override;

  static double frequency_hz(VoiceGender voice);
  static std::uint64_t duration_ms_for(std::string_view text);

 private:
  std::chrono::milliseconds delay_;
};

Providers mock_providers();

// ---------------------------------------------------------------------------
// Live providers
// ---------------------------------------------------------------------------

/// Ollama-compatible chat client: POST {base}/api/chat with
/// {"model","messages","stream":false}. One retry when the connection
/// cannot be established; no retry after a timeout.
class HttpLlm final : public LlmProvider {
 public:
  struct Options {
    std::string base_url = "http://127.0.0.1:11434";
    /// Called after every HTTP attempt with the attempt number (1-based) and
    /// "ok", "connect_failed", "timeout" or "failed".
    std::function<void(int, std::string_view)> on_attempt;
  };

  explicit HttpLlm(Options options);
  Expected<LlmResponse> generate(const LlmRequest& request) override;

  /// Request body exactly as sent.
  static std::string request_body(const LlmRequest& request);

 private:
  Options options_;
};

/// Runs `command` (argv[0] plus fixed arguments) per request.
struct ExternalCommand {
  std::string executable;
  std::vector<std::string> arguments;

  /// Whitespace-separated command line.
  static ExternalCommand parse(std::string_view command_line);
};

/// WAV bytes on stdin, UTF-8 transcript on stdout, exit 0.
class CommandStt final : public SttProvider {
 public:
  explicit CommandStt(ExternalCommand command) : command_(std::move(command)) {}
  Expected<Transcript> transcribe(const AudioClip& audio, std::string_view language) override;

 private:
  ExternalCommand command_;
};

/// UTF-8 text on stdin, `--language <tag> --voice <gender>` appended to the
/// arguments, WAV bytes on stdout.
class CommandTts final : public TtsProvider {
 public:
  explicit CommandTts(ExternalCommand command) : command_(std::move(command)) {}
  Expected<AudioClip> synthesize(std::string_view text, std::string_view language, VoiceGender voice) override;

 private:
  ExternalCommand command_;
};

}  // namespace srw
