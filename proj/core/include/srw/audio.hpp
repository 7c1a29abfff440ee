#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "srw/expected.hpp"
#include "srw/model.hpp"

namespace srw {

using Bytes = std::vector<std::uint8_t>;

/// Parsed RIFF/WAVE container. `samples` views into the source buffer.
struct WavInfo {
  std::uint16_t format_tag = 0;  // 1 = PCM, 3 = IEEE float
  std::uint16_t channels = 0;
  std::uint32_t sample_rate_hz = 0;
  std::uint16_t bits_per_sample = 0;
  std::uint16_t block_align = 0;
  std::uint64_t frame_count = 0;
  std::optional<std::string> comment;  // LIST/INFO ICMT
  std::span<const std::uint8_t> data;

  /// Exact duration in milliseconds (fractional).
  double duration_ms_exact() const;
};

/// Errors use code "bad_audio".
Expected<WavInfo> parse_wav(std::span<const std::uint8_t> bytes);

/// 16-bit PCM WAV. When `comment` is set a LIST/INFO chunk with an ICMT
/// entry is written after the fmt chunk.
Bytes write_wav_pcm16(std::span<const std::int16_t> samples, std::uint32_t sample_rate_hz,
                      std::uint16_t channels = 1,
                      std::optional<std::string_view> comment = std::nullopt);

/// Decodes interleaved 16-bit PCM to the first channel.
std::vector<std::int16_t> pcm16_mono(const WavInfo& info);

std::string base64_encode(std::span<const std::uint8_t> bytes);

/// Strict: length must be a multiple of 4, only the standard alphabet,
/// padding only at the end. Errors use code "bad_audio".
Expected<Bytes> base64_decode(std::string_view text);

/// Wraps WAV bytes into a clip, deriving rate and duration from the header.
Expected<AudioClip> make_audio_clip(std::span<const std::uint8_t> wav);

/// Decoded bytes of a clip after checking the container and that the
/// declared rate/duration agree with the header (duration within 1 ms).
Expected<Bytes> decode_audio_clip(const AudioClip& clip);

}  // namespace srw
