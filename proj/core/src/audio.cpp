#include "srw/audio.hpp"

#include <boost/beast/core/detail/base64.hpp>

#include <cmath>
#include <cstring>

namespace srw {
namespace {

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char (&tag)[5]) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(Bytes& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFF));
}

void put_tag(Bytes& out, const char (&tag)[5]) { out.insert(out.end(), tag, tag + 4); }

Error bad_audio(std::string message) { return make_error("bad_audio", std::move(message)); }

std::optional<std::string> parse_info_comment(std::span<const std::uint8_t> list) {
  if (list.size() < 4 || !tag_is(list, 0, "INFO")) return std::nullopt;
  std::size_t at = 4;
  while (at + 8 <= list.size()) {
    const auto size = read_u32(list, at + 4);
    if (at + 8 + size > list.size()) return std::nullopt;
    if (tag_is(list, at, "ICMT")) {
      std::string text(reinterpret_cast<const char*>(list.data() + at + 8), size);
      if (const auto nul = text.find('\0'); nul != std::string::npos) text.resize(nul);
      return text;
    }
    at += 8 + size + (size & 1);
  }
  return std::nullopt;
}

}  // namespace

double WavInfo::duration_ms_exact() const {
  if (sample_rate_hz == 0) return 0.0;
  return static_cast<double>(frame_count) * 1000.0 / static_cast<double>(sample_rate_hz);
}

Expected<WavInfo> parse_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
    return bad_audio("missing RIFF/WAVE header");
  }
  const std::size_t riff_end = std::min<std::size_t>(bytes.size(), 8ull + read_u32(bytes, 4));
  WavInfo info;
  bool have_fmt = false;
  bool have_data = false;
  std::size_t at = 12;
  while (at + 8 <= riff_end) {
    const std::uint32_t size = read_u32(bytes, at + 4);
    const std::size_t body = at + 8;
    if (body + size > riff_end) return bad_audio("chunk overruns container");
    const auto chunk = bytes.subspan(body, size);
    if (tag_is(bytes, at, "fmt ")) {
      if (size < 16) return bad_audio("fmt chunk too short");
      info.format_tag = read_u16(chunk, 0);
      info.channels = read_u16(chunk, 2);
      info.sample_rate_hz = read_u32(chunk, 4);
      info.block_align = read_u16(chunk, 12);
      info.bits_per_sample = read_u16(chunk, 14);
      have_fmt = true;
    } else if (tag_is(bytes, at, "data")) {
      info.data = chunk;
      have_data = true;
    } else if (tag_is(bytes, at, "LIST")) {
      if (auto comment = parse_info_comment(chunk)) info.comment = std::move(comment);
    }
    at = body + size + (size & 1);
  }
  if (!have_fmt) return bad_audio("missing fmt chunk");
  if (!have_data) return bad_audio("missing data chunk");
  if (info.format_tag != 1 && info.format_tag != 3) return bad_audio("unsupported sample format");
  if (info.channels == 0 || info.sample_rate_hz == 0) return bad_audio("zero channels or rate");
  if (info.bits_per_sample % 8 != 0 || info.bits_per_sample == 0 ||
      info.block_align != info.channels * (info.bits_per_sample / 8)) {
    return bad_audio("inconsistent block alignment");
  }
  if (info.data.size() % info.block_align != 0) return bad_audio("truncated sample data");
  info.frame_count = info.data.size() / info.block_align;
  return info;
}

Bytes write_wav_pcm16(std::span<const std::int16_t> samples, std::uint32_t sample_rate_hz,
                      std::uint16_t channels, std::optional<std::string_view> comment) {
  Bytes list;
  if (comment) {
    Bytes icmt(comment->begin(), comment->end());
    icmt.push_back(0);
    const auto icmt_size = static_cast<std::uint32_t>(icmt.size());
    if (icmt.size() & 1) icmt.push_back(0);
    put_tag(list, "INFO");
    put_tag(list, "ICMT");
    put_u32(list, icmt_size);
    list.insert(list.end(), icmt.begin(), icmt.end());
  }

  const auto data_size = static_cast<std::uint32_t>(samples.size() * sizeof(std::int16_t));
  const std::uint16_t block_align = static_cast<std::uint16_t>(channels * 2);
  std::uint32_t riff_size = 4 + (8 + 16) + (8 + data_size);
  if (!list.empty()) riff_size += 8 + static_cast<std::uint32_t>(list.size());

  Bytes out;
  out.reserve(8 + riff_size);
  put_tag(out, "RIFF");
  put_u32(out, riff_size);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, channels);
  put_u32(out, sample_rate_hz);
  put_u32(out, sample_rate_hz * block_align);
  put_u16(out, block_align);
  put_u16(out, 16);
  if (!list.empty()) {
    put_tag(out, "LIST");
    put_u32(out, static_cast<std::uint32_t>(list.size()));
    out.insert(out.end(), list.begin(), list.end());
  }
  put_tag(out, "data");
  put_u32(out, data_size);
  for (const auto s : samples) put_u16(out, static_cast<std::uint16_t>(s));
  return out;
}

std::vector<std::int16_t> pcm16_mono(const WavInfo& info) {
  std::vector<std::int16_t> out;
  if (info.format_tag != 1 || info.bits_per_sample != 16) return out;
  out.reserve(info.frame_count);
  for (std::uint64_t f = 0; f < info.frame_count; ++f) {
    out.push_back(static_cast<std::int16_t>(read_u16(info.data, f * info.block_align)));
  }
  return out;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  namespace b64 = boost::beast::detail::base64;
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

Expected<Bytes> base64_decode(std::string_view text) {
  namespace b64 = boost::beast::detail::base64;
  if (text.size() % 4 != 0) return bad_audio("base64 length is not a multiple of 4");
  std::size_t padding = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool alpha = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                       c == '+' || c == '/';
    if (c == '=') {
      if (i + 2 < text.size()) return bad_audio("base64 padding inside payload");
      ++padding;
    } else if (!alpha || padding > 0) {
      return bad_audio("invalid base64 character");
    }
  }
  Bytes out(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  (void)read;
  out.resize(written);
  return out;
}

Expected<AudioClip> make_audio_clip(std::span<const std::uint8_t> wav) {
  auto info = parse_wav(wav);
  if (!info) return info.error();
  const auto duration = std::llround(info->duration_ms_exact());
  if (duration <= 0) return bad_audio("clip has no duration");
  return AudioClip{base64_encode(wav), info->sample_rate_hz, static_cast<std::uint64_t>(duration)};
}

Expected<Bytes> decode_audio_clip(const AudioClip& clip) {
  auto bytes = base64_decode(clip.payload_b64);
  if (!bytes) return bytes.error();
  auto info = parse_wav(*bytes);
  if (!info) return info.error();
  if (info->sample_rate_hz != clip.sample_rate_hz) return bad_audio("declared sample rate disagrees with header");
  if (clip.duration_ms == 0 || std::abs(info->duration_ms_exact() - static_cast<double>(clip.duration_ms)) > 1.0) {
    return bad_audio("declared duration disagrees with header");
  }
  return bytes;
}

}  // namespace srw
