#include <unistd.h>

#include <boost/process.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "srw/audio.hpp"
#include "srw/providers.hpp"

namespace srw {
namespace {

namespace bp = boost::process;

struct CommandResult {
  int exit_code = -1;
  std::string out;
};

/// Temporary file removed on scope exit.
class TempFile {
 public:
  explicit TempFile(std::string_view contents) {
    std::string templ = (std::filesystem::temp_directory_path() / "srw-cmd-XXXXXX").string();
    const int fd = ::mkstemp(templ.data());
    if (fd < 0) throw std::runtime_error("mkstemp failed");
    ::close(fd);
    path_ = templ;
    std::ofstream(path_, std::ios::binary).write(contents.data(), static_cast<std::streamsize>(contents.size()));
  }
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  TempFile(const TempFile&) = delete;
  TempFile& operator=(const TempFile&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

Expected<CommandResult> run_command(const ExternalCommand& command, const std::vector<std::string>& extra_args,
                                    std::string_view stdin_bytes) {
  try {
    TempFile input(stdin_bytes);
    auto exe = command.executable;
    if (exe.find('/') == std::string::npos) {
      const auto found = bp::search_path(exe);
      if (found.empty()) return make_error("command_failed", "executable not found: " + exe);
      exe = found.string();
    }
    std::vector<std::string> args = command.arguments;
    args.insert(args.end(), extra_args.begin(), extra_args.end());

    bp::ipstream out;
    bp::child child(exe, bp::args(args), bp::std_in < input.path().string(), bp::std_out > out,
                    bp::std_err > bp::null);
    CommandResult result;
    result.out.assign(std::istreambuf_iterator<char>(out), std::istreambuf_iterator<char>());
    child.wait();
    result.exit_code = child.exit_code();
    return result;
  } catch (const std::exception& e) {
    return make_error("command_failed", e.what());
  }
}

}  // namespace

ExternalCommand ExternalCommand::parse(std::string_view command_line) {
  std::istringstream in{std::string(command_line)};
  ExternalCommand cmd;
  in >> cmd.executable;
  for (std::string arg; in >> arg;) cmd.arguments.push_back(arg);
  return cmd;
}

Expected<Transcript> CommandStt::transcribe(const AudioClip& audio, std::string_view /*language*/) {
  const auto started = SteadyClock::now();
  auto wav = decode_audio_clip(audio);
  if (!wav) return make_error(std::string(provider_errc::bad_audio), wav.error().message);
  auto result = run_command(command_, {}, std::string_view(reinterpret_cast<const char*>(wav->data()), wav->size()));
  if (!result) return make_error(std::string(provider_errc::stt_failed), result.error().message);
  if (result->exit_code != 0) {
    return make_error(std::string(provider_errc::stt_failed), "exit code " + std::to_string(result->exit_code));
  }
  auto text = std::move(result->out);
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  if (text.empty()) return make_error(std::string(provider_errc::stt_empty), "empty transcript");
  return Transcript{std::move(text), elapsed_ms(started)};
}

Expected<AudioClip> CommandTts::synthesize(std::string_view text, std::string_view language, VoiceGender voice) {
  auto result = run_command(command_, {"--language", std::string(language), "--voice", std::string(to_string(voice))},
                            text);
  if (!result) return make_error(std::string(provider_errc::tts_failed), result.error().message);
  if (result->exit_code != 0) {
    return make_error(std::string(provider_errc::tts_failed), "exit code " + std::to_string(result->exit_code));
  }
  const auto* data = reinterpret_cast<const std::uint8_t*>(result->out.data());
  auto clip = make_audio_clip(std::span<const std::uint8_t>(data, result->out.size()));
  if (!clip) return make_error(std::string(provider_errc::tts_failed), clip.error().message);
  return clip;
}

}  // namespace srw
