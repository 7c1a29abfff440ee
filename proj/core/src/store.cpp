#include "srw/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <fstream>
#include <mutex>
#include <sstream>
#include <system_error>

#include "srw/json_codec.hpp"

namespace srw {
namespace {

[[noreturn]] void throw_errno(const std::string& what) {
  throw std::system_error(errno, std::generic_category(), what);
}

class UniqueFd {
 public:
  explicit UniqueFd(int fd) : fd_(fd) {}
  ~UniqueFd() {
    if (fd_ >= 0) ::close(fd_);
  }
  UniqueFd(const UniqueFd&) = delete;
  UniqueFd& operator=(const UniqueFd&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

void write_all(int fd, std::string_view bytes, const fs::path& file) {
  while (!bytes.empty()) {
    const auto n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno("write " + file.string());
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

void fsync_dir(const fs::path& dir) {
  UniqueFd fd(::open(dir.c_str(), O_RDONLY | O_DIRECTORY));
  if (fd.get() >= 0) ::fsync(fd.get());
}

class PosixFileLayer final : public FileLayer {
 public:
  void append_durable(const fs::path& file, std::string_view bytes) override {
    UniqueFd fd(::open(file.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644));
    if (fd.get() < 0) throw_errno("open " + file.string());
    write_all(fd.get(), bytes, file);
    if (::fdatasync(fd.get()) != 0) throw_errno("fdatasync " + file.string());
  }

  void replace_durable(const fs::path& file, std::string_view bytes) override {
    const fs::path tmp = file.string() + ".tmp";
    {
      UniqueFd fd(::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
      if (fd.get() < 0) throw_errno("open " + tmp.string());
      write_all(fd.get(), bytes, tmp);
      if (::fsync(fd.get()) != 0) throw_errno("fsync " + tmp.string());
    }
    if (::rename(tmp.c_str(), file.c_str()) != 0) throw_errno("rename " + tmp.string());
    fsync_dir(file.parent_path());
  }

  std::optional<std::string> read(const fs::path& file) override {
    std::ifstream in(file, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
  }

  void truncate(const fs::path& file, std::uintmax_t size) override {
    std::error_code ec;
    fs::resize_file(file, size, ec);
    if (ec) throw std::system_error(ec, "truncate " + file.string());
  }

  void create_directories(const fs::path& dir) override {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::system_error(ec, "mkdir " + dir.string());
  }

  std::vector<fs::path> list(const fs::path& dir, std::string_view extension) override {
    std::vector<fs::path> out;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
      if (entry.is_regular_file() && entry.path().extension() == extension) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

Error store_failed(const std::exception& e) { return make_error("store_failed", e.what()); }

Error not_found(const std::string& id) { return make_error("not_found", "unknown session " + id); }

}  // namespace

struct Store::SessionLog {
  mutable std::shared_mutex mutex;
  CommunicationSession communication;
  std::vector<ChatMessage> messages;
  std::uintmax_t log_bytes = 0;
  bool poisoned = false;  // a failed append could not be rolled back
};

std::shared_ptr<FileLayer> posix_file_layer() { return std::make_shared<PosixFileLayer>(); }

Store::Store(fs::path data_dir, std::shared_ptr<FileLayer> files)
    : data_dir_(std::move(data_dir)), files_(std::move(files)) {}

Store::~Store() = default;

Expected<std::unique_ptr<Store>> Store::open(fs::path data_dir, std::shared_ptr<FileLayer> files) {
  std::unique_ptr<Store> store(new Store(std::move(data_dir), std::move(files)));
  if (auto loaded = store->load_all(); !loaded) return loaded.error();
  return store;
}

fs::path Store::communication_path(const std::string& id) const {
  return data_dir_ / "communications" / (id + ".rec");
}

fs::path Store::log_path(const std::string& id) const { return data_dir_ / "chat_messages" / (id + ".log"); }

Expected<void> Store::load_all() {
  try {
    files_->create_directories(data_dir_ / "communications");
    files_->create_directories(data_dir_ / "chat_messages");
    for (const auto& rec : files_->list(data_dir_ / "communications", ".rec")) {
      const auto text = files_->read(rec);
      if (!text) continue;
      const Json doc = Json::parse(*text, nullptr, false);
      auto session = doc.is_discarded() ? Expected<CommunicationSession>(make_error("schema_violation", "not JSON"))
                                        : session_from_json(doc);
      if (!session) {
        return make_error("store_failed", "corrupt communication " + rec.string() + ": " + session.error().message);
      }
      auto log = std::make_shared<SessionLog>();
      log->communication = std::move(*session);

      // Keep the longest clean prefix of the log; cut a torn tail.
      const auto path = log_path(log->communication.id);
      if (const auto bytes = files_->read(path)) {
        std::size_t pos = 0;
        while (pos < bytes->size()) {
          const auto nl = bytes->find('\n', pos);
          if (nl == std::string::npos) break;
          const Json line = Json::parse(bytes->begin() + static_cast<std::ptrdiff_t>(pos),
                                        bytes->begin() + static_cast<std::ptrdiff_t>(nl), nullptr, false);
          if (line.is_discarded()) break;
          auto message = chat_message_from_json(line);
          if (!message || message->turn_index != log->messages.size() ||
              message->session_id != log->communication.id) {
            break;
          }
          log->messages.push_back(std::move(*message));
          pos = nl + 1;
        }
        if (pos < bytes->size()) {
          recovered_tail_bytes_ += bytes->size() - pos;
          files_->truncate(path, pos);
        }
        log->log_bytes = pos;
      }
      sessions_.emplace(log->communication.id, std::move(log));
    }
  } catch (const std::exception& e) {
    return store_failed(e);
  }
  return {};
}

std::shared_ptr<Store::SessionLog> Store::find(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  const auto it = sessions_.find(session_id);
  return it == sessions_.end() ? nullptr : it->second;
}

Expected<void> Store::save_communication(const CommunicationSession& session) {
  std::shared_ptr<SessionLog> log;
  {
    std::unique_lock lock(mutex_);
    auto& slot = sessions_[session.id];
    if (!slot) slot = std::make_shared<SessionLog>();
    log = slot;
  }
  std::unique_lock lock(log->mutex);
  try {
    files_->replace_durable(communication_path(session.id), canonical_dump(to_json(session)));
  } catch (const std::exception& e) {
    if (log->communication.id.empty()) {
      std::unique_lock map_lock(mutex_);
      sessions_.erase(session.id);
    }
    return store_failed(e);
  }
  log->communication = session;
  return {};
}

Expected<CommunicationSession> Store::load_communication(const std::string& session_id) const {
  const auto log = find(session_id);
  if (!log) return not_found(session_id);
  std::shared_lock lock(log->mutex);
  if (log->communication.id.empty()) return not_found(session_id);
  return log->communication;
}

std::vector<CommunicationSession> Store::communications() const {
  std::vector<std::shared_ptr<SessionLog>> logs;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [id, log] : sessions_) logs.push_back(log);
  }
  std::vector<CommunicationSession> out;
  for (const auto& log : logs) {
    std::shared_lock lock(log->mutex);
    if (!log->communication.id.empty()) out.push_back(log->communication);
  }
  return out;
}

Expected<ChatMessage> Store::append_chat_message(ChatMessage message) {
  const auto log = find(message.session_id);
  if (!log) return not_found(message.session_id);
  std::unique_lock lock(log->mutex);
  if (log->poisoned) return make_error("store_failed", "log for " + message.session_id + " is unwritable");

  message.turn_index = log->messages.size();
  if (message.id.empty()) message.id = message.session_id + "#" + std::to_string(message.turn_index);
  if (!log->messages.empty()) message.created_at = std::max(message.created_at, log->messages.back().created_at);

  std::string line = canonical_dump(to_json(message));
  line.push_back('\n');
  const auto path = log_path(message.session_id);
  try {
    files_->append_durable(path, line);
  } catch (const std::exception& e) {
    try {
      files_->truncate(path, log->log_bytes);
    } catch (const std::exception&) {
      log->poisoned = true;
    }
    return store_failed(e);
  }
  log->log_bytes += line.size();
  log->messages.push_back(message);
  return message;
}

Expected<std::vector<ChatMessage>> Store::fetch_history(const std::string& session_id,
                                                        std::optional<std::size_t> limit) const {
  const auto log = find(session_id);
  if (!log) return not_found(session_id);
  std::shared_lock lock(log->mutex);
  const auto& all = log->messages;
  std::size_t start = 0;
  if (limit && *limit < all.size()) {
    start = all.size() - *limit;
    // never start on a reply whose user message was cut off
    while (start < all.size() && all[start].author == Author::robot) ++start;
  }
  return std::vector<ChatMessage>(all.begin() + static_cast<std::ptrdiff_t>(start), all.end());
}

Expected<std::size_t> Store::message_count(const std::string& session_id) const {
  const auto log = find(session_id);
  if (!log) return not_found(session_id);
  std::shared_lock lock(log->mutex);
  return log->messages.size();
}

Expected<std::string> Store::export_transcript(const std::string& session_id) const {
  const auto log = find(session_id);
  if (!log) return not_found(session_id);
  std::shared_lock lock(log->mutex);
  if (log->communication.id.empty()) return not_found(session_id);
  std::string out = canonical_dump(Json{{"communication", to_json(log->communication)}});
  out.push_back('\n');
  for (const auto& m : log->messages) {
    out += canonical_dump(Json{{"chat_message", to_json(m)}});
    out.push_back('\n');
  }
  return out;
}

Expected<std::string> Store::import_transcript(std::string_view lines) {
  std::vector<Json> records;
  std::size_t pos = 0;
  while (pos < lines.size()) {
    auto nl = lines.find('\n', pos);
    if (nl == std::string_view::npos) nl = lines.size();
    const auto line = lines.substr(pos, nl - pos);
    if (!line.empty()) {
      Json doc = Json::parse(line.begin(), line.end(), nullptr, false);
      if (doc.is_discarded() || !doc.is_object() || doc.size() != 1) {
        return make_error("schema_violation", "transcript line " + std::to_string(records.size() + 1));
      }
      records.push_back(std::move(doc));
    }
    pos = nl + 1;
  }
  if (records.empty() || !records.front().contains("communication")) {
    return make_error("schema_violation", "transcript must start with a communication header");
  }
  auto session = session_from_json(records.front()["communication"]);
  if (!session) return session.error();
  if (find(session->id)) return make_error("already_exists", "session " + session->id + " already stored");

  std::vector<ChatMessage> messages;
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (!records[i].contains("chat_message")) return make_error("schema_violation", "expected chat_message record");
    auto message = chat_message_from_json(records[i]["chat_message"]);
    if (!message) return message.error();
    if (message->session_id != session->id || message->turn_index != messages.size()) {
      return make_error("schema_violation", "chat_message out of order at line " + std::to_string(i + 1));
    }
    messages.push_back(std::move(*message));
  }

  if (auto saved = save_communication(*session); !saved) return saved.error();
  for (auto& m : messages) {
    if (auto appended = append_chat_message(std::move(m)); !appended) return appended.error();
  }
  return session->id;
}

}  // namespace srw
