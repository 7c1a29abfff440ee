#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "srw/expected.hpp"
#include "srw/model.hpp"

namespace srw {

namespace fs = std::filesystem;

/// The file operations the store needs. Implementations throw
/// std::system_error on I/O failure. Tests swap in a failure-injecting layer.
class FileLayer {
 public:
  virtual ~FileLayer() = default;

  /// Appends and flushes to stable storage before returning.
  virtual void append_durable(const fs::path& file, std::string_view bytes) = 0;
  /// Atomically replaces the file contents (write temp, fsync, rename).
  virtual void replace_durable(const fs::path& file, std::string_view bytes) = 0;
  virtual std::optional<std::string> read(const fs::path& file) = 0;
  virtual void truncate(const fs::path& file, std::uintmax_t size) = 0;
  virtual void create_directories(const fs::path& dir) = 0;
  virtual std::vector<fs::path> list(const fs::path& dir, std::string_view extension) = 0;
};

std::shared_ptr<FileLayer> posix_file_layer();

/// Embedded store holding the `communications` and `chat_messages`
/// collections under `data_dir`:
///   communications/{id}.rec   one canonical document, replaced atomically
///   chat_messages/{id}.log    append-only, one canonical record per line
///
/// Thread-safe. Appends to one session are expected from a single writer;
/// different sessions proceed in parallel.
class Store {
 public:
  static Expected<std::unique_ptr<Store>> open(fs::path data_dir,
                                               std::shared_ptr<FileLayer> files = posix_file_layer());
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  const fs::path& data_dir() const noexcept { return data_dir_; }

  /// Upsert by id.
  Expected<void> save_communication(const CommunicationSession& session);
  Expected<CommunicationSession> load_communication(const std::string& session_id) const;
  std::vector<CommunicationSession> communications() const;

  /// Assigns turn_index = current count and, when empty, an id of the form
  /// "{session}#{turn_index}". created_at is clamped to be non-decreasing.
  Expected<ChatMessage> append_chat_message(ChatMessage message);

  /// Messages in turn_index order. With a limit, the most recent `limit`
  /// messages, then leading robot replies are dropped so the window starts
  /// at a user message.
  Expected<std::vector<ChatMessage>> fetch_history(const std::string& session_id,
                                                   std::optional<std::size_t> limit = std::nullopt) const;

  Expected<std::size_t> message_count(const std::string& session_id) const;

  /// Header line {"communication":{...}} then one {"chat_message":{...}}
  /// line per message, canonical encoding, '\n' terminated.
  Expected<std::string> export_transcript(const std::string& session_id) const;

  /// Recreates a session from an export. Fails with "already_exists" if the
  /// id is taken. Returns the session id.
  Expected<std::string> import_transcript(std::string_view lines);

  /// Bytes dropped from torn log tails while opening (crash recovery).
  std::uintmax_t recovered_tail_bytes() const noexcept { return recovered_tail_bytes_; }

 private:
  struct SessionLog;

  Store(fs::path data_dir, std::shared_ptr<FileLayer> files);
  Expected<void> load_all();
  std::shared_ptr<SessionLog> find(const std::string& session_id) const;
  fs::path communication_path(const std::string& id) const;
  fs::path log_path(const std::string& id) const;

  fs::path data_dir_;
  std::shared_ptr<FileLayer> files_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<SessionLog>> sessions_;
  std::uintmax_t recovered_tail_bytes_ = 0;
};

}  // namespace srw
