#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "srw/expected.hpp"
#include "srw/model.hpp"
#include "srw/protocol.hpp"
#include "srw/store.hpp"

namespace srw {

enum class ChannelKind { robot, control };

template <>
struct EnumNames<ChannelKind> {
  static constexpr std::array<std::string_view, 2> names{"robot", "control"};
};

/// Which attached channels a server envelope goes to.
enum class Audience { robot, control, all };

/// Outbound side of one WebSocket connection. deliver() must not block: it
/// stamps seq/ts, encodes and queues. It returns false when the connection
/// is gone or its bounded queue overflowed; the registry then detaches it.
class Connection {
 public:
  virtual ~Connection() = default;
  virtual std::uint64_t connection_id() const = 0;
  virtual bool deliver(const std::string& session_id, const Payload& payload) = 0;
  /// Flush what is queued, then close the socket.
  virtual void close_after_flush(std::string_view reason) = 0;
};

/// Adjective-noun-NNN identifiers from two built-in word lists.
class SessionIdGenerator {
 public:
  explicit SessionIdGenerator(std::uint64_t seed);
  SessionIdGenerator();  // seeded from std::random_device
  std::string next();

  static const std::vector<std::string_view>& adjectives();
  static const std::vector<std::string_view>& nouns();

 private:
  std::mt19937_64 rng_;
};

/// Optimistic-concurrency failure for update_config. `error.code` is
/// "version_conflict", "invalid_config", "not_found" or "session_closed".
struct ConfigUpdateError {
  Error error;
  std::uint64_t current_version = 0;
  std::vector<ConfigViolation> violations;
};

struct ConfigUpdateResult {
  RobotConfig config;
  std::uint64_t config_version = 0;
};

/// Session lifecycle, config versioning and channel attachment. Operations
/// on one session are serialized; different sessions run in parallel.
/// Broadcasts never block (connections queue).
class SessionRegistry {
 public:
  using IdSource = std::function<std::string()>;

  /// Loads existing sessions from the store; their connection flags are
  /// reset since no channel survives a restart.
  SessionRegistry(Store& store, IdSource ids = {});

  /// Errors: "invalid_config" (message lists violations), "id_exhausted",
  /// "store_failed".
  Expected<CommunicationSession> create_session(const RobotConfig& config);

  Expected<ConfigUpdateResult, ConfigUpdateError> update_config(const std::string& session_id,
                                                                const RobotConfigPatch& patch,
                                                                std::uint64_t expected_version);

  /// Errors: "not_found", "session_closed", "robot_already_connected".
  /// On success the connection receives a config_update snapshot.
  Expected<CommunicationSession> attach(const std::string& session_id, ChannelKind channel,
                                        std::shared_ptr<Connection> connection);

  /// Idempotent.
  void detach(const std::string& session_id, std::uint64_t connection_id);

  /// Marks closed, broadcasts session_closed, closes the channels. Closing a
  /// closed session succeeds without a broadcast.
  Expected<CommunicationSession> close_session(const std::string& session_id, const std::string& reason);

  Expected<CommunicationSession> get(const std::string& session_id) const;

  void send(const std::string& session_id, Audience audience, const Payload& payload);

  /// Builds the payload from the session under its lock, so e.g. a
  /// heartbeat cannot carry a config_version older than one already sent.
  void send_built(const std::string& session_id, Audience audience,
                  const std::function<Payload(const CommunicationSession&)>& build);

  /// Same, but only to the attached connection with `connection_id`.
  void send_built_to(const std::string& session_id, std::uint64_t connection_id,
                     const std::function<Payload(const CommunicationSession&)>& build);

  /// Sends to every channel of every active session and closes them after
  /// flushing, without marking the sessions closed.
  void disconnect_all(const Payload& farewell);

  std::size_t active_count() const;
  std::vector<std::string> session_ids() const;
  std::size_t control_count(const std::string& session_id) const;

 private:
  struct Entry {
    mutable std::mutex mutex;
    CommunicationSession session;
    std::shared_ptr<Connection> robot;
    std::vector<std::shared_ptr<Connection>> controls;
  };

  std::shared_ptr<Entry> find(const std::string& session_id) const;
  void refresh_flags(Entry& entry);
  void deliver_locked(Entry& entry, Audience audience, const Payload& payload);
  void drop_locked(Entry& entry, std::uint64_t connection_id);

  Store& store_;
  IdSource ids_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Entry>> entries_;
};

}  // namespace srw
