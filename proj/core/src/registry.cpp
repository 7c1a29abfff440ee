#include "srw/registry.hpp"

#include <algorithm>
#include <cstdio>

namespace srw {
namespace {

const std::vector<std::string_view> kAdjectives{
    "able",   "amber",  "ample",  "azure",  "bold",   "brave",  "brief",  "bright", "brisk",  "calm",
    "clever", "cosy",   "crisp",  "curly",  "dapper", "daring", "deft",   "eager",  "early",  "fancy",
    "fair",   "fleet",  "fond",   "frank",  "fresh",  "gentle", "giddy",  "glad",   "golden", "grand",
    "happy",  "hardy",  "honest", "humble", "jolly",  "keen",   "kind",   "lively", "loyal",  "lucky",
    "merry",  "mellow", "mighty", "modest", "neat",   "nimble", "noble",  "plucky", "polite", "proud",
    "quick",  "quiet",  "rapid",  "ready",  "rosy",   "rustic", "shiny",  "silver", "smart",  "snowy",
    "sunny",  "swift",  "tidy",   "vivid",  "warm",   "wise",   "witty",  "zesty",  "cheery", "breezy",
};

const std::vector<std::string_view> kNouns{
    "otter",   "badger",  "beaver", "bison",   "condor", "crane",   "dingo",   "dolphin", "eagle",  "falcon",
    "ferret",  "finch",   "fox",    "gecko",   "gibbon", "heron",   "hippo",   "ibis",    "jackal", "jaguar",
    "koala",   "lemur",   "llama",  "lynx",    "magpie", "marmot",  "meerkat", "mole",    "moose",  "newt",
    "ocelot",  "oriole",  "osprey", "owl",     "panda",  "parrot",  "pelican", "penguin", "puffin", "quail",
    "rabbit",  "raven",   "robin",  "salmon",  "seal",   "shrew",   "skunk",   "sloth",   "sparrow", "stork",
    "swan",    "tapir",   "tiger",  "toucan",  "turtle", "walrus",  "weasel",  "whale",   "wombat", "wren",
    "yak",     "zebra",   "alpaca", "bobcat",  "cougar", "donkey",  "egret",   "gopher",  "hamster", "impala",
};

Error invalid_config_error(const std::vector<ConfigViolation>& violations) {
  std::string message;
  for (const auto& v : violations) {
    if (!message.empty()) message += "; ";
    message += v.field + ": " + v.message;
  }
  return make_error("invalid_config", message);
}

}  // namespace

SessionIdGenerator::SessionIdGenerator(std::uint64_t seed) : rng_(seed) {}

SessionIdGenerator::SessionIdGenerator() : rng_(std::random_device{}()) {}

const std::vector<std::string_view>& SessionIdGenerator::adjectives() { return kAdjectives; }
const std::vector<std::string_view>& SessionIdGenerator::nouns() { return kNouns; }

std::string SessionIdGenerator::next() {
  std::uniform_int_distribution<std::size_t> adj(0, kAdjectives.size() - 1);
  std::uniform_int_distribution<std::size_t> noun(0, kNouns.size() - 1);
  std::uniform_int_distribution<int> digits(0, 999);
  char number[4];
  std::snprintf(number, sizeof number, "%03d", digits(rng_));
  std::string id;
  id.reserve(24);
  id += kAdjectives[adj(rng_)];
  id += '-';
  id += kNouns[noun(rng_)];
  id += '-';
  id += number;
  return id;
}

SessionRegistry::SessionRegistry(Store& store, IdSource ids) : store_(store), ids_(std::move(ids)) {
  if (!ids_) {
    ids_ = [gen = std::make_shared<SessionIdGenerator>()] { return gen->next(); };
  }
  for (auto session : store_.communications()) {
    auto entry = std::make_shared<Entry>();
    const bool stale = session.robot_connected || session.control_connected;
    session.robot_connected = false;
    session.control_connected = false;
    if (stale) (void)store_.save_communication(session);
    entry->session = std::move(session);
    entries_.emplace(entry->session.id, std::move(entry));
  }
}

std::shared_ptr<SessionRegistry::Entry> SessionRegistry::find(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(session_id);
  return it == entries_.end() ? nullptr : it->second;
}

Expected<CommunicationSession> SessionRegistry::create_session(const RobotConfig& config) {
  if (auto violations = validate_config(config); !violations.empty()) return invalid_config_error(violations);

  auto entry = std::make_shared<Entry>();
  entry->session.created_at = now_epoch_ms();
  entry->session.config = config;
  entry->session.config_version = 1;
  entry->session.status = SessionStatus::active;

  std::unique_lock lock(mutex_);
  bool placed = false;
  for (int attempt = 0; attempt < 5 && !placed; ++attempt) {
    auto id = ids_();
    if (!entries_.contains(id)) {
      entry->session.id = std::move(id);
      placed = true;
    }
  }
  if (!placed) return make_error("id_exhausted", "no free session id after 5 draws");
  if (auto saved = store_.save_communication(entry->session); !saved) return saved.error();
  entries_.emplace(entry->session.id, entry);
  return entry->session;
}

Expected<ConfigUpdateResult, ConfigUpdateError> SessionRegistry::update_config(const std::string& session_id,
                                                                               const RobotConfigPatch& patch,
                                                                               std::uint64_t expected_version) {
  const auto entry = find(session_id);
  if (!entry) return ConfigUpdateError{make_error("not_found", "unknown session " + session_id), 0, {}};
  std::lock_guard lock(entry->mutex);
  auto& session = entry->session;
  if (session.status == SessionStatus::closed) {
    return ConfigUpdateError{make_error("session_closed", "session is closed"), session.config_version, {}};
  }
  if (expected_version != session.config_version) {
    return ConfigUpdateError{make_error("version_conflict", "current version is " +
                                                                std::to_string(session.config_version)),
                             session.config_version,
                             {}};
  }
  const RobotConfig merged = apply_patch(session.config, patch);
  if (auto violations = validate_config(merged); !violations.empty()) {
    return ConfigUpdateError{invalid_config_error(violations), session.config_version, std::move(violations)};
  }

  CommunicationSession next = session;
  next.config = merged;
  next.config_version = session.config_version + 1;
  if (auto saved = store_.save_communication(next); !saved) {
    return ConfigUpdateError{saved.error(), session.config_version, {}};
  }
  session = std::move(next);
  deliver_locked(*entry, Audience::all, ConfigUpdate{session.config, session.config_version});
  return ConfigUpdateResult{session.config, session.config_version};
}

Expected<CommunicationSession> SessionRegistry::attach(const std::string& session_id, ChannelKind channel,
                                                       std::shared_ptr<Connection> connection) {
  const auto entry = find(session_id);
  if (!entry) return make_error("not_found", "unknown session " + session_id);
  std::lock_guard lock(entry->mutex);
  if (entry->session.status == SessionStatus::closed) return make_error("session_closed", "session is closed");
  if (channel == ChannelKind::robot) {
    if (entry->robot) return make_error("robot_already_connected", "robot already connected");
    entry->robot = connection;
  } else {
    entry->controls.push_back(connection);
  }
  if (!connection->deliver(session_id, ConfigUpdate{entry->session.config, entry->session.config_version})) {
    drop_locked(*entry, connection->connection_id());
  }
  refresh_flags(*entry);
  return entry->session;
}

void SessionRegistry::detach(const std::string& session_id, std::uint64_t connection_id) {
  const auto entry = find(session_id);
  if (!entry) return;
  std::lock_guard lock(entry->mutex);
  drop_locked(*entry, connection_id);
  refresh_flags(*entry);
}

void SessionRegistry::drop_locked(Entry& entry, std::uint64_t connection_id) {
  if (entry.robot && entry.robot->connection_id() == connection_id) entry.robot.reset();
  std::erase_if(entry.controls, [&](const auto& c) { return c->connection_id() == connection_id; });
}

void SessionRegistry::refresh_flags(Entry& entry) {
  const bool robot = entry.robot != nullptr;
  const bool control = !entry.controls.empty();
  if (robot == entry.session.robot_connected && control == entry.session.control_connected) return;
  entry.session.robot_connected = robot;
  entry.session.control_connected = control;
  // Flags are advisory metadata; a failed write must not break routing.
  (void)store_.save_communication(entry.session);
}

void SessionRegistry::deliver_locked(Entry& entry, Audience audience, const Payload& payload) {
  std::vector<std::uint64_t> failed;
  if (audience != Audience::control && entry.robot) {
    if (!entry.robot->deliver(entry.session.id, payload)) failed.push_back(entry.robot->connection_id());
  }
  if (audience != Audience::robot) {
    for (const auto& c : entry.controls) {
      if (!c->deliver(entry.session.id, payload)) failed.push_back(c->connection_id());
    }
  }
  if (failed.empty()) return;
  for (const auto id : failed) drop_locked(entry, id);
  refresh_flags(entry);
}

Expected<CommunicationSession> SessionRegistry::close_session(const std::string& session_id,
                                                              const std::string& reason) {
  const auto entry = find(session_id);
  if (!entry) return make_error("not_found", "unknown session " + session_id);
  std::lock_guard lock(entry->mutex);
  if (entry->session.status == SessionStatus::closed) return entry->session;

  CommunicationSession closed = entry->session;
  closed.status = SessionStatus::closed;
  if (auto saved = store_.save_communication(closed); !saved) return saved.error();
  entry->session = closed;

  deliver_locked(*entry, Audience::all, SessionClosed{reason});
  if (entry->robot) entry->robot->close_after_flush(reason);
  for (const auto& c : entry->controls) c->close_after_flush(reason);
  entry->robot.reset();
  entry->controls.clear();
  refresh_flags(*entry);
  return entry->session;
}

Expected<CommunicationSession> SessionRegistry::get(const std::string& session_id) const {
  const auto entry = find(session_id);
  if (!entry) return make_error("not_found", "unknown session " + session_id);
  std::lock_guard lock(entry->mutex);
  return entry->session;
}

void SessionRegistry::send(const std::string& session_id, Audience audience, const Payload& payload) {
  const auto entry = find(session_id);
  if (!entry) return;
  std::lock_guard lock(entry->mutex);
  deliver_locked(*entry, audience, payload);
}

void SessionRegistry::send_built(const std::string& session_id, Audience audience,
                                 const std::function<Payload(const CommunicationSession&)>& build) {
  const auto entry = find(session_id);
  if (!entry) return;
  std::lock_guard lock(entry->mutex);
  deliver_locked(*entry, audience, build(entry->session));
}

void SessionRegistry::send_built_to(const std::string& session_id, std::uint64_t connection_id,
                                    const std::function<Payload(const CommunicationSession&)>& build) {
  const auto entry = find(session_id);
  if (!entry) return;
  std::lock_guard lock(entry->mutex);
  std::shared_ptr<Connection> target;
  if (entry->robot && entry->robot->connection_id() == connection_id) target = entry->robot;
  for (const auto& c : entry->controls) {
    if (c->connection_id() == connection_id) target = c;
  }
  if (!target || target->deliver(session_id, build(entry->session))) return;
  drop_locked(*entry, connection_id);
  refresh_flags(*entry);
}

void SessionRegistry::disconnect_all(const Payload& farewell) {
  std::vector<std::shared_ptr<Entry>> entries;
  {
    std::shared_lock lock(mutex_);
    for (const auto& [id, e] : entries_) entries.push_back(e);
  }
  for (const auto& entry : entries) {
    std::lock_guard lock(entry->mutex);
    if (!entry->robot && entry->controls.empty()) continue;
    deliver_locked(*entry, Audience::all, farewell);
    if (entry->robot) entry->robot->close_after_flush("shutdown");
    for (const auto& c : entry->controls) c->close_after_flush("shutdown");
    entry->robot.reset();
    entry->controls.clear();
    refresh_flags(*entry);
  }
}

std::size_t SessionRegistry::active_count() const {
  std::shared_lock lock(mutex_);
  std::size_t n = 0;
  for (const auto& [id, e] : entries_) {
    std::lock_guard entry_lock(e->mutex);
    if (e->session.status == SessionStatus::active) ++n;
  }
  return n;
}

std::vector<std::string> SessionRegistry::session_ids() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> ids;
  ids.reserve(entries_.size());
  for (const auto& [id, e] : entries_) ids.push_back(id);
  return ids;
}

std::size_t SessionRegistry::control_count(const std::string& session_id) const {
  const auto entry = find(session_id);
  if (!entry) return 0;
  std::lock_guard lock(entry->mutex);
  return entry->controls.size();
}

}  // namespace srw
