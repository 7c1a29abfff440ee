#include <gtest/gtest.h>

#include <boost/asio/io_context.hpp>
#include <boost/asio/ip/tcp.hpp>

#include "srw/gateway.hpp"
#include "srw/sim/client.hpp"
#include "test_support.hpp"

using namespace srw;
using namespace std::chrono_literals;
using sim::Received;
using sim::RestClient;
using sim::WsClient;

namespace {

struct Server {
  explicit Server(std::chrono::milliseconds heartbeat = 5000ms, Providers providers = mock_providers()) {
    GatewayConfig c;
    c.bind_port = 0;
    c.data_dir = dir.path();
    c.heartbeat = heartbeat;
    auto started = Gateway::start(c, std::move(providers));
    if (!started) throw std::runtime_error(started.error().message);
    gateway = std::move(*started);
    url = *parse_url(gateway->base_url());
  }

  RestClient rest() const { return RestClient(url); }

  std::unique_ptr<WsClient> ws(ChannelKind kind, const std::string& id) const {
    auto c = WsClient::connect(url, kind, id);
    if (!c) throw std::runtime_error(c.error().message);
    return std::move(*c);
  }

  test::TempDir dir;
  std::unique_ptr<Gateway> gateway;
  Url url;
};

std::function<bool(const Received&)> of(MessageType t) {
  return [t](const Received& r) { return r.is(t); };
}

std::function<bool(const Received&)> error_with(const std::string& code) {
  return [code](const Received& r) {
    return r.is(MessageType::error) && std::get<ErrorReport>(r.envelope->payload).code == code;
  };
}

std::function<bool(const Received&)> phase(Phase p) {
  return [p](const Received& r) {
    return r.is(MessageType::state_update) && std::get<StateUpdate>(r.envelope->payload).state.phase == p;
  };
}

template <typename T>
const T& payload(const Received& r) {
  return std::get<T>(r.envelope->payload);
}

}  // namespace

TEST(GatewayConfig, FromEnvironment) {
  std::map<std::string, std::string> env{{"SRW_BIND_ADDR", "0.0.0.0:9001"},
                                         {"SRW_PROVIDER_MODE", "live"},
                                         {"SRW_HEARTBEAT_MS", "2500"},
                                         {"SRW_HISTORY_TURNS", "7"},
                                         {"SRW_DATA_DIR", "/tmp/x"},
                                         {"SRW_LLM_TEMPERATURE", "0.2"},
                                         {"SRW_LLM_BASE_URL", "http://llm:1234"}};
  const auto get = [&](const char* k) -> const char* {
    const auto it = env.find(k);
    return it == env.end() ? nullptr : it->second.c_str();
  };
  auto c = gateway_config_from_env({}, get);
  ASSERT_TRUE(c) << c.error().message;
  EXPECT_EQ(c->bind_host, "0.0.0.0");
  EXPECT_EQ(c->bind_port, 9001);
  EXPECT_EQ(c->provider_mode, ProviderMode::live);
  EXPECT_EQ(c->heartbeat, 2500ms);
  EXPECT_EQ(c->history_turns, 7u);
  EXPECT_EQ(c->data_dir, "/tmp/x");
  EXPECT_EQ(c->llm_base_url, "http://llm:1234");
  EXPECT_DOUBLE_EQ(c->llm_temperature, 0.2);

  for (const auto& [key, bad] : std::vector<std::pair<std::string, std::string>>{
           {"SRW_PROVIDER_MODE", "fake"}, {"SRW_HEARTBEAT_MS", "12x"}, {"SRW_HEARTBEAT_MS", "10"},
           {"SRW_BIND_ADDR", "nope"}, {"SRW_HISTORY_TURNS", "0"}, {"SRW_LLM_BASE_URL", "ftp://x"},
           {"SRW_LLM_TEMPERATURE", "hot"}, {"SRW_LLM_TEMPERATURE", "2.5"}}) {
    auto saved = env;
    env[key] = bad;
    auto r = gateway_config_from_env({}, get);
    EXPECT_FALSE(r) << key << "=" << bad;
    if (!r) {
      EXPECT_EQ(r.error().code, "config_error");
    }
    env = saved;
  }
  auto defaults = gateway_config_from_env({}, [](const char*) -> const char* { return nullptr; });
  ASSERT_TRUE(defaults);
  EXPECT_EQ(defaults->bind_port, 8080);
}

TEST(OutboundQueue, StampsAndOverflows) {
  OutboundQueue q(3);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(q.push("s", Heartbeat{}), OutboundQueue::Push::queued);
  EXPECT_EQ(q.push("s", Heartbeat{}), OutboundQueue::Push::overflow);
  EXPECT_TRUE(q.overflowed());
  EXPECT_EQ(q.size(), 4u);
  EXPECT_EQ(q.push("s", Heartbeat{}), OutboundQueue::Push::refused);
  std::uint64_t expected = 0;
  std::optional<Envelope> last;
  while (const auto* f = q.front()) {
    auto env = decode(*f);
    ASSERT_TRUE(env);
    EXPECT_EQ(env->seq, expected++);
    last = *env;
    q.pop();
  }
  ASSERT_TRUE(last);
  EXPECT_EQ(std::get<ErrorReport>(last->payload).code, "slow_consumer");

  OutboundQueue r(2);
  r.refuse();
  EXPECT_EQ(r.push("s", Heartbeat{}), OutboundQueue::Push::refused);
}

TEST(Gateway, BindFailure) {
  boost::asio::io_context ioc;
  boost::asio::ip::tcp::acceptor taken(ioc, {boost::asio::ip::make_address("127.0.0.1"), 0});
  test::TempDir dir;
  GatewayConfig c;
  c.bind_port = taken.local_endpoint().port();
  c.data_dir = dir.path();
  auto g = Gateway::start(c, mock_providers());
  ASSERT_FALSE(g);
  EXPECT_EQ(g.error().code, "bind_failed");

  c.bind_port = 0;
  c.heartbeat = 10ms;
  EXPECT_EQ(Gateway::start(c, mock_providers()).error().code, "config_error");
}

TEST(Gateway, RestLifecycle) {
  Server s;
  const auto rest = s.rest();
  auto health = rest.request("GET", "/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(*health->json(), (Json{{"status", "ok"}, {"sessions", 0}}));

  auto created = rest.create_session(Json{{"voice_gender", "female"}});
  ASSERT_TRUE(created) << created.error().message;
  EXPECT_EQ(created->config.voice_gender, VoiceGender::female);
  EXPECT_EQ(created->config.llm_model, "llama3.2");
  const auto id = created->id;

  auto got = rest.get_session(id);
  EXPECT_EQ(got->status, 200);
  EXPECT_EQ((*got->json())["session"]["id"], id);

  auto patched = rest.patch_config(id, Json{{"system_prompt", "be brief"}}, 1);
  EXPECT_EQ(patched->status, 200);
  EXPECT_EQ((*patched->json())["config_version"], 2);

  auto conflict = rest.patch_config(id, Json{{"system_prompt", "late"}}, 1);
  EXPECT_EQ(conflict->status, 409);
  EXPECT_EQ((*conflict->json())["error"]["code"], "version_conflict");
  EXPECT_EQ((*conflict->json())["error"]["current_version"], 2);

  auto invalid = rest.patch_config(id, Json{{"language", "!!"}}, 2);
  EXPECT_EQ(invalid->status, 422);
  EXPECT_EQ((*invalid->json())["error"]["violations"][0]["field"], "language");

  EXPECT_EQ(rest.patch_config(id, Json{{"bogus", 1}}, 2)->status, 400);
  EXPECT_EQ(rest.request("PATCH", "/api/sessions/" + id + "/config", Json{{"patch", Json::object()}})->status, 400);
  EXPECT_EQ(rest.get_session("missing-id-000")->status, 404);
  EXPECT_EQ(rest.request("GET", "/nowhere")->status, 404);
  EXPECT_EQ(rest.create_session(Json{{"llm_model", ""}}).error().code, "http_422");

  auto transcript = rest.transcript(id);
  ASSERT_TRUE(transcript);
  EXPECT_EQ(transcript->substr(0, 17), "{\"communication\":");

  EXPECT_EQ(rest.delete_session(id)->status, 200);
  EXPECT_EQ(rest.delete_session(id)->status, 200);
  EXPECT_EQ(rest.patch_config(id, Json{{"system_prompt", "x"}}, 2)->status, 410);
  EXPECT_EQ((*rest.request("GET", "/healthz")->json())["sessions"], 0);
}

TEST(Gateway, TextTurnOverWebSocket) {
  Server s;
  const auto id = s.rest().create_session(Json{{"llm_model", "echo"}})->id;
  auto robot = s.ws(ChannelKind::robot, id);
  auto control = s.ws(ChannelKind::control, id);
  ASSERT_TRUE(robot->wait_for(of(MessageType::config_update), 2s));
  ASSERT_TRUE(robot->wait_for(of(MessageType::state_update), 2s));

  ASSERT_TRUE(robot->send(UserText{"hello"}));
  auto reply = robot->wait_for(of(MessageType::robot_reply), 5s);
  ASSERT_TRUE(reply);
  const auto r = payload<RobotReply>(robot->at(*reply));
  EXPECT_EQ(r.text, "echo: hello");
  EXPECT_TRUE(r.audio);
  EXPECT_EQ(r.in_reply_to, id + "#0");
  ASSERT_TRUE(control->wait_for(of(MessageType::robot_reply), 2s));

  ASSERT_TRUE(robot->send(StateUpdate{AvatarState{Phase::idle, false}}));
  ASSERT_TRUE(control->wait_for(phase(Phase::idle), 2s, 1));
  EXPECT_EQ(robot->seq_violations(), 0u);
  EXPECT_EQ(control->seq_violations(), 0u);
  EXPECT_EQ(robot->decode_failures(), 0u);
  EXPECT_EQ(*s.gateway->store().message_count(id), 2u);
}

TEST(Gateway, ChannelAuthorization) {
  Server s;
  const auto id = s.rest().create_session()->id;
  auto robot = s.ws(ChannelKind::robot, id);
  auto control = s.ws(ChannelKind::control, id);

  ASSERT_TRUE(control->send(UserText{"sneaky"}));
  auto denied = control->wait_for(error_with("not_authorized"), 2s);
  ASSERT_TRUE(denied);
  EXPECT_EQ(payload<ErrorReport>(control->at(*denied)).in_reply_to, 0u);

  ASSERT_TRUE(robot->send(ConfigUpdate{RobotConfig{}, 1}));
  ASSERT_TRUE(robot->wait_for(error_with("not_authorized"), 2s));
  ASSERT_TRUE(robot->send(StateUpdate{AvatarState{Phase::thinking, false}}));
  ASSERT_TRUE(robot->wait_for(error_with("not_authorized"), 2s, 3));
  ASSERT_TRUE(robot->send(Heartbeat{}));
  EXPECT_EQ(s.gateway->registry().get(id)->config_version, 1u);
}

TEST(Gateway, DisabledModeIsReported) {
  Server s;
  const auto id =
      s.rest().create_session(Json{{"modes", {{"text_enabled", false}, {"push_to_talk_enabled", true}}}})->id;
  auto robot = s.ws(ChannelKind::robot, id);
  ASSERT_TRUE(robot->send(UserText{"hi"}));
  auto e = robot->wait_for(error_with("mode_disabled"), 2s);
  ASSERT_TRUE(e);
  EXPECT_EQ(payload<ErrorReport>(robot->at(*e)).in_reply_to, 0u);
}

TEST(Gateway, MalformedFramesDoNotKillTheChannel) {
  Server s;
  const auto id = s.rest().create_session(Json{{"llm_model", "echo"}})->id;
  auto robot = s.ws(ChannelKind::robot, id);
  ASSERT_TRUE(robot->send_raw("{this is not json"));
  ASSERT_TRUE(robot->wait_for(error_with("malformed"), 2s));
  ASSERT_TRUE(robot->send_raw(R"({"v":1,"type":"teleport","session_id":"x","seq":0,"ts":1,"payload":{}})"));
  ASSERT_TRUE(robot->wait_for(error_with("unknown_type"), 2s));
  ASSERT_TRUE(robot->send(UserText{"still here"}));
  ASSERT_TRUE(robot->wait_for(of(MessageType::robot_reply), 5s));
  EXPECT_FALSE(robot->closed());
}

TEST(Gateway, SeqViolationAndSessionMismatch) {
  Server s;
  const auto id = s.rest().create_session()->id;
  auto control = s.ws(ChannelKind::control, id);
  const auto frame = [&](std::uint64_t seq, const std::string& sid) {
    return *encode(Envelope{kProtocolVersion, sid, seq, now_epoch_ms(), Heartbeat{}});
  };
  ASSERT_TRUE(control->send_raw(frame(5, id)));
  auto v = control->wait_for(error_with("seq_violation"), 2s);
  ASSERT_TRUE(v);
  EXPECT_EQ(payload<ErrorReport>(control->at(*v)).in_reply_to, 5u);
  ASSERT_TRUE(control->send_raw(frame(6, "other-session-001")));
  ASSERT_TRUE(control->wait_for(error_with("session_mismatch"), 2s));
}

TEST(Gateway, AttachFailures) {
  Server s;
  const auto id = s.rest().create_session()->id;
  auto robot = s.ws(ChannelKind::robot, id);
  auto second = s.ws(ChannelKind::robot, id);
  ASSERT_TRUE(second->wait_for(error_with("robot_already_connected"), 2s));
  EXPECT_TRUE(second->wait_closed(2s));
  EXPECT_FALSE(robot->closed());

  auto ghost = s.ws(ChannelKind::control, "no-such-session-000");
  ASSERT_TRUE(ghost->wait_for(error_with("not_found"), 2s));
  EXPECT_TRUE(ghost->wait_closed(2s));

  EXPECT_FALSE(WsClient::connect(s.url, ChannelKind::robot, ""));
}

TEST(Gateway, ControlConfigUpdateBroadcasts) {
  Server s;
  const auto id = s.rest().create_session()->id;
  auto robot = s.ws(ChannelKind::robot, id);
  auto control = s.ws(ChannelKind::control, id);
  RobotConfig next;
  next.voice_gender = VoiceGender::male;
  ASSERT_TRUE(control->send(ConfigUpdate{next, 1}));
  auto seen = robot->wait_for(
      [](const Received& r) { return r.is(MessageType::config_update) && payload<ConfigUpdate>(r).config_version == 2; },
      2s);
  ASSERT_TRUE(seen);
  EXPECT_EQ(payload<ConfigUpdate>(robot->at(*seen)).config.voice_gender, VoiceGender::male);

  ASSERT_TRUE(control->send(ConfigUpdate{next, 1}));
  auto conflict = control->wait_for(error_with("version_conflict"), 2s);
  ASSERT_TRUE(conflict);
  EXPECT_NE(payload<ErrorReport>(control->at(*conflict)).message.find("(current_version 2)"), std::string::npos);
}

TEST(Gateway, ControlCloseEndsSession) {
  Server s;
  const auto id = s.rest().create_session()->id;
  auto robot = s.ws(ChannelKind::robot, id);
  auto control = s.ws(ChannelKind::control, id);
  ASSERT_TRUE(control->send(SessionClosed{"done for today"}));
  auto closed = robot->wait_for(of(MessageType::session_closed), 2s);
  ASSERT_TRUE(closed);
  EXPECT_EQ(payload<SessionClosed>(robot->at(*closed)).reason, "done for today");
  EXPECT_TRUE(robot->wait_closed(2s));
  EXPECT_TRUE(control->wait_closed(2s));
  EXPECT_EQ(s.rest().get_session(id)->json()->at("session").at("status"), "closed");
}

TEST(Gateway, HeartbeatsFollowConnectionState) {
  Server s(1000ms);
  const auto id = s.rest().create_session()->id;
  auto control = s.ws(ChannelKind::control, id);
  auto robot = s.ws(ChannelKind::robot, id);
  auto first = control->wait_for(
      [](const Received& r) { return r.is(MessageType::heartbeat) && payload<Heartbeat>(r).robot_connected; }, 3s);
  ASSERT_TRUE(first);
  EXPECT_TRUE(payload<Heartbeat>(control->at(*first)).control_connected);
  EXPECT_FALSE(robot->wait_for(of(MessageType::heartbeat), 1500ms));

  robot->close();
  auto after = control->wait_for(
      [](const Received& r) { return r.is(MessageType::heartbeat) && !payload<Heartbeat>(r).robot_connected; }, 3s,
      *first + 1);
  ASSERT_TRUE(after);

  ASSERT_TRUE(s.rest().patch_config(id, Json{{"system_prompt", "v2"}}, 1));
  auto v2 = control->wait_for(
      [](const Received& r) { return r.is(MessageType::heartbeat) && payload<Heartbeat>(r).config_version == 2; }, 3s,
      *after + 1);
  ASSERT_TRUE(v2);
  // no heartbeat may report a version older than a config_update already sent
  std::uint64_t version = 0;
  for (const auto& r : control->snapshot()) {
    if (r.is(MessageType::config_update)) version = payload<ConfigUpdate>(r).config_version;
    if (r.is(MessageType::heartbeat)) {
      EXPECT_GE(payload<Heartbeat>(r).config_version, version);
    }
  }
}

TEST(Gateway, ControlGetsStatusOnAttach) {
  Server s;
  const auto id = s.rest().create_session()->id;
  auto robot = s.ws(ChannelKind::robot, id);
  ASSERT_TRUE(robot->wait_for(of(MessageType::state_update), 2s));
  auto first = s.ws(ChannelKind::control, id);
  auto beat = first->wait_for(of(MessageType::heartbeat), 1s);
  ASSERT_TRUE(beat);
  EXPECT_TRUE(payload<Heartbeat>(first->at(*beat)).robot_connected);
  // a second control gets its own beat without doubling up the first one
  auto second = s.ws(ChannelKind::control, id);
  ASSERT_TRUE(second->wait_for(of(MessageType::heartbeat), 1s));
  EXPECT_FALSE(first->wait_for(of(MessageType::heartbeat), 300ms, *beat + 1));
  EXPECT_FALSE(robot->wait_for(of(MessageType::heartbeat), 10ms));
}

TEST(Gateway, ShutdownSaysGoodbye) {
  Server s;
  const auto id = s.rest().create_session()->id;
  auto robot = s.ws(ChannelKind::robot, id);
  ASSERT_TRUE(robot->wait_for(of(MessageType::state_update), 2s));
  s.gateway->shutdown();
  auto bye = robot->wait_for(of(MessageType::session_closed), 3s);
  ASSERT_TRUE(bye);
  EXPECT_EQ(payload<SessionClosed>(robot->at(*bye)).reason, "shutdown");
  EXPECT_TRUE(robot->wait_closed(3s));
  s.gateway->shutdown();
  EXPECT_EQ(s.gateway->store().load_communication(id)->status, SessionStatus::active);
}

TEST(Gateway, SessionsSurviveRestart) {
  test::TempDir dir;
  GatewayConfig c;
  c.bind_port = 0;
  c.data_dir = dir.path();
  std::string id;
  {
    auto g = *Gateway::start(c, mock_providers());
    RestClient rest(*parse_url(g->base_url()));
    id = rest.create_session(Json{{"llm_model", "echo"}})->id;
    auto robot = *WsClient::connect(*parse_url(g->base_url()), ChannelKind::robot, id);
    robot->send(UserText{"remember me"});
    ASSERT_TRUE(robot->wait_for(of(MessageType::robot_reply), 5s));
    g->shutdown();
  }
  auto g = *Gateway::start(c, mock_providers());
  RestClient rest(*parse_url(g->base_url()));
  auto session = rest.get_session(id);
  ASSERT_EQ(session->status, 200);
  EXPECT_EQ(session->json()->at("session").at("robot_connected"), false);
  auto robot = *WsClient::connect(*parse_url(g->base_url()), ChannelKind::robot, id);
  ASSERT_TRUE(robot->wait_for(of(MessageType::config_update), 2s));
  EXPECT_EQ(*g->store().message_count(id), 2u);
}
