#include <boost/asio/connect.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>

#include "srw/json_codec.hpp"
#include "srw/providers.hpp"
#include "srw/url.hpp"

namespace srw {
namespace {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
using tcp = asio::ip::tcp;

enum class AttemptOutcome { ok, connect_failed, timeout, failed };

std::string_view outcome_name(AttemptOutcome o) {
  switch (o) {
    case AttemptOutcome::ok:
      return "ok";
    case AttemptOutcome::connect_failed:
      return "connect_failed";
    case AttemptOutcome::timeout:
      return "timeout";
    case AttemptOutcome::failed:
      break;
  }
  return "failed";
}

struct Attempt {
  AttemptOutcome outcome = AttemptOutcome::failed;
  unsigned status = 0;
  std::string body;
  std::string detail;
};

/// One POST with a deadline covering connect, write and read.
Attempt post_once(const Url& url, const std::string& target, const std::string& body,
                  std::chrono::milliseconds timeout) {
  asio::io_context ioc;
  tcp::resolver resolver(ioc);
  beast::tcp_stream stream(ioc);
  Attempt attempt;
  beast::error_code ec;

  const auto run = [&] {
    ioc.restart();
    ioc.run();
  };

  tcp::resolver::results_type endpoints;
  resolver.async_resolve(url.host, std::to_string(url.port),
                         [&](beast::error_code e, tcp::resolver::results_type r) {
                           ec = e;
                           endpoints = std::move(r);
                         });
  run();
  if (ec) {
    attempt.outcome = AttemptOutcome::connect_failed;
    attempt.detail = "resolve: " + ec.message();
    return attempt;
  }

  stream.expires_after(timeout);
  stream.async_connect(endpoints, [&](beast::error_code e, const tcp::endpoint&) { ec = e; });
  run();
  if (ec) {
    attempt.outcome = ec == beast::error::timeout ? AttemptOutcome::timeout : AttemptOutcome::connect_failed;
    attempt.detail = "connect: " + ec.message();
    return attempt;
  }

  http::request<http::string_body> req{http::verb::post, target, 11};
  req.set(http::field::host, url.host);
  req.set(http::field::content_type, "application/json");
  req.set(http::field::user_agent, "srw-gateway");
  req.body() = body;
  req.prepare_payload();
  http::async_write(stream, req, [&](beast::error_code e, std::size_t) { ec = e; });
  run();
  if (!ec) {
    beast::flat_buffer buffer;
    http::response<http::string_body> res;
    http::async_read(stream, buffer, res, [&](beast::error_code e, std::size_t) { ec = e; });
    run();
    if (!ec) {
      attempt.outcome = AttemptOutcome::ok;
      attempt.status = res.result_int();
      attempt.body = std::move(res.body());
    }
  }
  if (ec) {
    attempt.outcome = ec == beast::error::timeout ? AttemptOutcome::timeout : AttemptOutcome::failed;
    attempt.detail = ec.message();
  }
  beast::error_code ignored;
  stream.socket().shutdown(tcp::socket::shutdown_both, ignored);
  return attempt;
}

}  // namespace

HttpLlm::HttpLlm(Options options) : options_(std::move(options)) {}

std::string HttpLlm::request_body(const LlmRequest& request) {
  Json messages = Json::array();
  for (const auto& m : request.messages) {
    messages.push_back(Json{{"role", to_string(m.role)}, {"content", m.content}});
  }
  Json body{{"model", request.model}, {"messages", std::move(messages)}, {"stream", false}};
  if (request.options.temperature) body["options"] = Json{{"temperature", *request.options.temperature}};
  return canonical_dump(body);
}

Expected<LlmResponse> HttpLlm::generate(const LlmRequest& request) {
  if (auto ok = validate_llm_request(request); !ok) return ok.error();
  auto url = parse_url(options_.base_url);
  if (!url) return make_error(std::string(provider_errc::llm_failed), url.error().message);

  const std::string body = request_body(request);
  const std::string target = url->path + "/api/chat";
  const auto started = SteadyClock::now();

  Attempt attempt;
  for (int n = 1; n <= 2; ++n) {
    const auto spent = std::chrono::duration_cast<std::chrono::milliseconds>(SteadyClock::now() - started);
    const auto remaining = std::max(request.options.timeout - spent, std::chrono::milliseconds{1});
    attempt = post_once(*url, target, body, remaining);
    if (options_.on_attempt) options_.on_attempt(n, outcome_name(attempt.outcome));
    if (attempt.outcome != AttemptOutcome::connect_failed) break;
  }

  switch (attempt.outcome) {
    case AttemptOutcome::ok:
      break;
    case AttemptOutcome::timeout:
      return make_error(std::string(provider_errc::llm_timeout), attempt.detail);
    case AttemptOutcome::connect_failed:
    case AttemptOutcome::failed:
      return make_error(std::string(provider_errc::llm_failed), attempt.detail);
  }
  if (attempt.status < 200 || attempt.status >= 300) {
    return make_error(std::string(provider_errc::llm_failed), "HTTP " + std::to_string(attempt.status));
  }

  const Json doc = Json::parse(attempt.body, nullptr, false);
  const auto malformed = [&](std::string why) {
    return make_error(std::string(provider_errc::llm_malformed), why + "; body: " + attempt.body);
  };
  if (doc.is_discarded() || !doc.is_object()) return malformed("response is not a JSON object");
  const auto message = doc.find("message");
  if (message == doc.end() || !message->is_object()) return malformed("missing message object");
  const auto content = message->find("content");
  if (content == message->end() || !content->is_string()) return malformed("missing message.content");

  LlmResponse response;
  response.text = content->get<std::string>();
  const auto model = doc.find("model");
  response.model = model != doc.end() && model->is_string() ? model->get<std::string>() : request.model;
  const auto total = doc.find("total_duration");
  response.gen_ms = total != doc.end() && total->is_number() ? total->get<double>() / 1e6 : elapsed_ms(started);
  response.raw_body = std::move(attempt.body);
  return response;
}

}  // namespace srw
