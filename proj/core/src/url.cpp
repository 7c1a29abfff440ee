#include "srw/url.hpp"

#include <charconv>

namespace srw {
namespace {

Expected<std::uint16_t> parse_port(std::string_view text) {
  unsigned value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value > 65535) {
    return make_error("bad_url", "invalid port \"" + std::string(text) + "\"");
  }
  return static_cast<std::uint16_t>(value);
}

}  // namespace

Expected<std::pair<std::string, std::uint16_t>> parse_host_port(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    return make_error("bad_url", "expected host:port, got \"" + std::string(text) + "\"");
  }
  auto port = parse_port(text.substr(colon + 1));
  if (!port) return port.error();
  return std::pair{std::string(text.substr(0, colon)), *port};
}

Expected<Url> parse_url(std::string_view text) {
  const auto sep = text.find("://");
  if (sep == std::string_view::npos) return make_error("bad_url", "missing scheme in \"" + std::string(text) + "\"");
  Url url;
  url.scheme = std::string(text.substr(0, sep));
  if (url.scheme != "http" && url.scheme != "ws") {
    return make_error("bad_url", "unsupported scheme \"" + url.scheme + "\"");
  }
  auto rest = text.substr(sep + 3);
  const auto slash = rest.find('/');
  const auto authority = rest.substr(0, slash);
  if (slash != std::string_view::npos) url.path = std::string(rest.substr(slash));
  while (!url.path.empty() && url.path.back() == '/') url.path.pop_back();
  const auto colon = authority.rfind(':');
  if (colon == std::string_view::npos) {
    url.host = std::string(authority);
  } else {
    url.host = std::string(authority.substr(0, colon));
    auto port = parse_port(authority.substr(colon + 1));
    if (!port) return port.error();
    url.port = *port;
  }
  if (url.host.empty()) return make_error("bad_url", "missing host in \"" + std::string(text) + "\"");
  return url;
}

}  // namespace srw
