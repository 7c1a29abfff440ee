#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "srw/expected.hpp"

namespace srw {

/// Plain http/ws URL: scheme://host[:port][/path]. No TLS schemes.
struct Url {
  std::string scheme;
  std::string host;
  std::uint16_t port = 80;
  std::string path;  // "" or starting with '/'

  std::string authority() const { return host + ":" + std::to_string(port); }
};

Expected<Url> parse_url(std::string_view text);

/// "host:port" as used for bind addresses.
Expected<std::pair<std::string, std::uint16_t>> parse_host_port(std::string_view text);

}  // namespace srw
