#include "srw/bcp47.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <string>
#include <vector>

namespace srw {
namespace {

constexpr std::array<std::string_view, 26> kGrandfathered{
    "en-gb-oed",  "i-ami",      "i-bnn",       "i-default", "i-enochian", "i-hak",  "i-klingon",
    "i-lux",      "i-mingo",    "i-navajo",    "i-pwn",     "i-tao",      "i-tay",  "i-tsu",
    "sgn-be-fr",  "sgn-be-nl",  "sgn-ch-de",   "art-lojban", "cel-gaulish", "no-bok", "no-nyn",
    "zh-guoyu",   "zh-hakka",   "zh-min",      "zh-min-nan", "zh-xiang"};

bool all_of(std::string_view s, int (*pred)(int)) {
  return std::all_of(s.begin(), s.end(), [pred](unsigned char c) { return pred(c) != 0; });
}
bool is_alpha(std::string_view s) { return all_of(s, std::isalpha); }
bool is_digit(std::string_view s) { return all_of(s, std::isdigit); }
bool is_alnum(std::string_view s) { return all_of(s, std::isalnum); }

bool is_variant(std::string_view s) {
  if (s.size() >= 5 && s.size() <= 8) return true;  // alnum already checked
  return s.size() == 4 && std::isdigit(static_cast<unsigned char>(s[0])) != 0;
}

bool is_singleton(std::string_view s) {
  return s.size() == 1 && s[0] != 'x';
}

}  // namespace

bool is_well_formed_language_tag(std::string_view tag) {
  std::string lower(tag);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (std::find(kGrandfathered.begin(), kGrandfathered.end(), lower) != kGrandfathered.end()) {
    return true;
  }

  std::vector<std::string_view> parts;
  std::string_view rest(lower);
  while (true) {
    const auto dash = rest.find('-');
    parts.push_back(rest.substr(0, dash));
    if (dash == std::string_view::npos) break;
    rest.remove_prefix(dash + 1);
  }
  for (auto p : parts) {
    if (p.empty() || p.size() > 8 || !is_alnum(p)) return false;
  }

  std::size_t i = 0;
  const std::size_t n = parts.size();

  auto private_use_from = [&](std::size_t at) {
    // "x" 1*("-" 1*8alphanum)
    return parts[at] == "x" && at + 1 < n;
  };

  if (private_use_from(0)) return true;

  // language
  const auto lang = parts[i];
  if (!is_alpha(lang) || lang.size() < 2) return false;
  ++i;
  if (lang.size() <= 3) {
    // up to three extlang subtags
    for (int ext = 0; ext < 3 && i < n && parts[i].size() == 3 && is_alpha(parts[i]); ++ext) ++i;
  }

  // script
  if (i < n && parts[i].size() == 4 && is_alpha(parts[i])) ++i;
  // region
  if (i < n && ((parts[i].size() == 2 && is_alpha(parts[i])) ||
                (parts[i].size() == 3 && is_digit(parts[i])))) {
    ++i;
  }
  // variants
  while (i < n && is_variant(parts[i])) ++i;
  // extensions
  while (i < n && is_singleton(parts[i])) {
    ++i;
    std::size_t subtags = 0;
    while (i < n && parts[i].size() >= 2) {
      ++i;
      ++subtags;
    }
    if (subtags == 0) return false;
  }
  // private use
  if (i < n && parts[i] == "x") return private_use_from(i);
  return i == n;
}

}  // namespace srw
