#include <gtest/gtest.h>

#include <cctype>
#include <random>
#include <regex>
#include <string>
#include <vector>

#include "srw/bcp47.hpp"

namespace {

// Independent oracle: the RFC 5646 ABNF flattened into one regular
// expression plus the grandfathered list.
bool oracle(const std::string& tag) {
  static const std::regex langtag(
      "^(?:(?:[a-z]{2,3}(?:-[a-z]{3}){0,3}|[a-z]{4}|[a-z]{5,8})"  // language
      "(?:-[a-z]{4})?"                                            // script
      "(?:-(?:[a-z]{2}|[0-9]{3}))?"                               // region
      "(?:-(?:[a-z0-9]{5,8}|[0-9][a-z0-9]{3}))*"                  // variants
      "(?:-[0-9a-wy-z](?:-[a-z0-9]{2,8})+)*"                      // extensions
      "(?:-x(?:-[a-z0-9]{1,8})+)?"                                // private use
      "|x(?:-[a-z0-9]{1,8})+)$",
      std::regex::icase | std::regex::ECMAScript);
  static const std::vector<std::string> grandfathered{
      "en-gb-oed", "i-ami",      "i-bnn",       "i-default", "i-enochian", "i-hak",   "i-klingon",
      "i-lux",     "i-mingo",    "i-navajo",    "i-pwn",     "i-tao",      "i-tay",   "i-tsu",
      "sgn-be-fr", "sgn-be-nl",  "sgn-ch-de",   "art-lojban", "cel-gaulish", "no-bok", "no-nyn",
      "zh-guoyu",  "zh-hakka",   "zh-min",      "zh-min-nan", "zh-xiang"};
  std::string lower = tag;
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (const auto& g : grandfathered) {
    if (lower == g) return true;
  }
  return std::regex_match(tag, langtag);
}

struct Case {
  const char* tag;
  bool well_formed;
};

const std::vector<Case> kCases{
    {"en", true},
    {"en-US", true},
    {"de-DE", true},
    {"zh-Hant-TW", true},
    {"sr-Latn-RS", true},
    {"es-419", true},
    {"sl-rozaj-biske", true},
    {"de-CH-1901", true},
    {"hy-Latn-IT-arevela", true},
    {"zh-yue-HK", true},
    {"en-US-x-twain", true},
    {"x-whatever", true},
    {"i-klingon", true},
    {"en-GB-oed", true},
    {"sgn-BE-FR", true},
    {"art-lojban", true},
    {"EN-us", true},
    {"qaa-Qaaa-QM-x-southern", true},
    {"en-a-bbb-x-a-ccc", true},
    {"de-Qaaa", true},
    {"ar-afb-Arab-EG", true},
    {"yue", true},
    {"abcd", true},
    {"abcdefgh", true},
    {"fr-CA", true},
    {"ja-Jpan-JP-u-ca-japanese", true},
    {"de-1996", true},
    {"zh-min-nan", true},
    {"en-abc-def-ghi", true},
    {"tlh-x-1", true},
    {"", false},
    {"e", false},
    {"en_US", false},
    {"en-", false},
    {"-en", false},
    {"en--US", false},
    {"123", false},
    {"en-US-", false},
    {"abcdefghi", false},
    {"en-a", false},
    {"en-a-x", false},
    {"x", false},
    {"x-", false},
    {"x-123456789", false},
    {"en-US-x", false},
    {"a-DE", false},
    {"en-Latn-Latn", false},
    {"en-12", false},
    {"en-\xC3\xBC", false},
    {"en-abc-def-ghi-jkl", false},
};

}  // namespace

TEST(Bcp47, FixtureHasFiftyCases) { EXPECT_EQ(kCases.size(), 50u); }

TEST(Bcp47, FixtureAgreesWithOracle) {
  for (const auto& c : kCases) EXPECT_EQ(oracle(c.tag), c.well_formed) << c.tag;
}

TEST(Bcp47, ImplementationAgreesWithFixture) {
  for (const auto& c : kCases) EXPECT_EQ(srw::is_well_formed_language_tag(c.tag), c.well_formed) << c.tag;
}

TEST(Bcp47, RandomTagsAgreeWithOracle) {
  std::mt19937 rng(7);
  const std::string alphabet = "abcxyzQ019-";
  for (int i = 0; i < 20000; ++i) {
    std::string tag;
    const int len = 1 + static_cast<int>(rng() % 16);
    for (int k = 0; k < len; ++k) tag += alphabet[rng() % alphabet.size()];
    ASSERT_EQ(srw::is_well_formed_language_tag(tag), oracle(tag)) << tag;
  }
}
