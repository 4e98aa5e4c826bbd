#pragma once

// UTF-8 helpers built on ICU. Offsets handed out by this library are counted
// in Unicode code points.

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <string>
#include <string_view>
#include <vector>

#include "vacscreen/error.hpp"

namespace vacscreen::text {

inline std::u32string to_u32(std::string_view utf8) {
  auto us = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  std::u32string out;
  out.reserve(static_cast<std::size_t>(us.length()));
  for (int32_t i = 0; i < us.length();) {
    UChar32 c = us.char32At(i);
    out.push_back(static_cast<char32_t>(c));
    i += U16_LENGTH(c);
  }
  return out;
}

inline std::string to_utf8(std::u32string_view cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t c : cps) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (c >> 12)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (c >> 18)));
      out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

inline std::string to_utf8(const icu::UnicodeString& us) {
  std::string out;
  us.toUTF8String(out);
  return out;
}

inline std::string nfc(std::string_view utf8) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("text", "NFC normalizer unavailable");
  auto us = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  if (norm->isNormalized(us, status) && U_SUCCESS(status))
    return std::string(utf8);
  status = U_ZERO_ERROR;
  icu::UnicodeString out = norm->normalize(us, status);
  if (U_FAILURE(status)) throw Error("text", "NFC normalization failed");
  return to_utf8(out);
}

inline std::string to_upper(std::string_view utf8) {
  auto us = icu::UnicodeString::fromUTF8(
      icu::StringPiece(utf8.data(), static_cast<int32_t>(utf8.size())));
  return to_utf8(us.toUpper(icu::Locale::getRoot()));
}

inline bool is_space(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)); }

inline bool is_word(char32_t c) {
  auto cp = static_cast<UChar32>(c);
  return u_isalpha(cp) || u_isdigit(cp);
}

inline std::size_t length(std::string_view utf8) { return to_u32(utf8).size(); }

inline std::string substr(std::string_view utf8, std::size_t start, std::size_t end) {
  auto cps = to_u32(utf8);
  if (start > end || end > cps.size()) throw InputError("text", "span out of range");
  return to_utf8(std::u32string_view(cps).substr(start, end - start));
}

struct TokenizerConfig {
  bool lowercase = true;
  bool strip_punctuation = true;
};

// Tokens are maximal runs of letters/digits. Without punctuation stripping,
// every other non-space code point becomes a one-character token.
inline std::vector<std::string> tokenize(std::string_view utf8,
                                         const TokenizerConfig& config = {}) {
  std::u32string cps = to_u32(nfc(utf8));
  if (config.lowercase) {
    for (char32_t& c : cps) c = static_cast<char32_t>(u_tolower(static_cast<UChar32>(c)));
  }
  std::vector<std::string> tokens;
  std::u32string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(to_utf8(current));
    current.clear();
  };
  for (char32_t c : cps) {
    if (is_word(c)) {
      current.push_back(c);
      continue;
    }
    flush();
    if (!config.strip_punctuation && !is_space(c)) tokens.push_back(to_utf8(std::u32string(1, c)));
  }
  flush();
  return tokens;
}

}  // namespace vacscreen::text
