#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ddp {

// Splits a UTF-8 string into codepoint substrings. Invalid bytes are
// kept as single-byte units rather than rejected.
inline std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if ((c & 0x80) == 0x00) len = 1;
    else if ((c & 0xE0) == 0xC0) len = 2;
    else if ((c & 0xF0) == 0xE0) len = 3;
    else if ((c & 0xF8) == 0xF0) len = 4;
    if (i + len > s.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
        len = k;
        break;
      }
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

inline std::uint32_t utf8_codepoint(const std::string& ch) {
  if (ch.empty()) return 0;
  unsigned char c = static_cast<unsigned char>(ch[0]);
  if ((c & 0x80) == 0x00) return c;
  std::uint32_t cp = 0;
  std::size_t len = ch.size();
  if ((c & 0xE0) == 0xC0) cp = c & 0x1F;
  else if ((c & 0xF0) == 0xE0) cp = c & 0x0F;
  else if ((c & 0xF8) == 0xF0) cp = c & 0x07;
  else return c;
  for (std::size_t i = 1; i < len; ++i) cp = (cp << 6) | (static_cast<unsigned char>(ch[i]) & 0x3F);
  return cp;
}

// Unicode punctuation (P*) plus the symbol-ish CJK/fullwidth marks that
// treebanks tag as punctuation. Range list covers ASCII punctuation,
// General Punctuation, CJK Symbols and Punctuation, and fullwidth forms.
inline bool is_punct_codepoint(std::uint32_t cp) {
  static const std::pair<std::uint32_t, std::uint32_t> ranges[] = {
      {0x21, 0x2F},     {0x3A, 0x40},     {0x5B, 0x60},     {0x7B, 0x7E},
      {0xA1, 0xA7},     {0xAB, 0xAB},     {0xB6, 0xB7},     {0xBB, 0xBB},
      {0xBF, 0xBF},     {0x2010, 0x2027}, {0x2030, 0x205E}, {0x3001, 0x3011},
      {0x3014, 0x301F}, {0x30FB, 0x30FB}, {0xFE30, 0xFE4F}, {0xFE50, 0xFE6B},
      {0xFF01, 0xFF0F}, {0xFF1A, 0xFF20}, {0xFF3B, 0xFF40}, {0xFF5B, 0xFF65},
  };
  for (const auto& [lo, hi] : ranges)
    if (cp >= lo && cp <= hi) return true;
  return false;
}

inline bool is_all_punct(const std::string& form) {
  if (form.empty()) return false;
  for (const std::string& ch : utf8_chars(form))
    if (!is_punct_codepoint(utf8_codepoint(ch))) return false;
  return true;
}

}  // namespace ddp
