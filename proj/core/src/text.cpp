#include "prosody/text.hpp"

#include <array>
#include <cctype>

namespace prosody {

namespace {

// Expected trailing-byte count from the lead byte, or 0 for ASCII/invalid.
std::size_t utf8_trail_count(unsigned char lead) {
  if (lead < 0x80) return 0;
  if ((lead & 0xE0) == 0xC0) return 1;
  if ((lead & 0xF0) == 0xE0) return 2;
  if ((lead & 0xF8) == 0xF0) return 3;
  return 0;  // stray continuation or invalid lead: treat as one byte
}

bool is_continuation(unsigned char b) { return (b & 0xC0) == 0x80; }

}  // namespace

std::vector<std::string> utf8_split(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1 + utf8_trail_count(lead);
    if (i + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if (!is_continuation(static_cast<unsigned char>(text[i + k]))) {
        len = 1;
        break;
      }
    }
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

std::string normalize_text(std::string_view text) {
  return std::string(text);
}

bool is_punctuation(const std::string& ch) {
  if (ch.size() == 1) {
    const unsigned char c = static_cast<unsigned char>(ch[0]);
    return std::ispunct(c) != 0;
  }
  static const std::array<std::string_view, 18> kCjkPunct = {
      "，", "。", "、", "；", "：", "？", "！", "“", "”",
      "‘", "’", "（", "）", "《", "》", "—", "…", "·"};
  for (auto p : kCjkPunct) {
    if (ch == p) return true;
  }
  return false;
}

}  // namespace prosody
