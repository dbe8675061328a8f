#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace prosody {

/// Splits UTF-8 text into code points, each returned as its own string.
/// Invalid bytes are passed through as single-byte tokens.
std::vector<std::string> utf8_split(std::string_view text);

/// Text normalization insertion point. Currently a pass-through; a real
/// front end would expand numerals, symbols, and full/half width forms here.
std::string normalize_text(std::string_view text);

/// True for ASCII punctuation and common CJK punctuation marks.
bool is_punctuation(const std::string& ch);

}  // namespace prosody
