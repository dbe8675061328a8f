#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace prosody {

/// Per-character boundary tags, in fixed order: B (boundary), NB
/// (non-boundary), O (other, e.g. punctuation).
enum class Tag : int { B = 0, NB = 1, O = 2 };

inline constexpr std::size_t kNumTags = 3;

using TagSequence = std::vector<Tag>;

constexpr std::string_view tag_name(Tag t) {
  switch (t) {
    case Tag::B: return "B";
    case Tag::NB: return "NB";
    case Tag::O: return "O";
  }
  return "?";
}

inline std::optional<Tag> parse_tag(std::string_view s) {
  if (s == "B") return Tag::B;
  if (s == "NB") return Tag::NB;
  if (s == "O") return Tag::O;
  return std::nullopt;
}

/// Scalar code packed into the single cascade feature dimension.
constexpr double cascade_code(Tag t) {
  switch (t) {
    case Tag::B: return 1.0;
    case Tag::NB: return 0.0;
    case Tag::O: return -1.0;
  }
  return 0.0;
}

/// The three nested prosodic boundary levels.
enum class Level : int { Pw = 0, Pph = 1, Iph = 2 };

constexpr std::string_view level_name(Level level) {
  switch (level) {
    case Level::Pw: return "PW";
    case Level::Pph: return "PPH";
    case Level::Iph: return "IPH";
  }
  return "?";
}

inline std::optional<Level> parse_level(std::string_view s) {
  if (s == "pw" || s == "PW") return Level::Pw;
  if (s == "pph" || s == "PPH") return Level::Pph;
  if (s == "iph" || s == "IPH") return Level::Iph;
  return std::nullopt;
}

}  // namespace prosody
