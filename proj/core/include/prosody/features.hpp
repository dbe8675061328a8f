#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "prosody/embeddings.hpp"
#include "prosody/numerics.hpp"
#include "prosody/tags.hpp"

namespace prosody {

/// Character -> dense index map in first-seen order over the training corpus.
/// The reserved unknown symbol occupies the last index and counts toward the
/// dictionary size |D|.
class CharDictionary {
 public:
  CharDictionary() = default;

  /// Rebuilds from an explicit list of known characters (index order).
  explicit CharDictionary(std::vector<std::string> chars);

  /// |D|, unknown symbol included.
  std::size_t size() const { return chars_.size() + 1; }
  std::size_t unk_index() const { return chars_.size(); }

  /// Index of ch, or the unknown index when unseen.
  std::size_t index_of(const std::string& ch) const;
  bool contains(const std::string& ch) const { return index_.count(ch) > 0; }

  /// Known characters in index order (the unknown symbol is implicit, last).
  const std::vector<std::string>& known_chars() const { return chars_; }

  bool operator==(const CharDictionary& other) const {
    return chars_ == other.chars_;
  }

 private:
  std::vector<std::string> chars_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Extracts the dictionary from training sentences, first-seen order.
/// Throws on an empty corpus.
CharDictionary build_dictionary(
    std::span<const std::vector<std::string>> sentences);

enum class FeatureMode { OneHot, Embedding };

constexpr std::string_view feature_mode_name(FeatureMode m) {
  return m == FeatureMode::OneHot ? "onehot" : "embedding";
}

/// One sentence encoded as T feature vectors of uniform dimension M.
/// One-hot sentences keep only the hot index per position; embedding
/// sentences keep dense base rows. The optional cascade feature appends one
/// extra dimension carrying the previous level's tag code.
struct EncodedSentence {
  FeatureMode mode = FeatureMode::OneHot;
  bool cascade = false;
  std::size_t dim = 0;  // M, cascade dimension included
  std::vector<std::size_t> hot;        // one-hot mode, length T
  std::vector<Vector> dense;           // embedding mode, length T
  std::vector<double> cascade_values;  // length T when cascade is on

  std::size_t length() const {
    return mode == FeatureMode::OneHot ? hot.size() : dense.size();
  }

  /// Materializes the full M-dimensional feature vector at position t.
  Vector materialize(std::size_t t) const;
};

/// One-hot encoding: M = |D| (+1 with cascade); unknown characters map to
/// the unknown index. prev_tags, when given, must match the sentence length.
EncodedSentence encode_onehot(const std::vector<std::string>& chars,
                              const CharDictionary& dict,
                              const TagSequence* prev_tags = nullptr);

/// Embedding encoding: M = d (+1 with cascade); characters missing from the
/// table map to the zero vector.
EncodedSentence encode_embedding(const std::vector<std::string>& chars,
                                 const EmbeddingTable& table,
                                 const TagSequence* prev_tags = nullptr);

}  // namespace prosody
