#include "prosody/features.hpp"

#include "prosody/strings.hpp"
#include <stdexcept>

namespace prosody {

CharDictionary::CharDictionary(std::vector<std::string> chars)
    : chars_(std::move(chars)) {
  for (std::size_t i = 0; i < chars_.size(); ++i) {
    auto [it, inserted] = index_.emplace(chars_[i], i);
    if (!inserted) {
      throw std::invalid_argument(
          fmt("CharDictionary: duplicate character '{}'", chars_[i]));
    }
  }
}

std::size_t CharDictionary::index_of(const std::string& ch) const {
  auto it = index_.find(ch);
  return it == index_.end() ? unk_index() : it->second;
}

CharDictionary build_dictionary(
    std::span<const std::vector<std::string>> sentences) {
  if (sentences.empty()) {
    throw std::invalid_argument("build_dictionary: empty corpus");
  }
  std::vector<std::string> chars;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& sentence : sentences) {
    for (const auto& ch : sentence) {
      if (seen.emplace(ch, chars.size()).second) chars.push_back(ch);
    }
  }
  if (chars.empty()) {
    throw std::invalid_argument("build_dictionary: corpus has no characters");
  }
  return CharDictionary(std::move(chars));
}

Vector EncodedSentence::materialize(std::size_t t) const {
  Vector out(dim, 0.0);
  if (mode == FeatureMode::OneHot) {
    out[hot[t]] = 1.0;
  } else {
    const Vector& row = dense[t];
    for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i];
  }
  if (cascade) out[dim - 1] = cascade_values[t];
  return out;
}

namespace {

void fill_cascade(EncodedSentence& enc, std::size_t length,
                  const TagSequence* prev_tags) {
  if (prev_tags == nullptr) return;
  if (prev_tags->size() != length) {
    throw DimensionError(
        fmt("encode: sentence has {} characters but prev_tags has {}",
                    length, prev_tags->size()));
  }
  enc.cascade = true;
  enc.dim += 1;
  enc.cascade_values.reserve(length);
  for (Tag t : *prev_tags) enc.cascade_values.push_back(cascade_code(t));
}

}  // namespace

EncodedSentence encode_onehot(const std::vector<std::string>& chars,
                              const CharDictionary& dict,
                              const TagSequence* prev_tags) {
  EncodedSentence enc;
  enc.mode = FeatureMode::OneHot;
  enc.dim = dict.size();
  enc.hot.reserve(chars.size());
  for (const auto& ch : chars) enc.hot.push_back(dict.index_of(ch));
  fill_cascade(enc, chars.size(), prev_tags);
  return enc;
}

EncodedSentence encode_embedding(const std::vector<std::string>& chars,
                                 const EmbeddingTable& table,
                                 const TagSequence* prev_tags) {
  if (table.dim() == 0) {
    throw std::invalid_argument("encode_embedding: table dimension is zero");
  }
  EncodedSentence enc;
  enc.mode = FeatureMode::Embedding;
  enc.dim = table.dim();
  enc.dense.reserve(chars.size());
  for (const auto& ch : chars) {
    const Vector* row = table.row(ch);
    enc.dense.push_back(row != nullptr ? *row : Vector(table.dim(), 0.0));
  }
  fill_cascade(enc, chars.size(), prev_tags);
  return enc;
}

}  // namespace prosody
