#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "prosody/tags.hpp"

namespace prosody {

/// One sentence with boundary tags at all three prosodic levels.
struct AnnotatedSentence {
  std::vector<std::string> characters;
  TagSequence pw_tags;
  TagSequence pph_tags;
  TagSequence iph_tags;

  std::size_t length() const { return characters.size(); }
  const TagSequence& tags(Level level) const;
  TagSequence& tags(Level level);
};

/// Corpus format violation; the message carries the source and line number.
class CorpusFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Corpus TSV: one "char<TAB>pw<TAB>pph<TAB>iph" line per character, blank
/// line between sentences, tags in {B, NB, O}. When lint is non-null it
/// collects warnings for O tags on non-punctuation characters.
std::vector<AnnotatedSentence> parse_corpus(std::istream& in,
                                            std::string_view source,
                                            std::vector<std::string>* lint = nullptr);
std::vector<AnnotatedSentence> parse_corpus(const std::filesystem::path& path,
                                            std::vector<std::string>* lint = nullptr);

/// Writes the exact format parse_corpus reads; parse(write(x)) == x.
void write_corpus(const std::vector<AnnotatedSentence>& sentences,
                  std::ostream& out);
void write_corpus(const std::vector<AnnotatedSentence>& sentences,
                  const std::filesystem::path& path);

/// Corpus TSV where whole tag levels may be absent: absent levels carry "-"
/// in every row. A level is either present for all sentences or none.
struct PredictionFile {
  std::vector<AnnotatedSentence> sentences;  // absent levels hold NB filler
  std::array<bool, 3> has_level{};           // indexed by Level
};

PredictionFile parse_predictions(std::istream& in, std::string_view source);
PredictionFile parse_predictions(const std::filesystem::path& path);

void write_predictions(const PredictionFile& pred, std::ostream& out);
void write_predictions(const PredictionFile& pred,
                       const std::filesystem::path& path);

struct CorpusSplit {
  std::vector<AnnotatedSentence> train;
  std::vector<AnnotatedSentence> valid;
  std::vector<AnnotatedSentence> test;
};

/// Seeded shuffle, then partition into the three requested sizes. Throws
/// when the corpus has fewer sentences than requested.
CorpusSplit split_corpus(const std::vector<AnnotatedSentence>& sentences,
                         std::size_t n_train, std::size_t n_valid,
                         std::size_t n_test, std::uint64_t seed);

/// Synthetic corpus whose tags are a learnable function of the text:
/// sentences are built from 2-3 character words over a fixed 20-character
/// alphabet in which six designated characters appear only word-finally, so
/// the PW boundary is recoverable from the character identity. A comma
/// character carries O at every level; every 2nd PW boundary is also a PPH
/// boundary and every 2nd PPH boundary an IPH boundary, so the levels nest.
std::vector<AnnotatedSentence> synth_toy_corpus(std::uint64_t seed,
                                                std::size_t n_sentences);

}  // namespace prosody
