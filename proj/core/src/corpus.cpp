#include "prosody/corpus.hpp"

#include <array>
#include "prosody/strings.hpp"
#include <fstream>
#include <sstream>

#include "prosody/numerics.hpp"
#include "prosody/text.hpp"

namespace prosody {

const TagSequence& AnnotatedSentence::tags(Level level) const {
  switch (level) {
    case Level::Pw: return pw_tags;
    case Level::Pph: return pph_tags;
    case Level::Iph: return iph_tags;
  }
  throw std::invalid_argument("AnnotatedSentence::tags: bad level");
}

TagSequence& AnnotatedSentence::tags(Level level) {
  switch (level) {
    case Level::Pw: return pw_tags;
    case Level::Pph: return pph_tags;
    case Level::Iph: return iph_tags;
  }
  throw std::invalid_argument("AnnotatedSentence::tags: bad level");
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      cols.push_back(line.substr(start));
      return cols;
    }
    cols.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace

std::vector<AnnotatedSentence> parse_corpus(std::istream& in,
                                            std::string_view source,
                                            std::vector<std::string>* lint) {
  std::vector<AnnotatedSentence> sentences;
  AnnotatedSentence current;
  std::string line;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (!current.characters.empty()) {
      sentences.push_back(std::move(current));
      current = AnnotatedSentence{};
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const auto cols = split_tabs(line);
    if (cols.size() != 4) {
      throw CorpusFormatError(
          fmt("{}:{}: expected 4 tab-separated columns "
                      "(char, pw, pph, iph), found {}",
                      source, line_no, cols.size()));
    }
    if (cols[0].empty()) {
      throw CorpusFormatError(
          fmt("{}:{}: empty character column", source, line_no));
    }
    std::array<Tag, 3> tags{};
    for (std::size_t k = 0; k < 3; ++k) {
      const auto tag = parse_tag(cols[k + 1]);
      if (!tag) {
        throw CorpusFormatError(
            fmt("{}:{}: unknown tag '{}' in column {} (expected B, "
                        "NB, or O)",
                        source, line_no, cols[k + 1], k + 2));
      }
      tags[k] = *tag;
      if (lint != nullptr && *tag == Tag::O && !is_punctuation(cols[0])) {
        lint->push_back(fmt(
            "{}:{}: tag O on non-punctuation character '{}' ({} level)",
            source, line_no, cols[0], level_name(static_cast<Level>(k))));
      }
    }
    current.characters.push_back(cols[0]);
    current.pw_tags.push_back(tags[0]);
    current.pph_tags.push_back(tags[1]);
    current.iph_tags.push_back(tags[2]);
  }
  flush();

  if (sentences.empty()) {
    throw CorpusFormatError(
        fmt("{}: corpus contains no sentences", source));
  }
  return sentences;
}

std::vector<AnnotatedSentence> parse_corpus(const std::filesystem::path& path,
                                            std::vector<std::string>* lint) {
  std::ifstream in(path);
  if (!in) {
    throw CorpusFormatError(
        fmt("{}: cannot open corpus file", path.string()));
  }
  return parse_corpus(in, path.string(), lint);
}

void write_corpus(const std::vector<AnnotatedSentence>& sentences,
                  std::ostream& out) {
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    if (i > 0) out << '\n';
    for (std::size_t t = 0; t < s.length(); ++t) {
      out << s.characters[t] << '\t' << tag_name(s.pw_tags[t]) << '\t'
          << tag_name(s.pph_tags[t]) << '\t' << tag_name(s.iph_tags[t])
          << '\n';
    }
  }
}

void write_corpus(const std::vector<AnnotatedSentence>& sentences,
                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error(
        fmt("{}: cannot open for writing", path.string()));
  }
  write_corpus(sentences, out);
}

PredictionFile parse_predictions(std::istream& in, std::string_view source) {
  PredictionFile pred;
  bool levels_known = false;
  AnnotatedSentence current;
  std::string line;
  std::size_t line_no = 0;

  auto flush = [&] {
    if (!current.characters.empty()) {
      pred.sentences.push_back(std::move(current));
      current = AnnotatedSentence{};
    }
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    const auto cols = split_tabs(line);
    if (cols.size() != 4) {
      throw CorpusFormatError(
          fmt("{}:{}: expected 4 tab-separated columns "
                      "(char, pw, pph, iph), found {}",
                      source, line_no, cols.size()));
    }
    if (cols[0].empty()) {
      throw CorpusFormatError(
          fmt("{}:{}: empty character column", source, line_no));
    }
    std::array<Tag, 3> tags{Tag::NB, Tag::NB, Tag::NB};
    std::array<bool, 3> present{};
    for (std::size_t k = 0; k < 3; ++k) {
      if (cols[k + 1] == "-") continue;
      const auto tag = parse_tag(cols[k + 1]);
      if (!tag) {
        throw CorpusFormatError(
            fmt("{}:{}: unknown tag '{}' in column {} (expected B, "
                        "NB, O, or -)",
                        source, line_no, cols[k + 1], k + 2));
      }
      tags[k] = *tag;
      present[k] = true;
    }
    if (!levels_known) {
      pred.has_level = present;
      levels_known = true;
    } else if (present != pred.has_level) {
      throw CorpusFormatError(fmt(
          "{}:{}: tag levels differ from earlier rows (a level must be "
          "present everywhere or nowhere)",
          source, line_no));
    }
    current.characters.push_back(cols[0]);
    current.pw_tags.push_back(tags[0]);
    current.pph_tags.push_back(tags[1]);
    current.iph_tags.push_back(tags[2]);
  }
  flush();

  if (pred.sentences.empty()) {
    throw CorpusFormatError(
        fmt("{}: prediction file contains no sentences", source));
  }
  return pred;
}

PredictionFile parse_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw CorpusFormatError(
        fmt("{}: cannot open prediction file", path.string()));
  }
  return parse_predictions(in, path.string());
}

void write_predictions(const PredictionFile& pred, std::ostream& out) {
  auto cell = [&](Level level, const AnnotatedSentence& s, std::size_t t) {
    return pred.has_level[static_cast<std::size_t>(level)]
               ? std::string(tag_name(s.tags(level)[t]))
               : std::string("-");
  };
  for (std::size_t i = 0; i < pred.sentences.size(); ++i) {
    const auto& s = pred.sentences[i];
    if (i > 0) out << '\n';
    for (std::size_t t = 0; t < s.length(); ++t) {
      out << s.characters[t] << '\t' << cell(Level::Pw, s, t) << '\t'
          << cell(Level::Pph, s, t) << '\t' << cell(Level::Iph, s, t) << '\n';
    }
  }
}

void write_predictions(const PredictionFile& pred,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error(
        fmt("{}: cannot open for writing", path.string()));
  }
  write_predictions(pred, out);
}

CorpusSplit split_corpus(const std::vector<AnnotatedSentence>& sentences,
                         std::size_t n_train, std::size_t n_valid,
                         std::size_t n_test, std::uint64_t seed) {
  const std::size_t need = n_train + n_valid + n_test;
  if (need > sentences.size()) {
    throw std::invalid_argument(
        fmt("split_corpus: requested {}+{}+{} sentences but the "
                    "corpus has only {}",
                    n_train, n_valid, n_test, sentences.size()));
  }
  std::vector<std::size_t> order(sentences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  CorpusSplit split;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n_train; ++i) split.train.push_back(sentences[order[pos++]]);
  for (std::size_t i = 0; i < n_valid; ++i) split.valid.push_back(sentences[order[pos++]]);
  for (std::size_t i = 0; i < n_test; ++i) split.test.push_back(sentences[order[pos++]]);
  return split;
}

std::vector<AnnotatedSentence> synth_toy_corpus(std::uint64_t seed,
                                                std::size_t n_sentences) {
  if (n_sentences == 0) {
    throw std::invalid_argument("synth_toy_corpus: need at least 1 sentence");
  }
  // 13 characters that never end a word, 6 that appear only word-finally,
  // plus the comma: 20 in total. Word-final position is therefore a unigram
  // function of the character, which is what makes the corpus learnable.
  static const std::array<const char*, 13> kRegular = {
      "天", "地", "人", "山", "水", "火", "木",
      "金", "土", "日", "月", "星", "云"};
  static const std::array<const char*, 6> kFinal = {"了", "的", "子",
                                                    "儿", "头", "们"};
  static const char* kComma = "，";

  Rng rng(seed);
  std::vector<AnnotatedSentence> corpus;
  corpus.reserve(n_sentences);
  for (std::size_t si = 0; si < n_sentences; ++si) {
    AnnotatedSentence s;
    const std::size_t n_words = 3 + rng.next_below(4);  // 3..6
    std::size_t pw_count = 0;
    std::size_t pph_count = 0;
    for (std::size_t w = 0; w < n_words; ++w) {
      const std::size_t len = 2 + rng.next_below(2);  // 2..3
      for (std::size_t k = 0; k + 1 < len; ++k) {
        s.characters.push_back(kRegular[rng.next_below(kRegular.size())]);
        s.pw_tags.push_back(Tag::NB);
        s.pph_tags.push_back(Tag::NB);
        s.iph_tags.push_back(Tag::NB);
      }
      s.characters.push_back(kFinal[rng.next_below(kFinal.size())]);
      s.pw_tags.push_back(Tag::B);
      ++pw_count;
      const bool pph = pw_count % 2 == 0;  // every 2nd PW boundary
      if (pph) ++pph_count;
      s.pph_tags.push_back(pph ? Tag::B : Tag::NB);
      const bool iph = pph && pph_count % 2 == 0;  // every 2nd PPH boundary
      s.iph_tags.push_back(iph ? Tag::B : Tag::NB);

      if (w + 1 < n_words && rng.next_double() < 0.25) {
        s.characters.push_back(kComma);
        s.pw_tags.push_back(Tag::O);
        s.pph_tags.push_back(Tag::O);
        s.iph_tags.push_back(Tag::O);
      }
    }
    corpus.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace prosody
