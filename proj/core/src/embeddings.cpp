#include "prosody/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include "prosody/strings.hpp"
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "prosody/text.hpp"

namespace prosody {

const Vector* EmbeddingTable::row(const std::string& token) const {
  const auto it = index_.find(token);
  return it == index_.end() ? nullptr : &rows_[it->second];
}

void EmbeddingTable::add(std::string token, Vector row) {
  if (row.size() != dim_) {
    throw DimensionError(
        fmt("EmbeddingTable: row for '{}' has {} values, table "
                    "dimension is {}",
                    token, row.size(), dim_));
  }
  const auto [it, inserted] = index_.emplace(std::move(token), tokens_.size());
  if (!inserted) {
    throw std::invalid_argument(
        fmt("EmbeddingTable: duplicate token '{}'", it->first));
  }
  tokens_.push_back(it->first);
  rows_.push_back(std::move(row));
}

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < line.size()) {
    const std::size_t pos = line.find(' ', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    if (pos > start) out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void format_fail(std::string_view source, std::size_t line_no,
                              const std::string& message) {
  throw std::runtime_error(
      fmt("{}:{}: {}", source, line_no, message));
}

}  // namespace

EmbeddingTable load_embeddings_text(std::istream& in,
                                    std::string_view source) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line()) format_fail(source, 1, "empty embedding file");
  const auto header = split_spaces(line);
  if (header.size() != 2) {
    format_fail(source, line_no,
                fmt("header must be 'vocab_count dim', found '{}'",
                            line));
  }
  std::size_t count = 0;
  std::size_t dim = 0;
  try {
    count = static_cast<std::size_t>(std::stoull(std::string(header[0])));
    dim = static_cast<std::size_t>(std::stoull(std::string(header[1])));
  } catch (const std::exception&) {
    format_fail(source, line_no,
                fmt("header must be two integers, found '{}'", line));
  }

  EmbeddingTable table(dim);
  for (std::size_t i = 0; i < count; ++i) {
    if (!next_line()) {
      format_fail(source, line_no + 1,
                  fmt("header declares {} rows but the file ends "
                              "after {}",
                              count, i));
    }
    const auto fields = split_spaces(line);
    if (fields.size() != dim + 1) {
      format_fail(source, line_no,
                  fmt("row has {} values, header declares {}",
                              fields.empty() ? 0 : fields.size() - 1, dim));
    }
    Vector row(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      try {
        row[k] = parse_double(fields[k + 1]);
      } catch (const std::invalid_argument&) {
        format_fail(source, line_no,
                    fmt("bad value '{}'", fields[k + 1]));
      }
    }
    try {
      table.add(std::string(fields[0]), std::move(row));
    } catch (const std::invalid_argument& e) {
      format_fail(source, line_no, e.what());
    }
  }
  while (next_line()) {
    if (!line.empty()) {
      format_fail(source, line_no,
                  fmt("header declares {} rows but more follow",
                              count));
    }
  }
  return table;
}

EmbeddingTable load_embeddings_text(std::istream& in) {
  return load_embeddings_text(in, "<stream>");
}

EmbeddingTable load_embeddings_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error(
        fmt("{}: cannot open embedding file", path.string()));
  }
  return load_embeddings_text(in, path.string());
}

void save_embeddings_text(const EmbeddingTable& table, std::ostream& out) {
  out << table.size() << ' ' << table.dim() << '\n';
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.tokens()[i];
    const Vector& row = table.row_at(i);
    for (double v : row) {
      out << ' ' << format_double(v);
    }
    out << '\n';
  }
}

void save_embeddings_text(const EmbeddingTable& table,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error(
        fmt("{}: cannot open for writing", path.string()));
  }
  save_embeddings_text(table, out);
  if (!out) {
    throw std::runtime_error(fmt("{}: write failed", path.string()));
  }
}

namespace {

bool is_separator(const std::string& token) {
  return token == " " || token == "\t" || token == "\r" || token == "\n";
}

}  // namespace

EmbeddingTable train_skipgram(const std::string& raw_text,
                              const SkipgramConfig& config) {
  if (config.dim < 2) {
    throw std::invalid_argument("train_skipgram: dimension must be >= 2");
  }
  if (config.window == 0) {
    throw std::invalid_argument("train_skipgram: window must be positive");
  }

  // Tokenize: one sentence per line, single-character tokens, whitespace
  // dropped.
  std::vector<std::vector<std::size_t>> sentences;
  std::vector<std::string> vocab;
  std::vector<std::size_t> counts;
  std::unordered_map<std::string, std::size_t> index;
  {
    std::istringstream lines(raw_text);
    std::string line;
    while (std::getline(lines, line)) {
      std::vector<std::size_t> ids;
      for (auto& tok : utf8_split(line)) {
        if (is_separator(tok)) continue;
        auto [it, inserted] = index.emplace(tok, vocab.size());
        if (inserted) {
          vocab.push_back(tok);
          counts.push_back(0);
        }
        counts[it->second] += 1;
        ids.push_back(it->second);
      }
      if (!ids.empty()) sentences.push_back(std::move(ids));
    }
  }
  if (vocab.empty()) {
    throw std::invalid_argument("train_skipgram: no tokens in the corpus");
  }

  // Noise distribution: unigram counts raised to 3/4, sampled by inverse CDF.
  std::vector<double> noise_cdf(vocab.size());
  {
    double total = 0.0;
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      total += std::pow(static_cast<double>(counts[i]), 0.75);
      noise_cdf[i] = total;
    }
  }

  Rng rng(config.seed);
  const std::size_t dim = config.dim;
  std::vector<Vector> syn0(vocab.size(), Vector(dim));
  std::vector<Vector> syn1(vocab.size(), Vector(dim, 0.0));
  for (auto& row : syn0) {
    for (double& v : row) {
      v = (rng.next_double() - 0.5) / static_cast<double>(dim);
    }
  }

  auto sample_noise = [&]() -> std::size_t {
    const double r = rng.next_double() * noise_cdf.back();
    const auto it = std::upper_bound(noise_cdf.begin(), noise_cdf.end(), r);
    if (it == noise_cdf.end()) return noise_cdf.size() - 1;
    return static_cast<std::size_t>(it - noise_cdf.begin());
  };

  const double lr = config.learning_rate;
  Vector input_delta(dim);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& sent : sentences) {
      for (std::size_t ci = 0; ci < sent.size(); ++ci) {
        const std::size_t center = sent[ci];
        // Dynamic window: a uniformly drawn shrink, as in the original tool.
        const std::size_t shrink = rng.next_below(config.window);
        const std::size_t reach = config.window - shrink;
        const std::size_t lo = ci >= reach ? ci - reach : 0;
        const std::size_t hi = std::min(sent.size() - 1, ci + reach);
        for (std::size_t pos = lo; pos <= hi; ++pos) {
          if (pos == ci) continue;
          const std::size_t context = sent[pos];
          Vector& input = syn0[context];
          std::fill(input_delta.begin(), input_delta.end(), 0.0);
          for (std::size_t d = 0; d <= config.negatives; ++d) {
            std::size_t target;
            double label;
            if (d == 0) {
              target = center;
              label = 1.0;
            } else {
              target = sample_noise();
              if (target == center) continue;
              label = 0.0;
            }
            Vector& output = syn1[target];
            double dot = 0.0;
            for (std::size_t k = 0; k < dim; ++k) dot += input[k] * output[k];
            const double g = (label - sigmoid(dot)) * lr;
            for (std::size_t k = 0; k < dim; ++k) {
              input_delta[k] += g * output[k];
              output[k] += g * input[k];
            }
          }
          for (std::size_t k = 0; k < dim; ++k) input[k] += input_delta[k];
        }
      }
    }
  }

  EmbeddingTable table(dim);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    check_finite(syn0[i], fmt("embedding row '{}'", vocab[i]));
    table.add(vocab[i], syn0[i]);
  }
  return table;
}

EmbeddingTable train_skipgram_file(const std::filesystem::path& path,
                                   const SkipgramConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error(
        fmt("{}: cannot open raw text file", path.string()));
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return train_skipgram(buffer.str(), config);
}

}  // namespace prosody
