#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "prosody/numerics.hpp"

namespace prosody {

/// Token -> dense row lookup table. Rows all share one dimension; insertion
/// order is preserved for deterministic serialization.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }

  /// nullptr when the token is absent.
  const Vector* row(const std::string& token) const;

  /// Throws on duplicate token or dimension mismatch.
  void add(std::string token, Vector row);

  const std::vector<std::string>& tokens() const { return tokens_; }
  const Vector& row_at(std::size_t i) const { return rows_[i]; }
  Vector& row_at(std::size_t i) { return rows_[i]; }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> tokens_;
  std::vector<Vector> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// word2vec text vector format: header "vocab_count dim", then one line per
/// token: the token followed by dim decimal values, space-separated.
/// `source` names the input in error messages.
EmbeddingTable load_embeddings_text(std::istream& in);
EmbeddingTable load_embeddings_text(std::istream& in, std::string_view source);
EmbeddingTable load_embeddings_text(const std::filesystem::path& path);

void save_embeddings_text(const EmbeddingTable& table, std::ostream& out);
void save_embeddings_text(const EmbeddingTable& table,
                          const std::filesystem::path& path);

struct SkipgramConfig {
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double learning_rate = 0.025;
  std::uint64_t seed = 1;
};

/// Character-level skip-gram with negative sampling over raw UTF-8 text (one
/// sentence per line). Noise distribution is unigram^(3/4); min-count 1; no
/// frequent-token subsampling. Deterministic under the config seed.
EmbeddingTable train_skipgram(const std::string& raw_text,
                              const SkipgramConfig& config);
EmbeddingTable train_skipgram_file(const std::filesystem::path& path,
                                   const SkipgramConfig& config);

}  // namespace prosody
