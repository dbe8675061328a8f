#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "prosody/corpus.hpp"
#include "prosody/embeddings.hpp"
#include "prosody/features.hpp"
#include "prosody/inference.hpp"
#include "prosody/layers.hpp"
#include "prosody/numerics.hpp"

namespace prosody {

/// Hyperparameters and architecture choices for one level's model.
struct TrainConfig {
  Level level = Level::Pw;
  std::string topology = "FBB";
  std::size_t hidden = 32;
  FeatureMode features = FeatureMode::OneHot;
  bool cascade = false;  // previous level's predicted tag as an extra input
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t patience = 10;
  std::size_t max_epochs = 500;
  std::uint64_t seed = 1;
  bool select_by_f = false;  // model selection by F-score instead of error rate

  /// Standard settings per level: learning rate 1e-3 for PW, 1e-4 for PPH
  /// and IPH; cascade on for PPH and IPH.
  static TrainConfig defaults_for(Level level);
};

/// A trained (or in-training) model for one prosodic level: the network, the
/// tag-transition scores, and the feature source needed to encode input.
struct ModelBundle {
  TrainConfig config;
  NetworkModel network;
  TransitionMatrix transitions;
  CharDictionary dictionary;   // one-hot mode
  EmbeddingTable embeddings;   // embedding mode
  std::string embedding_source;  // path recorded for serialization

  Level level() const { return config.level; }
  bool cascade() const { return config.cascade; }

  /// |D| or d, without the cascade dimension.
  std::size_t base_dim() const;

  /// Network views followed by transition views; stable order.
  std::vector<ParamView> param_views();
  std::vector<ConstParamView> param_views() const;
};

/// Fresh bundle with seeded uniform [-0.1, 0.1] parameters. The network's
/// input dimension is base_dim (+1 when config.cascade).
ModelBundle make_bundle(const TrainConfig& config, CharDictionary dictionary);
ModelBundle make_bundle(const TrainConfig& config, EmbeddingTable embeddings,
                        std::string embedding_source = {});

/// One sentence ready for the trainer.
struct TrainingExample {
  EncodedSentence input;
  TagSequence gold;
};

/// Encodes a sentence with the bundle's feature source. prev_tags must be
/// given exactly when the bundle cascades.
EncodedSentence encode_for_bundle(const ModelBundle& bundle,
                                  const std::vector<std::string>& characters,
                                  const TagSequence* prev_tags = nullptr);

/// Encodes a corpus for the bundle's level. prev_tags (one sequence per
/// sentence, usually the previous level's predictions) is required exactly
/// when the bundle cascades.
std::vector<TrainingExample> prepare_examples(
    const ModelBundle& bundle, std::span<const AnnotatedSentence> data,
    const std::vector<TagSequence>* prev_tags = nullptr);

/// Viterbi tag path under the bundle's network and transitions.
TagSequence predict_tags(const ModelBundle& bundle,
                         const EncodedSentence& input);

/// Sentence-level log-likelihood loss logZ - score(gold), with its exact
/// gradients with respect to the per-position scores f, the transition
/// matrix, and the initial-tag scores.
struct SllGrads {
  double loss = 0.0;
  Matrix d_f;       // T x kNumTags
  Matrix d_s;       // kNumTags x kNumTags
  Vector d_s_init;  // kNumTags
};

SllGrads sll_loss_and_grads(const Matrix& f, const TransitionMatrix& trans,
                            const TagSequence& gold);

/// One pass over the data in a freshly shuffled order: per batch of at most
/// config.batch_size sentences, gradients are SUMMED in batch order and one
/// momentum step is applied (transitions updated jointly with the network).
/// Returns the mean per-sentence loss.
double train_epoch(ModelBundle& bundle,
                   std::span<const TrainingExample> train,
                   OptimizerState& optimizer, Rng& shuffle_rng);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double valid_error = 0.0;  // selection criterion; lower is better
};

struct FitResult {
  ModelBundle best;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> records;
};

/// Replaces the built-in validation measure when set; receives the 1-based
/// epoch index and the current bundle. Exists so tests can script the
/// validation trajectory.
using ValidationHook =
    std::function<double(std::size_t, const ModelBundle&)>;

/// Full training loop with early stopping: stops when the best validation
/// value has not strictly improved for config.patience consecutive epochs
/// (or at max_epochs) and returns the best epoch's bundle. The default
/// validation measure is the per-character tag error rate under Viterbi
/// decoding; config.select_by_f switches it to 1 - F.
FitResult fit(ModelBundle bundle, std::span<const TrainingExample> train,
              std::span<const TrainingExample> valid,
              const ValidationHook& validation_override = {},
              std::ostream* log = nullptr);

/// Measures the bundle's prediction quality on encoded examples.
double tag_error_rate(const ModelBundle& bundle,
                      std::span<const TrainingExample> examples);
double boundary_f_score(const ModelBundle& bundle,
                        std::span<const TrainingExample> examples);

// --- cascade ---

struct CascadeResult {
  std::array<ModelBundle, 3> bundles;  // indexed by Level
  std::array<std::vector<EpochRecord>, 3> records;
};

/// Trains PW, then PPH with PW's PREDICTED tags as the cascade feature, then
/// IPH with PPH's predictions, matching test-time conditions. Feature source
/// comes from the PW config: a dictionary built from the training sentences
/// (one-hot) or the supplied table (embedding).
CascadeResult cascade_run(std::span<const AnnotatedSentence> train,
                          std::span<const AnnotatedSentence> valid,
                          const std::array<TrainConfig, 3>& configs,
                          const EmbeddingTable* table = nullptr,
                          std::ostream* log = nullptr);

/// Tags raw sentences with a PW[, PPH[, IPH]] model chain. has_level marks
/// which levels were produced.
struct CascadePrediction {
  std::array<std::vector<TagSequence>, 3> tags;
  std::array<bool, 3> has_level{};
};

CascadePrediction cascade_predict(
    std::span<const ModelBundle* const> chain,
    std::span<const std::vector<std::string>> sentences);

// --- gradient checking ---

/// Central-difference check of every parameter (network, transitions,
/// initial scores) against the analytic gradients on one example. Returns
/// the worst relative error |a - n| / max(|a|, |n|, 1e-8). Guarded to small
/// models: hidden <= 16, positions <= 8.
double gradient_check(ModelBundle& bundle, const TrainingExample& example,
                      double epsilon);

// --- serialization ---

inline constexpr int kModelSchemaVersion = 1;

/// Malformed or incompatible model file; the message carries the source and
/// line number.
class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Self-describing text form: header block (schema version, level, topology,
/// hidden size, feature mode, dictionary or embedding reference), then every
/// named parameter tensor with 17-significant-digit values. Deterministic:
/// equal bundles serialize to equal bytes.
std::string serialize_model(const ModelBundle& bundle);
void save_model(const ModelBundle& bundle, const std::filesystem::path& path);

/// Inverse of serialize_model; value-exact. Embedding-mode bundles reload
/// their table from the recorded embedding file path.
ModelBundle load_model(std::istream& in, std::string_view source);
ModelBundle load_model(const std::filesystem::path& path);

}  // namespace prosody
