// Command-line front end over the prosody core library:
//   train / predict / eval / gradcheck / embed-train / split
//
// Exit codes: 0 success, 1 check failure, 2 usage error, 3 data or model
// inconsistency.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "prosody/corpus.hpp"
#include "prosody/embeddings.hpp"
#include "prosody/eval.hpp"
#include "prosody/features.hpp"
#include "prosody/strings.hpp"
#include "prosody/text.hpp"
#include "prosody/training.hpp"

namespace {

using namespace prosody;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

// Flag combinations the option parser cannot reject on its own.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string sci3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

void require_topology(const std::string& topology) {
  bool ok = !topology.empty();
  for (char c : topology) ok = ok && (c == 'F' || c == 'B');
  if (!ok) {
    throw UsageError(
        fmt("bad topology '{}': expected a non-empty string over F "
            "(feed-forward) and B (BLSTM)",
            topology));
  }
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(',', start);
    if (pos == std::string::npos) {
      parts.push_back(s.substr(start));
      break;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

// Plain-text input for predict: one sentence per blank-line block; lines
// inside a block are concatenated.
std::vector<std::vector<std::string>> read_sentence_blocks(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error(fmt("cannot open input '{}'", path.string()));
  }
  std::vector<std::vector<std::string>> sentences;
  std::string line;
  std::string block;
  auto flush = [&] {
    if (block.empty()) return;
    sentences.push_back(utf8_split(normalize_text(block)));
    block.clear();
  };
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    block += line;
  }
  flush();
  if (sentences.empty()) {
    throw std::runtime_error(
        fmt("input '{}' holds no sentences", path.string()));
  }
  return sentences;
}

std::vector<std::vector<std::string>> character_sequences(
    std::span<const AnnotatedSentence> sentences) {
  std::vector<std::vector<std::string>> chars;
  chars.reserve(sentences.size());
  for (const auto& s : sentences) chars.push_back(s.characters);
  return chars;
}

// --- train ---

struct TrainFlags {
  std::string level;
  std::string train_path;
  std::string valid_path;
  std::string out_path;
  std::string topology = "FBB";
  std::size_t hidden = 32;
  std::string features = "onehot";
  std::string embeddings_path;
  std::string prev_models;
  std::optional<double> lr;
  double momentum = 0.9;
  std::size_t batch = 32;
  std::size_t patience = 10;
  std::size_t max_epochs = 500;
  std::uint64_t seed = 1;
  bool select_by_f = false;
  bool no_cascade = false;
};

int cmd_train(const TrainFlags& flags) {
  const Level level = *parse_level(flags.level);
  require_topology(flags.topology);

  TrainConfig config = TrainConfig::defaults_for(level);
  config.topology = flags.topology;
  config.hidden = flags.hidden;
  config.features = flags.features == "embedding" ? FeatureMode::Embedding
                                                  : FeatureMode::OneHot;
  config.momentum = flags.momentum;
  config.batch_size = flags.batch;
  config.patience = flags.patience;
  config.max_epochs = flags.max_epochs;
  config.seed = flags.seed;
  config.select_by_f = flags.select_by_f;
  if (flags.lr) config.learning_rate = *flags.lr;
  if (flags.no_cascade) config.cascade = false;

  if (config.hidden == 0) throw UsageError("--hidden must be positive");
  if (config.batch_size == 0) throw UsageError("--batch must be positive");
  if (config.learning_rate <= 0.0) throw UsageError("--lr must be positive");
  if (config.patience == 0 || config.patience > config.max_epochs) {
    throw UsageError("--patience must be in 1..--max-epochs");
  }
  if (config.features == FeatureMode::Embedding &&
      flags.embeddings_path.empty()) {
    throw UsageError(
        "--features embedding needs --embeddings with a text vector file");
  }
  if (level == Level::Pw && !flags.prev_models.empty()) {
    throw UsageError("pw is the first level; --prev-model does not apply");
  }
  if (config.cascade && flags.prev_models.empty()) {
    const char* need =
        level == Level::Pph ? "the pw model" : "the pw,pph model chain";
    throw UsageError(
        fmt("--level {} trains with the previous level's predicted tags as "
            "a cascade feature; pass --prev-model with {} or disable with "
            "--no-cascade",
            flags.level, need));
  }

  const auto train_sents = parse_corpus(std::filesystem::path(flags.train_path));
  const auto valid_sents = parse_corpus(std::filesystem::path(flags.valid_path));

  ModelBundle bundle =
      config.features == FeatureMode::OneHot
          ? make_bundle(config, build_dictionary(character_sequences(train_sents)))
          : make_bundle(config,
                        load_embeddings_text(
                            std::filesystem::path(flags.embeddings_path)),
                        flags.embeddings_path);

  std::vector<TagSequence> prev_train;
  std::vector<TagSequence> prev_valid;
  if (config.cascade) {
    const auto paths = split_commas(flags.prev_models);
    const auto want = static_cast<std::size_t>(level);
    if (paths.size() != want) {
      throw UsageError(
          fmt("--prev-model expects {} comma-separated model file(s) for "
              "--level {}, got {}",
              want, flags.level, paths.size()));
    }
    std::vector<ModelBundle> prev;
    prev.reserve(paths.size());
    for (const auto& p : paths) {
      prev.push_back(load_model(std::filesystem::path(p)));
    }
    std::vector<const ModelBundle*> chain;
    chain.reserve(prev.size());
    for (const auto& b : prev) chain.push_back(&b);
    prev_train =
        cascade_predict(chain, character_sequences(train_sents)).tags[want - 1];
    prev_valid =
        cascade_predict(chain, character_sequences(valid_sents)).tags[want - 1];
  }

  const auto train_examples =
      prepare_examples(bundle, train_sents, config.cascade ? &prev_train : nullptr);
  const auto valid_examples =
      prepare_examples(bundle, valid_sents, config.cascade ? &prev_valid : nullptr);

  std::cout << fmt(
      "training {}: topology {}, hidden {}, input dim {}, {} train / {} "
      "valid sentences\n",
      level_name(level), config.topology, config.hidden,
      bundle.network.input_dim, train_examples.size(), valid_examples.size());

  FitResult result =
      fit(std::move(bundle), train_examples, valid_examples, {}, &std::cout);
  save_model(result.best, std::filesystem::path(flags.out_path));
  std::cout << fmt("best epoch {} (validation error {}); model written to {}\n",
                   result.best_epoch,
                   fixed6(result.records[result.best_epoch - 1].valid_error),
                   flags.out_path);
  return kExitOk;
}

// --- predict ---

struct PredictFlags {
  std::string models;
  std::string input;
  std::string out;
};

int cmd_predict(const PredictFlags& flags) {
  const auto paths = split_commas(flags.models);
  if (paths.empty() || paths.size() > 3) {
    throw UsageError("--models expects pw.model[,pph.model[,iph.model]]");
  }
  std::vector<ModelBundle> models;
  models.reserve(paths.size());
  for (const auto& p : paths) {
    models.push_back(load_model(std::filesystem::path(p)));
  }
  std::vector<const ModelBundle*> chain;
  chain.reserve(models.size());
  for (const auto& b : models) chain.push_back(&b);

  const auto sentences = read_sentence_blocks(flags.input);
  const CascadePrediction pred = cascade_predict(chain, sentences);

  PredictionFile out;
  out.has_level = pred.has_level;
  out.sentences.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    AnnotatedSentence s;
    s.characters = sentences[i];
    for (std::size_t k = 0; k < 3; ++k) {
      s.tags(static_cast<Level>(k)) =
          pred.has_level[k] ? pred.tags[k][i]
                            : TagSequence(s.characters.size(), Tag::NB);
    }
    out.sentences.push_back(std::move(s));
  }
  write_predictions(out, std::filesystem::path(flags.out));
  std::cout << fmt("tagged {} sentence(s) with {} model(s); wrote {}\n",
                   sentences.size(), paths.size(), flags.out);
  return kExitOk;
}

// --- eval ---

struct EvalFlags {
  std::string pred;
  std::string gold;
  std::string out;
  bool kv = false;
};

int cmd_eval(const EvalFlags& flags) {
  const PredictionFile pred =
      parse_predictions(std::filesystem::path(flags.pred));
  const PredictionFile gold =
      parse_predictions(std::filesystem::path(flags.gold));
  if (pred.sentences.size() != gold.sentences.size()) {
    throw UsageError(fmt("prediction and gold files disagree: {} vs {} "
                         "sentences",
                         pred.sentences.size(), gold.sentences.size()));
  }
  for (std::size_t i = 0; i < pred.sentences.size(); ++i) {
    if (pred.sentences[i].length() != gold.sentences[i].length()) {
      throw UsageError(
          fmt("sentence {}: prediction has {} characters, gold has {}", i + 1,
              pred.sentences[i].length(), gold.sentences[i].length()));
    }
  }

  std::vector<std::pair<Level, PrfMetrics>> rows;
  for (std::size_t k = 0; k < 3; ++k) {
    if (!pred.has_level[k]) continue;
    const auto level = static_cast<Level>(k);
    if (!gold.has_level[k]) {
      throw UsageError(fmt("gold file lacks {} tags that the prediction "
                           "provides",
                           level_name(level)));
    }
    std::vector<TagSequence> p;
    std::vector<TagSequence> g;
    p.reserve(pred.sentences.size());
    g.reserve(gold.sentences.size());
    for (std::size_t i = 0; i < pred.sentences.size(); ++i) {
      p.push_back(pred.sentences[i].tags(level));
      g.push_back(gold.sentences[i].tags(level));
    }
    rows.emplace_back(level, score_prf(p, g));
  }
  if (rows.empty()) {
    throw UsageError("prediction file carries no tag levels to score");
  }

  const std::string report = emit_report(rows);
  std::cout << report;
  if (flags.kv) std::cout << emit_kv(rows);
  if (!flags.out.empty()) {
    std::ofstream out(flags.out, std::ios::binary);
    if (!out) {
      throw std::runtime_error(fmt("cannot write report '{}'", flags.out));
    }
    out << report;
    if (flags.kv) out << emit_kv(rows);
  }
  return kExitOk;
}

// --- gradcheck ---

struct GradcheckFlags {
  std::string topology = "FB";
  std::size_t hidden = 8;
  std::size_t length = 5;
  double epsilon = 1e-5;
  double threshold = 1e-4;
  std::uint64_t seed = 1;
};

int cmd_gradcheck(const GradcheckFlags& flags) {
  require_topology(flags.topology);
  if (flags.hidden == 0 || flags.hidden > 16) {
    throw UsageError(
        "--hidden must be in 1..16 (finite differences need a small model)");
  }
  if (flags.length == 0 || flags.length > 8) {
    throw UsageError("--length must be in 1..8");
  }
  if (flags.epsilon <= 0.0) throw UsageError("--epsilon must be positive");

  TrainConfig config = TrainConfig::defaults_for(Level::Pw);
  config.topology = flags.topology;
  config.hidden = flags.hidden;
  config.seed = flags.seed;

  const auto sentences = synth_toy_corpus(flags.seed, 4);
  ModelBundle bundle =
      make_bundle(config, build_dictionary(character_sequences(sentences)));

  AnnotatedSentence sentence = sentences.front();
  const std::size_t T = std::min(flags.length, sentence.length());
  sentence.characters.resize(T);
  sentence.pw_tags.resize(T);

  const TrainingExample example{encode_for_bundle(bundle, sentence.characters),
                                sentence.pw_tags};
  const double err = gradient_check(bundle, example, flags.epsilon);
  std::cout << fmt(
      "max relative gradient error {} (topology {}, hidden {}, {} positions, "
      "epsilon {}, threshold {})\n",
      sci3(err), flags.topology, flags.hidden, T, sci3(flags.epsilon),
      sci3(flags.threshold));
  if (err < flags.threshold) {
    std::cout << "gradient check passed\n";
    return kExitOk;
  }
  std::cout << "gradient check FAILED\n";
  return kExitCheckFailed;
}

// --- embed-train ---

struct EmbedFlags {
  std::string input;
  std::string out;
  std::size_t dim = 100;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double lr = 0.025;
  std::uint64_t seed = 1;
};

int cmd_embed_train(const EmbedFlags& flags) {
  if (flags.dim < 2) throw UsageError("--dim must be at least 2");
  if (flags.lr <= 0.0) throw UsageError("--lr must be positive");

  SkipgramConfig config;
  config.dim = flags.dim;
  config.window = flags.window;
  config.negatives = flags.negatives;
  config.epochs = flags.epochs;
  config.learning_rate = flags.lr;
  config.seed = flags.seed;

  const EmbeddingTable table =
      train_skipgram_file(std::filesystem::path(flags.input), config);
  save_embeddings_text(table, std::filesystem::path(flags.out));
  std::cout << fmt("trained {} vector(s) of dimension {}; wrote {}\n",
                   table.size(), table.dim(), flags.out);
  return kExitOk;
}

// --- split ---

struct SplitFlags {
  std::string input;
  std::string out_train;
  std::string out_valid;
  std::string out_test;
  std::size_t n_train = 0;
  std::size_t n_valid = 0;
  std::size_t n_test = 0;
  std::uint64_t seed = 1;
};

int cmd_split(const SplitFlags& flags) {
  const auto sentences = parse_corpus(std::filesystem::path(flags.input));
  CorpusSplit split;
  try {
    split = split_corpus(sentences, flags.n_train, flags.n_valid, flags.n_test,
                         flags.seed);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  write_corpus(split.train, std::filesystem::path(flags.out_train));
  write_corpus(split.valid, std::filesystem::path(flags.out_valid));
  write_corpus(split.test, std::filesystem::path(flags.out_test));
  std::cout << fmt("split {} sentences into {} train / {} valid / {} test\n",
                   sentences.size(), split.train.size(), split.valid.size(),
                   split.test.size());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Chinese prosodic boundary prediction: stacked feed-forward/BLSTM "
      "taggers with transition-score inference"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  CLI::App* train_cmd =
      app.add_subcommand("train", "Train one prosodic level's tagger");
  train_cmd->add_option("--level", train_flags.level, "Boundary level")
      ->required()
      ->check(CLI::IsMember({"pw", "pph", "iph"}));
  train_cmd->add_option("--train", train_flags.train_path, "Training corpus TSV")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd
      ->add_option("--valid", train_flags.valid_path, "Validation corpus TSV")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_flags.out_path, "Output model file")
      ->required();
  train_cmd
      ->add_option("--topology", train_flags.topology,
                   "Hidden layer stack over F (feed-forward) and B (BLSTM)")
      ->capture_default_str();
  train_cmd->add_option("--hidden", train_flags.hidden, "Units per hidden layer")
      ->capture_default_str();
  train_cmd->add_option("--features", train_flags.features, "Input features")
      ->check(CLI::IsMember({"onehot", "embedding"}))
      ->capture_default_str();
  train_cmd
      ->add_option("--embeddings", train_flags.embeddings_path,
                   "Text vector file (required with --features embedding)")
      ->check(CLI::ExistingFile);
  train_cmd->add_option(
      "--prev-model", train_flags.prev_models,
      "Previous levels' model files, comma-separated (pw[,pph]); required "
      "for pph/iph unless --no-cascade");
  train_cmd->add_option(
      "--lr", train_flags.lr,
      "Learning rate (default 1e-3 for pw, 1e-4 for pph and iph)");
  train_cmd->add_option("--momentum", train_flags.momentum, "Momentum coefficient")
      ->capture_default_str();
  train_cmd->add_option("--batch", train_flags.batch, "Sentences per SGD batch")
      ->capture_default_str();
  train_cmd
      ->add_option("--patience", train_flags.patience,
                   "Stop after this many epochs without validation improvement")
      ->capture_default_str();
  train_cmd->add_option("--max-epochs", train_flags.max_epochs, "Hard epoch cap")
      ->capture_default_str();
  train_cmd
      ->add_option("--seed", train_flags.seed,
                   "RNG seed for initialization and shuffling")
      ->capture_default_str();
  train_cmd->add_flag(
      "--select-by-f", train_flags.select_by_f,
      "Select the best epoch by boundary F-score instead of tag error rate");
  train_cmd->add_flag("--no-cascade", train_flags.no_cascade,
                      "Drop the previous-level tag feature for pph/iph");

  PredictFlags predict_flags;
  CLI::App* predict_cmd = app.add_subcommand(
      "predict", "Tag raw text with a trained model chain");
  predict_cmd
      ->add_option("--models", predict_flags.models,
                   "Model files pw.model[,pph.model[,iph.model]]")
      ->required();
  predict_cmd
      ->add_option("--input", predict_flags.input,
                   "Plain text; one sentence per blank-line block")
      ->required()
      ->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", predict_flags.out, "Output predictions TSV")
      ->required();

  EvalFlags eval_flags;
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "Score predictions against gold annotations");
  eval_cmd->add_option("--pred", eval_flags.pred, "Predictions TSV")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--gold", eval_flags.gold, "Gold corpus TSV")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval_flags.out,
                       "Also write the report to this file");
  eval_cmd->add_flag("--kv", eval_flags.kv,
                     "Append a machine-readable key-value dump");

  GradcheckFlags gradcheck_flags;
  CLI::App* gradcheck_cmd = app.add_subcommand(
      "gradcheck",
      "Check analytic gradients against central finite differences");
  gradcheck_cmd
      ->add_option("--topology", gradcheck_flags.topology, "Layer stack to check")
      ->capture_default_str();
  gradcheck_cmd
      ->add_option("--hidden", gradcheck_flags.hidden, "Units per layer (<= 16)")
      ->capture_default_str();
  gradcheck_cmd
      ->add_option("--length", gradcheck_flags.length,
                   "Sentence positions (<= 8)")
      ->capture_default_str();
  gradcheck_cmd
      ->add_option("--epsilon", gradcheck_flags.epsilon,
                   "Finite-difference step")
      ->capture_default_str();
  gradcheck_cmd
      ->add_option("--threshold", gradcheck_flags.threshold,
                   "Max tolerated relative error")
      ->capture_default_str();
  gradcheck_cmd->add_option("--seed", gradcheck_flags.seed, "RNG seed")
      ->capture_default_str();

  EmbedFlags embed_flags;
  CLI::App* embed_cmd = app.add_subcommand(
      "embed-train",
      "Train character embeddings (skip-gram, negative sampling)");
  embed_cmd
      ->add_option("--input", embed_flags.input,
                   "Raw UTF-8 text, one sentence per line")
      ->required()
      ->check(CLI::ExistingFile);
  embed_cmd->add_option("--out", embed_flags.out, "Output text vector file")
      ->required();
  embed_cmd->add_option("--dim", embed_flags.dim, "Vector dimension")
      ->capture_default_str();
  embed_cmd->add_option("--window", embed_flags.window, "Max context offset")
      ->capture_default_str();
  embed_cmd
      ->add_option("--negatives", embed_flags.negatives,
                   "Negative samples per context pair")
      ->capture_default_str();
  embed_cmd->add_option("--epochs", embed_flags.epochs, "Passes over the text")
      ->capture_default_str();
  embed_cmd->add_option("--lr", embed_flags.lr, "Learning rate")
      ->capture_default_str();
  embed_cmd->add_option("--seed", embed_flags.seed, "RNG seed")
      ->capture_default_str();

  SplitFlags split_flags;
  CLI::App* split_cmd = app.add_subcommand(
      "split", "Shuffle a corpus and split it into train/valid/test files");
  split_cmd->add_option("--input", split_flags.input, "Corpus TSV")
      ->required()
      ->check(CLI::ExistingFile);
  split_cmd->add_option("--train", split_flags.n_train, "Training sentences")
      ->required();
  split_cmd->add_option("--valid", split_flags.n_valid, "Validation sentences")
      ->required();
  split_cmd->add_option("--test", split_flags.n_test, "Test sentences")
      ->required();
  split_cmd
      ->add_option("--out-train", split_flags.out_train, "Training output path")
      ->required();
  split_cmd
      ->add_option("--out-valid", split_flags.out_valid, "Validation output path")
      ->required();
  split_cmd->add_option("--out-test", split_flags.out_test, "Test output path")
      ->required();
  split_cmd->add_option("--seed", split_flags.seed, "Shuffle seed")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(train_flags);
    if (predict_cmd->parsed()) return cmd_predict(predict_flags);
    if (eval_cmd->parsed()) return cmd_eval(eval_flags);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(gradcheck_flags);
    if (embed_cmd->parsed()) return cmd_embed_train(embed_flags);
    if (split_cmd->parsed()) return cmd_split(split_flags);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
