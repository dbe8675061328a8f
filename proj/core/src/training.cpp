#include "prosody/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <utility>
#include <variant>

#include "prosody/eval.hpp"
#include "prosody/strings.hpp"

namespace prosody {

TrainConfig TrainConfig::defaults_for(Level level) {
  TrainConfig c;
  c.level = level;
  if (level != Level::Pw) {
    c.learning_rate = 1e-4;
    c.cascade = true;
  }
  return c;
}

std::size_t ModelBundle::base_dim() const {
  return config.features == FeatureMode::OneHot ? dictionary.size()
                                                : embeddings.dim();
}

std::vector<ParamView> ModelBundle::param_views() {
  auto views = network.param_views();
  auto trans = transitions.param_views();
  views.insert(views.end(), trans.begin(), trans.end());
  return views;
}

std::vector<ConstParamView> ModelBundle::param_views() const {
  auto views = network.param_views();
  auto trans = transitions.param_views();
  views.insert(views.end(), trans.begin(), trans.end());
  return views;
}

namespace {

ModelBundle init_bundle(const TrainConfig& config, std::size_t base_dim) {
  if (config.level == Level::Pw && config.cascade) {
    throw std::invalid_argument(
        "make_bundle: the PW level has no previous level to cascade from");
  }
  ModelBundle b;
  b.config = config;
  const std::size_t input_dim = base_dim + (config.cascade ? 1 : 0);
  Rng rng(config.seed);
  b.network = make_network(config.topology, input_dim, config.hidden, rng);
  b.transitions = make_transitions(rng);
  return b;
}

void accumulate_grads(std::span<const ParamView> acc,
                      std::span<const ConstParamView> grads) {
  for (std::size_t k = 0; k < acc.size(); ++k) {
    auto dst = acc[k].values;
    auto src = grads[k].values;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

// --- extended-precision reference loss for finite differences ---
//
// An 80-bit forward pass written independently of the production code
// (dense, cache-free, no sparse shortcuts). Double-precision evaluation
// cannot support the check: the loss is O(T), so two evaluations carry
// ~1e-14 of roundoff, and against the 1e-8 relative-error floor that alone
// exceeds the 1e-4 tolerance whenever a true gradient is near zero (which
// deep stacks produce routinely).

using LD = long double;
using LdVec = std::vector<LD>;

LD sigmoid_ld(LD z) { return 1.0L / (1.0L + std::exp(-z)); }

LdVec affine_ld(const Matrix& w, const LdVec& x, const Vector& b) {
  LdVec out(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    LD acc = b[i];
    for (std::size_t j = 0; j < w.cols(); ++j) {
      acc += static_cast<LD>(w(i, j)) * x[j];
    }
    out[i] = acc;
  }
  return out;
}

std::vector<LdVec> lstm_scan_ld(const LstmCellParams& p,
                                const std::vector<LdVec>& xs, bool reverse) {
  const std::size_t T = xs.size();
  const std::size_t H = p.hidden_size();
  std::vector<LdVec> hidden(T);
  LdVec h(H, 0.0L);
  LdVec c(H, 0.0L);
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t t = reverse ? T - 1 - step : step;
    const LdVec& x = xs[t];
    LdVec next_h(H);
    LdVec next_c(H);
    for (std::size_t i = 0; i < H; ++i) {
      LD ai = p.b_i[i];
      LD af = p.b_f[i];
      LD ag = p.b_c[i];
      LD ao = p.b_o[i];
      for (std::size_t j = 0; j < x.size(); ++j) {
        ai += static_cast<LD>(p.w_xi(i, j)) * x[j];
        af += static_cast<LD>(p.w_xf(i, j)) * x[j];
        ag += static_cast<LD>(p.w_xc(i, j)) * x[j];
        ao += static_cast<LD>(p.w_xo(i, j)) * x[j];
      }
      for (std::size_t j = 0; j < H; ++j) {
        ai += static_cast<LD>(p.w_hi(i, j)) * h[j];
        af += static_cast<LD>(p.w_hf(i, j)) * h[j];
        ag += static_cast<LD>(p.w_hc(i, j)) * h[j];
        ao += static_cast<LD>(p.w_ho(i, j)) * h[j];
      }
      const LD gate_i = sigmoid_ld(ai + static_cast<LD>(p.p_ci[i]) * c[i]);
      const LD gate_f = sigmoid_ld(af + static_cast<LD>(p.p_cf[i]) * c[i]);
      next_c[i] = gate_f * c[i] + gate_i * std::tanh(ag);
      const LD gate_o =
          sigmoid_ld(ao + static_cast<LD>(p.p_co[i]) * next_c[i]);
      next_h[i] = gate_o * std::tanh(next_c[i]);
    }
    h = std::move(next_h);
    c = std::move(next_c);
    hidden[t] = h;
  }
  return hidden;
}

LD logsumexp3_ld(const LD* v) {
  const LD m = std::max({v[0], v[1], v[2]});
  return m + std::log(std::exp(v[0] - m) + std::exp(v[1] - m) +
                      std::exp(v[2] - m));
}

LD reference_loss_ld(const NetworkModel& model, const TransitionMatrix& trans,
                     const EncodedSentence& enc, const TagSequence& gold) {
  const std::size_t T = enc.length();
  std::vector<LdVec> current(T);
  for (std::size_t t = 0; t < T; ++t) {
    const Vector x = enc.materialize(t);
    current[t].assign(x.begin(), x.end());
  }
  for (const auto& layer : model.layers) {
    if (std::holds_alternative<FeedForwardLayer>(layer)) {
      const auto& ff = std::get<FeedForwardLayer>(layer);
      for (auto& x : current) {
        LdVec a = affine_ld(ff.w, x, ff.b);
        for (auto& v : a) v = std::tanh(v);
        x = std::move(a);
      }
    } else {
      const auto& bl = std::get<BlstmLayer>(layer);
      const auto fwd = lstm_scan_ld(bl.forward_cell, current, false);
      const auto bwd = lstm_scan_ld(bl.backward_cell, current, true);
      for (std::size_t t = 0; t < T; ++t) {
        LdVec cat = fwd[t];
        cat.insert(cat.end(), bwd[t].begin(), bwd[t].end());
        current[t] = std::move(cat);
      }
    }
  }

  std::vector<LdVec> f(T);
  for (std::size_t t = 0; t < T; ++t) {
    f[t] = affine_ld(model.w_out, current[t], model.b_out);
  }

  LdVec alpha(kNumTags);
  for (std::size_t y = 0; y < kNumTags; ++y) {
    alpha[y] = static_cast<LD>(trans.init[y]) + f[0][y];
  }
  for (std::size_t t = 1; t < T; ++t) {
    LdVec next(kNumTags);
    for (std::size_t b = 0; b < kNumTags; ++b) {
      LD acc[kNumTags];
      for (std::size_t a = 0; a < kNumTags; ++a) {
        acc[a] = alpha[a] + static_cast<LD>(trans.scores(a, b));
      }
      next[b] = logsumexp3_ld(acc) + f[t][b];
    }
    alpha = std::move(next);
  }
  const LD log_z = logsumexp3_ld(alpha.data());

  auto tag = [&](std::size_t t) { return static_cast<std::size_t>(gold[t]); };
  LD score = static_cast<LD>(trans.init[tag(0)]) + f[0][tag(0)];
  for (std::size_t t = 1; t < T; ++t) {
    score += static_cast<LD>(trans.scores(tag(t - 1), tag(t))) + f[t][tag(t)];
  }
  return log_z - score;
}

}  // namespace

ModelBundle make_bundle(const TrainConfig& config, CharDictionary dictionary) {
  if (config.features != FeatureMode::OneHot) {
    throw std::invalid_argument(
        "make_bundle: a dictionary feeds one-hot features; the config says "
        "embedding");
  }
  ModelBundle b = init_bundle(config, dictionary.size());
  b.dictionary = std::move(dictionary);
  return b;
}

ModelBundle make_bundle(const TrainConfig& config, EmbeddingTable embeddings,
                        std::string embedding_source) {
  if (config.features != FeatureMode::Embedding) {
    throw std::invalid_argument(
        "make_bundle: an embedding table feeds embedding features; the "
        "config says one-hot");
  }
  ModelBundle b = init_bundle(config, embeddings.dim());
  b.embeddings = std::move(embeddings);
  b.embedding_source = std::move(embedding_source);
  return b;
}

EncodedSentence encode_for_bundle(const ModelBundle& bundle,
                                  const std::vector<std::string>& characters,
                                  const TagSequence* prev_tags) {
  if (bundle.cascade() && prev_tags == nullptr) {
    throw std::invalid_argument(fmt(
        "encode_for_bundle: the {} model cascades and needs the previous "
        "level's tags",
        level_name(bundle.level())));
  }
  if (!bundle.cascade() && prev_tags != nullptr) {
    throw std::invalid_argument(fmt(
        "encode_for_bundle: the {} model does not cascade but previous-level "
        "tags were given",
        level_name(bundle.level())));
  }
  if (bundle.config.features == FeatureMode::OneHot) {
    return encode_onehot(characters, bundle.dictionary, prev_tags);
  }
  return encode_embedding(characters, bundle.embeddings, prev_tags);
}

std::vector<TrainingExample> prepare_examples(
    const ModelBundle& bundle, std::span<const AnnotatedSentence> data,
    const std::vector<TagSequence>* prev_tags) {
  if (bundle.cascade()) {
    if (prev_tags == nullptr || prev_tags->size() != data.size()) {
      throw std::invalid_argument(fmt(
          "prepare_examples: the {} model needs one previous-level tag "
          "sequence per sentence",
          level_name(bundle.level())));
    }
  }
  std::vector<TrainingExample> examples;
  examples.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    TrainingExample ex;
    ex.input = encode_for_bundle(
        bundle, data[i].characters,
        bundle.cascade() ? &(*prev_tags)[i] : nullptr);
    ex.gold = data[i].tags(bundle.level());
    examples.push_back(std::move(ex));
  }
  return examples;
}

TagSequence predict_tags(const ModelBundle& bundle,
                         const EncodedSentence& input) {
  const Matrix scores = network_forward(bundle.network, input);
  return viterbi_decode(scores, bundle.transitions).tags;
}

SllGrads sll_loss_and_grads(const Matrix& f, const TransitionMatrix& trans,
                            const TagSequence& gold) {
  const LatticeResult lattice = log_partition(f, trans);
  const double gold_score = sentence_score(f, trans, gold);

  SllGrads g;
  g.loss = lattice.log_z - gold_score;
  g.d_f = lattice.marginals;
  g.d_s = lattice.expected_transitions;
  g.d_s_init = Vector(kNumTags, 0.0);
  for (std::size_t y = 0; y < kNumTags; ++y) {
    g.d_s_init[y] = lattice.marginals(0, y);
  }

  auto idx = [](Tag t) { return static_cast<std::size_t>(t); };
  g.d_f(0, idx(gold[0])) -= 1.0;
  g.d_s_init[idx(gold[0])] -= 1.0;
  for (std::size_t t = 1; t < gold.size(); ++t) {
    g.d_f(t, idx(gold[t])) -= 1.0;
    g.d_s(idx(gold[t - 1]), idx(gold[t])) -= 1.0;
  }
  return g;
}

double train_epoch(ModelBundle& bundle,
                   std::span<const TrainingExample> train,
                   OptimizerState& optimizer, Rng& shuffle_rng) {
  if (train.empty()) {
    throw std::invalid_argument("train_epoch: no training sentences");
  }
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_rng.shuffle(order);

  const auto params = bundle.param_views();
  double loss_sum = 0.0;
  std::size_t done = 0;
  while (done < order.size()) {
    const std::size_t batch =
        std::min(bundle.config.batch_size, order.size() - done);

    NetworkModel net_grad = zeros_like(bundle.network);
    TransitionMatrix trans_grad = zeros_like(bundle.transitions);
    auto grad_views = net_grad.param_views();
    {
      auto tg = trans_grad.param_views();
      grad_views.insert(grad_views.end(), tg.begin(), tg.end());
    }

    for (std::size_t k = 0; k < batch; ++k) {
      const TrainingExample& ex = train[order[done + k]];
      ForwardCache cache;
      const Matrix f = network_forward(bundle.network, ex.input, &cache);
      SllGrads g = sll_loss_and_grads(f, bundle.transitions, ex.gold);
      loss_sum += g.loss;

      const NetworkModel sentence_grad =
          network_backward(bundle.network, cache, g.d_f);
      accumulate_grads(std::span(grad_views).first(grad_views.size() - 2),
                       sentence_grad.param_views());
      for (std::size_t i = 0; i < g.d_s.size(); ++i) {
        trans_grad.scores.values()[i] += g.d_s.values()[i];
      }
      for (std::size_t y = 0; y < kNumTags; ++y) {
        trans_grad.init[y] += g.d_s_init[y];
      }
    }

    sgd_momentum_step(params, grad_views, optimizer);
    done += batch;
  }
  return loss_sum / static_cast<double>(train.size());
}

double tag_error_rate(const ModelBundle& bundle,
                      std::span<const TrainingExample> examples) {
  std::size_t wrong = 0;
  std::size_t total = 0;
  for (const auto& ex : examples) {
    const TagSequence pred = predict_tags(bundle, ex.input);
    for (std::size_t t = 0; t < pred.size(); ++t) {
      if (pred[t] != ex.gold[t]) ++wrong;
    }
    total += pred.size();
  }
  if (total == 0) {
    throw std::invalid_argument("tag_error_rate: no characters to score");
  }
  return static_cast<double>(wrong) / static_cast<double>(total);
}

double boundary_f_score(const ModelBundle& bundle,
                        std::span<const TrainingExample> examples) {
  std::vector<TagSequence> pred;
  std::vector<TagSequence> gold;
  pred.reserve(examples.size());
  gold.reserve(examples.size());
  for (const auto& ex : examples) {
    pred.push_back(predict_tags(bundle, ex.input));
    gold.push_back(ex.gold);
  }
  return score_prf(pred, gold).f_score;
}

FitResult fit(ModelBundle bundle, std::span<const TrainingExample> train,
              std::span<const TrainingExample> valid,
              const ValidationHook& validation_override, std::ostream* log) {
  if (train.empty() || valid.empty()) {
    throw std::invalid_argument(
        "fit: training and validation sets must be non-empty");
  }
  const TrainConfig& config = bundle.config;
  OptimizerState optimizer = [&] {
    auto params = bundle.param_views();
    return init_optimizer(config.learning_rate, config.momentum, params);
  }();
  Rng shuffle_rng(config.seed + 1);  // distinct stream from the init draws

  FitResult result;
  double best_error = std::numeric_limits<double>::infinity();
  std::size_t stale_epochs = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double mean_loss = train_epoch(bundle, train, optimizer, shuffle_rng);
    double valid_error;
    if (validation_override) {
      valid_error = validation_override(epoch, bundle);
    } else if (config.select_by_f) {
      valid_error = 1.0 - boundary_f_score(bundle, valid);
    } else {
      valid_error = tag_error_rate(bundle, valid);
    }
    result.records.push_back({epoch, mean_loss, valid_error});
    if (log != nullptr) {
      char line[128];
      std::snprintf(line, sizeof(line),
                    "epoch %zu  loss %.6f  valid_error %.6f\n", epoch,
                    mean_loss, valid_error);
      *log << line;
    }

    if (valid_error < best_error) {
      best_error = valid_error;
      result.best = bundle;
      result.best_epoch = epoch;
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (stale_epochs >= config.patience) break;
    }
  }
  return result;
}

CascadeResult cascade_run(std::span<const AnnotatedSentence> train,
                          std::span<const AnnotatedSentence> valid,
                          const std::array<TrainConfig, 3>& configs,
                          const EmbeddingTable* table, std::ostream* log) {
  for (std::size_t k = 0; k < 3; ++k) {
    if (configs[k].level != static_cast<Level>(k)) {
      throw std::invalid_argument(
          "cascade_run: configs must be ordered PW, PPH, IPH");
    }
  }
  if (configs[0].features == FeatureMode::Embedding && table == nullptr) {
    throw std::invalid_argument(
        "cascade_run: embedding features need an embedding table");
  }

  CascadeResult result;
  // Predicted tags of the previous level, regenerated after each fit.
  std::vector<TagSequence> prev_train;
  std::vector<TagSequence> prev_valid;

  for (std::size_t k = 0; k < 3; ++k) {
    const TrainConfig& config = configs[k];
    ModelBundle bundle =
        config.features == FeatureMode::OneHot
            ? make_bundle(config, [&] {
                std::vector<std::vector<std::string>> sentences;
                sentences.reserve(train.size());
                for (const auto& s : train) sentences.push_back(s.characters);
                return build_dictionary(sentences);
              }())
            : make_bundle(config, *table);

    const auto prev_ptr = bundle.cascade() ? &prev_train : nullptr;
    const auto train_examples = prepare_examples(bundle, train, prev_ptr);
    const auto valid_examples = prepare_examples(
        bundle, valid, bundle.cascade() ? &prev_valid : nullptr);

    if (log != nullptr) {
      *log << fmt("training {} model (input dim {})\n",
                          level_name(config.level), bundle.network.input_dim);
    }
    FitResult fitres = fit(std::move(bundle), train_examples, valid_examples,
                           {}, log);
    result.records[k] = std::move(fitres.records);
    result.bundles[k] = std::move(fitres.best);

    if (k + 1 < 3) {
      // Feed the NEXT level with this level's predictions, matching what the
      // chain will see at test time.
      const ModelBundle& best = result.bundles[k];
      prev_train.clear();
      for (const auto& ex : train_examples) {
        prev_train.push_back(predict_tags(best, ex.input));
      }
      prev_valid.clear();
      for (const auto& ex : valid_examples) {
        prev_valid.push_back(predict_tags(best, ex.input));
      }
    }
  }
  return result;
}

CascadePrediction cascade_predict(
    std::span<const ModelBundle* const> chain,
    std::span<const std::vector<std::string>> sentences) {
  if (chain.empty() || chain.size() > 3) {
    throw std::invalid_argument(
        "cascade_predict: need 1 to 3 models (PW[, PPH[, IPH]])");
  }
  for (std::size_t k = 0; k < chain.size(); ++k) {
    if (chain[k] == nullptr || chain[k]->level() != static_cast<Level>(k)) {
      throw std::invalid_argument(
          "cascade_predict: models must form a PW, PPH, IPH prefix chain");
    }
  }

  CascadePrediction out;
  std::vector<TagSequence> prev;
  for (std::size_t k = 0; k < chain.size(); ++k) {
    const ModelBundle& bundle = *chain[k];
    std::vector<TagSequence> level_tags;
    level_tags.reserve(sentences.size());
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      const EncodedSentence enc = encode_for_bundle(
          bundle, sentences[i], bundle.cascade() ? &prev[i] : nullptr);
      level_tags.push_back(predict_tags(bundle, enc));
    }
    prev = level_tags;
    out.tags[k] = std::move(level_tags);
    out.has_level[k] = true;
  }
  return out;
}

double gradient_check(ModelBundle& bundle, const TrainingExample& example,
                      double epsilon) {
  if (bundle.config.hidden > 16 || example.gold.size() > 8) {
    throw std::invalid_argument(
        "gradient_check: guarded to hidden <= 16 and sentences <= 8 "
        "positions");
  }
  if (epsilon <= 0.0) {
    throw std::invalid_argument("gradient_check: epsilon must be positive");
  }

  // Analytic gradients.
  ForwardCache cache;
  const Matrix f = network_forward(bundle.network, example.input, &cache);
  const SllGrads g = sll_loss_and_grads(f, bundle.transitions, example.gold);
  NetworkModel net_grad = network_backward(bundle.network, cache, g.d_f);

  std::vector<double> analytic;
  for (const auto& view :
       static_cast<const NetworkModel&>(net_grad).param_views()) {
    analytic.insert(analytic.end(), view.values.begin(), view.values.end());
  }
  analytic.insert(analytic.end(), g.d_s.values().begin(),
                  g.d_s.values().end());
  analytic.insert(analytic.end(), g.d_s_init.begin(), g.d_s_init.end());

  auto loss_at = [&]() {
    return reference_loss_ld(bundle.network, bundle.transitions, example.input,
                             example.gold);
  };

  const auto params = bundle.param_views();
  double max_rel = 0.0;
  std::size_t flat = 0;
  for (const auto& view : params) {
    for (std::size_t i = 0; i < view.values.size(); ++i, ++flat) {
      double& theta = view.values[i];
      const double saved = theta;
      theta = saved + epsilon;
      const double up_theta = theta;
      const LD up = loss_at();
      theta = saved - epsilon;
      const double down_theta = theta;
      const LD down = loss_at();
      theta = saved;

      // Divide by the step the parameter actually took, not 2*epsilon.
      const double numeric = static_cast<double>(
          (up - down) / (static_cast<LD>(up_theta) - down_theta));
      const double a = analytic[flat];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace prosody
