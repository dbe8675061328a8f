#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "prosody/training.hpp"

using namespace prosody;

namespace {

CharDictionary small_dict() {
  return CharDictionary({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j",
                         "k"});  // |D| = 12 with the unknown symbol
}

TrainConfig tiny_config(const std::string& topology, std::size_t hidden) {
  TrainConfig config = TrainConfig::defaults_for(Level::Pw);
  config.topology = topology;
  config.hidden = hidden;
  return config;
}

TrainingExample example_for(const ModelBundle& bundle,
                            const std::vector<std::string>& chars,
                            TagSequence gold,
                            const TagSequence* prev_tags = nullptr) {
  return {encode_for_bundle(bundle, chars, prev_tags), std::move(gold)};
}

std::vector<double> flat_params(const ModelBundle& bundle) {
  std::vector<double> flat;
  for (const auto& view : bundle.param_views()) {
    flat.insert(flat.end(), view.values.begin(), view.values.end());
  }
  return flat;
}

AnnotatedSentence make_sentence(std::vector<std::string> chars,
                                TagSequence pw, TagSequence pph,
                                TagSequence iph) {
  AnnotatedSentence s;
  s.characters = std::move(chars);
  s.pw_tags = std::move(pw);
  s.pph_tags = std::move(pph);
  s.iph_tags = std::move(iph);
  return s;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("per-level defaults") {
  const TrainConfig pw = TrainConfig::defaults_for(Level::Pw);
  CHECK(pw.level == Level::Pw);
  CHECK(pw.learning_rate == 1e-3);
  CHECK(!pw.cascade);
  const TrainConfig pph = TrainConfig::defaults_for(Level::Pph);
  CHECK(pph.level == Level::Pph);
  CHECK(pph.learning_rate == 1e-4);
  CHECK(pph.cascade);
  const TrainConfig iph = TrainConfig::defaults_for(Level::Iph);
  CHECK(iph.learning_rate == 1e-4);
  CHECK(iph.cascade);
  for (const TrainConfig& c : {pw, pph, iph}) {
    CHECK(c.momentum == 0.9);
    CHECK(c.batch_size == 32);
    CHECK(c.patience == 10);
    CHECK(c.max_epochs == 500);
    CHECK(c.topology == "FBB");
    CHECK(c.hidden == 32);
    CHECK(c.features == FeatureMode::OneHot);
    CHECK(!c.select_by_f);
  }
}

TEST_CASE("uniform scores at one position lose exactly ln 3") {
  const Matrix f(1, kNumTags, 0.0);
  TransitionMatrix trans;
  trans.scores = Matrix(kNumTags, kNumTags, 0.0);
  trans.init = Vector(kNumTags, 0.0);
  const SllGrads g = sll_loss_and_grads(f, trans, {Tag::NB});
  CHECK(g.loss == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  // Marginals are uniform; the gold tag's gradient is 1/3 - 1.
  CHECK(g.d_f(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(g.d_f(0, 1) == doctest::Approx(1.0 / 3.0 - 1.0).epsilon(1e-14));
  CHECK(g.d_f(0, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  // No transitions exist at T = 1.
  CHECK(g.d_s == Matrix(kNumTags, kNumTags, 0.0));
  CHECK(g.d_s_init[1] == doctest::Approx(1.0 / 3.0 - 1.0).epsilon(1e-14));
}

TEST_CASE("score-gradient rows sum to zero") {
  Rng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t T = 1 + rng.next_below(5);
    Matrix f(T, kNumTags);
    for (double& v : f.values()) v = rng.uniform(-2.0, 2.0);
    TransitionMatrix trans = make_transitions(rng);
    TagSequence gold;
    for (std::size_t t = 0; t < T; ++t) {
      gold.push_back(static_cast<Tag>(rng.next_below(3)));
    }
    const SllGrads g = sll_loss_and_grads(f, trans, gold);
    CHECK(g.loss >= -1e-12);
    for (std::size_t t = 0; t < T; ++t) {
      double row = 0.0;
      for (std::size_t y = 0; y < kNumTags; ++y) row += g.d_f(t, y);
      CHECK(std::abs(row) < 1e-12);
    }
    double init_sum = 0.0;
    for (double v : g.d_s_init) init_sum += v;
    CHECK(std::abs(init_sum) < 1e-12);
  }
}

TEST_CASE("a huge margin on the gold path drives the loss to zero") {
  const std::size_t T = 4;
  const TagSequence gold = {Tag::B, Tag::NB, Tag::O, Tag::B};
  Matrix f(T, kNumTags, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    f(t, static_cast<std::size_t>(gold[t])) = 100.0;
  }
  TransitionMatrix trans;
  trans.scores = Matrix(kNumTags, kNumTags, 0.0);
  trans.init = Vector(kNumTags, 0.0);
  const SllGrads g = sll_loss_and_grads(f, trans, gold);
  CHECK(g.loss >= 0.0);
  CHECK(g.loss < 1e-6);
}

TEST_CASE("loss gradients match central differences of the loss") {
  Rng rng(11);
  const std::size_t T = 4;
  Matrix f(T, kNumTags);
  for (double& v : f.values()) v = rng.uniform(-1.5, 1.5);
  TransitionMatrix trans = make_transitions(rng);
  const TagSequence gold = {Tag::NB, Tag::B, Tag::O, Tag::NB};
  const SllGrads analytic = sll_loss_and_grads(f, trans, gold);

  const double eps = 1e-5;
  const auto close = [](double a, double n) {
    return std::abs(a - n) <= 1e-8 + 1e-6 * std::max(std::abs(a), std::abs(n));
  };
  auto loss_at = [&]() { return sll_loss_and_grads(f, trans, gold).loss; };

  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t y = 0; y < kNumTags; ++y) {
      const double saved = f(t, y);
      f(t, y) = saved + eps;
      const double hi = loss_at();
      f(t, y) = saved - eps;
      const double lo = loss_at();
      f(t, y) = saved;
      CHECK(close(analytic.d_f(t, y), (hi - lo) / (2 * eps)));
    }
  }
  for (std::size_t a = 0; a < kNumTags; ++a) {
    for (std::size_t b = 0; b < kNumTags; ++b) {
      const double saved = trans.scores(a, b);
      trans.scores(a, b) = saved + eps;
      const double hi = loss_at();
      trans.scores(a, b) = saved - eps;
      const double lo = loss_at();
      trans.scores(a, b) = saved;
      CHECK(close(analytic.d_s(a, b), (hi - lo) / (2 * eps)));
    }
  }
  for (std::size_t y = 0; y < kNumTags; ++y) {
    const double saved = trans.init[y];
    trans.init[y] = saved + eps;
    const double hi = loss_at();
    trans.init[y] = saved - eps;
    const double lo = loss_at();
    trans.init[y] = saved;
    CHECK(close(analytic.d_s_init[y], (hi - lo) / (2 * eps)));
  }
}

TEST_CASE("make_bundle wires dimensions and stays inside the init range") {
  const CharDictionary dict = small_dict();
  ModelBundle pw = make_bundle(tiny_config("FB", 4), dict);
  CHECK(pw.base_dim() == 12);
  CHECK(pw.network.input_dim == 12);
  CHECK(pw.network.topology == "FB");
  CHECK(pw.transitions.scores.rows() == kNumTags);
  for (const auto& view : flat_params(pw)) CHECK(std::abs(view) <= 0.1);

  TrainConfig pph = TrainConfig::defaults_for(Level::Pph);
  pph.topology = "F";
  pph.hidden = 4;
  ModelBundle cascade = make_bundle(pph, dict);
  CHECK(cascade.base_dim() == 12);
  CHECK(cascade.network.input_dim == 13);  // + cascade feature

  EmbeddingTable table(6);
  table.add("天", Vector(6, 0.25));
  TrainConfig emb = tiny_config("B", 4);
  emb.features = FeatureMode::Embedding;
  ModelBundle dense = make_bundle(emb, table, "vectors.vec");
  CHECK(dense.base_dim() == 6);
  CHECK(dense.network.input_dim == 6);
}

TEST_CASE("make_bundle is deterministic under the config seed") {
  const CharDictionary dict = small_dict();
  TrainConfig config = tiny_config("FB", 4);
  config.seed = 9;
  CHECK(serialize_model(make_bundle(config, dict)) ==
        serialize_model(make_bundle(config, dict)));
  TrainConfig other = config;
  other.seed = 10;
  CHECK(serialize_model(make_bundle(config, dict)) !=
        serialize_model(make_bundle(other, dict)));
}

TEST_CASE("make_bundle rejects inconsistent requests") {
  TrainConfig pw_cascade = TrainConfig::defaults_for(Level::Pw);
  pw_cascade.cascade = true;
  CHECK_THROWS_AS(make_bundle(pw_cascade, small_dict()),
                  std::invalid_argument);

  TrainConfig emb = tiny_config("F", 4);
  emb.features = FeatureMode::Embedding;
  CHECK_THROWS_AS(make_bundle(emb, small_dict()), std::invalid_argument);

  CHECK_THROWS_AS(make_bundle(tiny_config("F", 4), EmbeddingTable(4)),
                  std::invalid_argument);
}

TEST_CASE("cascade inputs are demanded exactly when configured") {
  const CharDictionary dict = small_dict();
  const ModelBundle plain = make_bundle(tiny_config("F", 4), dict);
  TrainConfig pph = TrainConfig::defaults_for(Level::Pph);
  pph.topology = "F";
  pph.hidden = 4;
  const ModelBundle cascade = make_bundle(pph, dict);

  const std::vector<std::string> chars = {"a", "b"};
  const TagSequence prev = {Tag::B, Tag::NB};
  CHECK_NOTHROW(encode_for_bundle(plain, chars));
  CHECK_THROWS_AS(encode_for_bundle(plain, chars, &prev),
                  std::invalid_argument);
  CHECK_THROWS_AS(encode_for_bundle(cascade, chars), std::invalid_argument);
  const EncodedSentence enc = encode_for_bundle(cascade, chars, &prev);
  CHECK(enc.cascade);
  CHECK(enc.dim == 13);
}

TEST_CASE("prepare_examples picks the bundle's level as gold") {
  const std::vector<AnnotatedSentence> data = {
      make_sentence({"a", "b"}, {Tag::B, Tag::NB}, {Tag::NB, Tag::B},
                    {Tag::NB, Tag::NB})};
  const CharDictionary dict = small_dict();

  const ModelBundle pw = make_bundle(tiny_config("F", 4), dict);
  const auto pw_examples = prepare_examples(pw, data);
  REQUIRE(pw_examples.size() == 1);
  CHECK(pw_examples[0].gold == data[0].pw_tags);

  TrainConfig pph_config = TrainConfig::defaults_for(Level::Pph);
  pph_config.topology = "F";
  pph_config.hidden = 4;
  pph_config.cascade = false;  // PPH without the cascade feature is allowed
  const ModelBundle pph = make_bundle(pph_config, dict);
  const auto pph_examples = prepare_examples(pph, data);
  CHECK(pph_examples[0].gold == data[0].pph_tags);

  pph_config.cascade = true;
  const ModelBundle pph_cascade = make_bundle(pph_config, dict);
  CHECK_THROWS_AS(prepare_examples(pph_cascade, data), std::invalid_argument);
  const std::vector<TagSequence> prev = {data[0].pw_tags};
  CHECK_NOTHROW(prepare_examples(pph_cascade, data, &prev));
}

TEST_CASE("predict_tags is Viterbi over the network scores") {
  Rng rng(3);
  const CharDictionary dict = small_dict();
  const ModelBundle bundle = make_bundle(tiny_config("FB", 4), dict);
  const std::vector<std::string> chars = {"a", "q", "c", "k"};
  const EncodedSentence enc = encode_for_bundle(bundle, chars);
  const Matrix scores = network_forward(bundle.network, enc);
  const ViterbiResult want = viterbi_decode(scores, bundle.transitions);
  CHECK(predict_tags(bundle, enc) == want.tags);
}

TEST_CASE("hand-built diagonal model measures error rate and F exactly") {
  // Empty topology: scores are W x + b per position. The dictionary maps
  // 甲 -> 0, 乙 -> 1, anything else -> the unknown index 2; the weights route
  // those columns to B, NB, O respectively.
  CharDictionary dict({"甲", "乙"});
  TrainConfig config = tiny_config("", 1);
  ModelBundle bundle = make_bundle(config, dict);
  for (auto& view : bundle.param_views()) {
    for (double& v : view.values) v = 0.0;
  }
  bundle.network.w_out(0, 0) = 5.0;
  bundle.network.w_out(1, 1) = 5.0;
  bundle.network.w_out(2, 2) = 5.0;

  const std::vector<AnnotatedSentence> right = {
      make_sentence({"甲", "乙", "丙"}, {Tag::B, Tag::NB, Tag::O},
                    {Tag::B, Tag::NB, Tag::O}, {Tag::B, Tag::NB, Tag::O})};
  const auto right_examples = prepare_examples(bundle, right);
  CHECK(tag_error_rate(bundle, right_examples) == 0.0);
  CHECK(boundary_f_score(bundle, right_examples) == 1.0);

  const std::vector<AnnotatedSentence> off = {
      make_sentence({"甲", "乙", "丙"}, {Tag::B, Tag::B, Tag::O},
                    {Tag::B, Tag::B, Tag::O}, {Tag::B, Tag::B, Tag::O})};
  const auto off_examples = prepare_examples(bundle, off);
  // One of three positions disagrees; the missed boundary costs recall.
  CHECK(tag_error_rate(bundle, off_examples) ==
        doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(boundary_f_score(bundle, off_examples) ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("optimizer construction rejects bad hyperparameters") {
  const CharDictionary dict = small_dict();
  ModelBundle bundle = make_bundle(tiny_config("FB", 4), dict);
  auto params = bundle.param_views();
  CHECK_THROWS_WITH_AS(init_optimizer(0.0, 0.9, params),
                       doctest::Contains("positive"), std::invalid_argument);
  CHECK_THROWS_AS(init_optimizer(-1e-3, 0.9, params), std::invalid_argument);
  CHECK_THROWS_WITH_AS(init_optimizer(1e-3, 1.0, params),
                       doctest::Contains("[0, 1)"), std::invalid_argument);
  CHECK_THROWS_AS(init_optimizer(1e-3, -0.1, params), std::invalid_argument);

  const OptimizerState ok = init_optimizer(1e-3, 0.9, params);
  CHECK(ok.learning_rate == 1e-3);
  CHECK(ok.momentum == 0.9);
  REQUIRE(ok.velocity.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    REQUIRE(ok.velocity[i].size() == params[i].values.size());
    for (double v : ok.velocity[i]) CHECK(v == 0.0);
  }
}

TEST_CASE("train_epoch is deterministic") {
  const CharDictionary dict = small_dict();
  TrainConfig config = tiny_config("FB", 4);
  config.batch_size = 2;
  ModelBundle a = make_bundle(config, dict);
  ModelBundle b = make_bundle(config, dict);
  const std::vector<TrainingExample> train = {
      example_for(a, {"a", "b", "c"}, {Tag::NB, Tag::B, Tag::NB}),
      example_for(a, {"d", "e"}, {Tag::NB, Tag::B}),
      example_for(a, {"f", "g", "h", "i"},
                  {Tag::NB, Tag::B, Tag::NB, Tag::B})};

  auto pa = a.param_views();
  auto pb = b.param_views();
  OptimizerState oa = init_optimizer(1e-2, 0.9, pa);
  OptimizerState ob = init_optimizer(1e-2, 0.9, pb);
  Rng ra(7), rb(7);
  for (int epoch = 0; epoch < 3; ++epoch) {
    const double la = train_epoch(a, train, oa, ra);
    const double lb = train_epoch(b, train, ob, rb);
    CHECK(la == lb);
  }
  CHECK(serialize_model(a) == serialize_model(b));
  CHECK_THROWS_AS(train_epoch(a, {}, oa, ra), std::invalid_argument);
}

TEST_CASE("a batch sums its sentence gradients") {
  const CharDictionary dict = small_dict();
  TrainConfig config = tiny_config("F", 4);
  config.batch_size = 2;
  ModelBundle single = make_bundle(config, dict);
  ModelBundle doubled = make_bundle(config, dict);
  const std::vector<double> start = flat_params(single);
  REQUIRE(flat_params(doubled) == start);

  const TrainingExample e =
      example_for(single, {"a", "b", "c"}, {Tag::NB, Tag::B, Tag::NB});
  const std::vector<TrainingExample> once = {e};
  const std::vector<TrainingExample> twice = {e, e};

  auto ps = single.param_views();
  auto pd = doubled.param_views();
  OptimizerState os = init_optimizer(1e-3, 0.0, ps);
  OptimizerState od = init_optimizer(1e-3, 0.0, pd);
  Rng rs(1), rd(1);
  const double loss_single = train_epoch(single, once, os, rs);
  const double loss_double = train_epoch(doubled, twice, od, rd);
  CHECK(loss_double == loss_single);  // same pre-step parameters, mean loss

  // One batch of the duplicated sentence moves every parameter twice as far.
  const std::vector<double> after_single = flat_params(single);
  const std::vector<double> after_double = flat_params(doubled);
  for (std::size_t i = 0; i < start.size(); ++i) {
    const double d1 = after_single[i] - start[i];
    const double d2 = after_double[i] - start[i];
    CHECK(std::abs(d2 - 2.0 * d1) <= 1e-12 + 1e-9 * std::abs(d2));
  }
}

TEST_CASE("fit stops after patience epochs without strict improvement") {
  const CharDictionary dict = small_dict();
  TrainConfig config = tiny_config("F", 4);
  config.patience = 10;
  config.max_epochs = 50;
  ModelBundle bundle = make_bundle(config, dict);
  const std::vector<TrainingExample> train = {
      example_for(bundle, {"a", "b"}, {Tag::NB, Tag::B})};

  std::string snapshot_at_7;
  const ValidationHook hook = [&](std::size_t epoch, const ModelBundle& b) {
    if (epoch == 7) snapshot_at_7 = serialize_model(b);
    return epoch <= 7 ? 1.0 - 0.1 * static_cast<double>(epoch) : 0.3;
  };
  std::ostringstream log;
  const FitResult result = fit(bundle, train, train, hook, &log);

  CHECK(result.records.size() == 17);  // 7 improving + 10 stale
  CHECK(result.best_epoch == 7);
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    CHECK(result.records[i].epoch == i + 1);
  }
  CHECK(result.records[0].valid_error == doctest::Approx(0.9));
  CHECK(result.records[16].valid_error == doctest::Approx(0.3));
  REQUIRE(!snapshot_at_7.empty());
  CHECK(serialize_model(result.best) == snapshot_at_7);
  CHECK(log.str().find("epoch 1  loss") != std::string::npos);
}

TEST_CASE("equal validation values do not count as improvement") {
  const CharDictionary dict = small_dict();
  TrainConfig config = tiny_config("F", 4);
  config.patience = 3;
  config.max_epochs = 50;
  ModelBundle bundle = make_bundle(config, dict);
  const std::vector<TrainingExample> train = {
      example_for(bundle, {"a", "b"}, {Tag::NB, Tag::B})};
  const FitResult result =
      fit(bundle, train, train, [](std::size_t, const ModelBundle&) {
        return 0.5;
      });
  CHECK(result.records.size() == 4);  // first epoch best, then 3 stale
  CHECK(result.best_epoch == 1);
}

TEST_CASE("fit runs to max_epochs while validation keeps improving") {
  const CharDictionary dict = small_dict();
  TrainConfig config = tiny_config("F", 4);
  config.patience = 10;
  config.max_epochs = 6;
  ModelBundle bundle = make_bundle(config, dict);
  const std::vector<TrainingExample> train = {
      example_for(bundle, {"a", "b"}, {Tag::NB, Tag::B})};
  const FitResult result =
      fit(bundle, train, train, [](std::size_t epoch, const ModelBundle&) {
        return 1.0 / static_cast<double>(epoch);
      });
  CHECK(result.records.size() == 6);
  CHECK(result.best_epoch == 6);
}

TEST_CASE("cascade_run trains three nested models off predicted context") {
  const auto corpus = synth_toy_corpus(9, 24);
  const std::vector<AnnotatedSentence> train(corpus.begin(),
                                             corpus.begin() + 16);
  const std::vector<AnnotatedSentence> valid(corpus.begin() + 16,
                                             corpus.end());
  std::array<TrainConfig, 3> configs = {TrainConfig::defaults_for(Level::Pw),
                                        TrainConfig::defaults_for(Level::Pph),
                                        TrainConfig::defaults_for(Level::Iph)};
  for (auto& c : configs) {
    c.topology = "B";
    c.hidden = 4;
    c.max_epochs = 3;
    c.patience = 3;
    c.batch_size = 8;
  }

  const CascadeResult run = cascade_run(train, valid, configs);
  std::vector<std::vector<std::string>> train_chars;
  for (const auto& s : train) train_chars.push_back(s.characters);
  const std::size_t base = build_dictionary(train_chars).size();

  CHECK(run.bundles[0].level() == Level::Pw);
  CHECK(!run.bundles[0].cascade());
  CHECK(run.bundles[0].network.input_dim == base);
  CHECK(run.bundles[1].cascade());
  CHECK(run.bundles[1].network.input_dim == base + 1);
  CHECK(run.bundles[2].cascade());
  CHECK(run.bundles[2].network.input_dim == base + 1);
  for (const auto& records : run.records) CHECK(!records.empty());

  const CascadeResult again = cascade_run(train, valid, configs);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(serialize_model(run.bundles[k]) ==
          serialize_model(again.bundles[k]));
  }

  std::array<TrainConfig, 3> shuffled = {configs[1], configs[0], configs[2]};
  CHECK_THROWS_AS(cascade_run(train, valid, shuffled), std::invalid_argument);
}

TEST_CASE("cascade_predict tags through the model chain") {
  const auto corpus = synth_toy_corpus(13, 12);
  const std::vector<AnnotatedSentence> train(corpus.begin(),
                                             corpus.begin() + 8);
  const std::vector<AnnotatedSentence> valid(corpus.begin() + 8, corpus.end());
  std::array<TrainConfig, 3> configs = {TrainConfig::defaults_for(Level::Pw),
                                        TrainConfig::defaults_for(Level::Pph),
                                        TrainConfig::defaults_for(Level::Iph)};
  for (auto& c : configs) {
    c.topology = "F";
    c.hidden = 4;
    c.max_epochs = 2;
    c.patience = 2;
  }
  const CascadeResult run = cascade_run(train, valid, configs);

  std::vector<std::vector<std::string>> sentences;
  for (const auto& s : valid) sentences.push_back(s.characters);

  const std::vector<const ModelBundle*> pw_only = {&run.bundles[0]};
  const CascadePrediction pw_pred = cascade_predict(pw_only, sentences);
  CHECK(pw_pred.has_level == std::array<bool, 3>{true, false, false});
  REQUIRE(pw_pred.tags[0].size() == sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const EncodedSentence enc =
        encode_for_bundle(run.bundles[0], sentences[i]);
    CHECK(pw_pred.tags[0][i] == predict_tags(run.bundles[0], enc));
  }

  const std::vector<const ModelBundle*> full = {&run.bundles[0],
                                                &run.bundles[1],
                                                &run.bundles[2]};
  const CascadePrediction all = cascade_predict(full, sentences);
  CHECK(all.has_level == std::array<bool, 3>{true, true, true});
  CHECK(all.tags[0] == pw_pred.tags[0]);  // PW does not depend on the rest
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    CHECK(all.tags[1][i].size() == sentences[i].size());
    CHECK(all.tags[2][i].size() == sentences[i].size());
  }

  const std::vector<const ModelBundle*> headless = {&run.bundles[1]};
  CHECK_THROWS_AS(cascade_predict(headless, sentences),
                  std::invalid_argument);
  const std::vector<const ModelBundle*> gapped = {&run.bundles[0],
                                                  &run.bundles[2]};
  CHECK_THROWS_AS(cascade_predict(gapped, sentences), std::invalid_argument);
  const std::vector<const ModelBundle*> empty;
  CHECK_THROWS_AS(cascade_predict(empty, sentences), std::invalid_argument);
}

TEST_CASE("gradient_check stays under threshold on mixed stacks") {
  const CharDictionary dict = small_dict();
  ModelBundle bundle = make_bundle(tiny_config("FB", 8), dict);
  const TrainingExample example =
      example_for(bundle, {"a", "d", "b", "k", "f"},
                  {Tag::NB, Tag::B, Tag::NB, Tag::O, Tag::B});
  const double worst = gradient_check(bundle, example, 1e-5);
  CHECK(worst < 1e-4);
}

TEST_CASE("gradient_check covers embedding inputs and the cascade feature") {
  EmbeddingTable table(6);
  Rng rng(21);
  for (const char* tok : {"a", "b", "c", "d"}) {
    Vector row(6);
    for (double& v : row) v = rng.uniform(-0.5, 0.5);
    table.add(tok, row);
  }
  TrainConfig emb = tiny_config("B", 4);
  emb.features = FeatureMode::Embedding;
  ModelBundle dense = make_bundle(emb, table, "vectors.vec");
  const TrainingExample dense_example = example_for(
      dense, {"a", "c", "d", "b"}, {Tag::NB, Tag::B, Tag::NB, Tag::B});
  CHECK(gradient_check(dense, dense_example, 1e-5) < 1e-4);

  TrainConfig pph = TrainConfig::defaults_for(Level::Pph);
  pph.topology = "F";
  pph.hidden = 4;
  ModelBundle cascade = make_bundle(pph, small_dict());
  const TagSequence prev = {Tag::B, Tag::NB, Tag::O, Tag::B};
  const TrainingExample cascade_example =
      example_for(cascade, {"a", "b", "c", "d"},
                  {Tag::NB, Tag::B, Tag::NB, Tag::B}, &prev);
  CHECK(gradient_check(cascade, cascade_example, 1e-5) < 1e-4);
}

TEST_CASE("gradient_check refuses configurations beyond its guard rails") {
  const CharDictionary dict = small_dict();
  ModelBundle wide = make_bundle(tiny_config("F", 32), dict);
  TrainingExample example =
      example_for(wide, {"a", "b"}, {Tag::NB, Tag::B});
  CHECK_THROWS_AS(gradient_check(wide, example, 1e-5), std::invalid_argument);

  ModelBundle narrow = make_bundle(tiny_config("F", 4), dict);
  std::vector<std::string> chars(9, "a");
  TagSequence gold(9, Tag::NB);
  TrainingExample long_example = example_for(narrow, chars, gold);
  CHECK_THROWS_AS(gradient_check(narrow, long_example, 1e-5),
                  std::invalid_argument);
  TrainingExample ok = example_for(narrow, {"a", "b"}, {Tag::NB, Tag::B});
  CHECK_THROWS_AS(gradient_check(narrow, ok, 0.0), std::invalid_argument);
}

TEST_CASE("models serialize to text and reload value-exact") {
  TrainConfig config = TrainConfig::defaults_for(Level::Pph);
  config.topology = "FB";
  config.hidden = 4;
  config.seed = 31;
  ModelBundle bundle = make_bundle(config, small_dict());

  const std::string text = serialize_model(bundle);
  CHECK(text.find("prosody-model") != std::string::npos);
  CHECK(text.find("schema_version 1") != std::string::npos);
  CHECK(text.find("level PPH") != std::string::npos);
  CHECK(text.find("topology FB") != std::string::npos);
  CHECK(text.find("hidden 4") != std::string::npos);
  CHECK(text.find("cascade 1") != std::string::npos);

  std::istringstream in(text);
  const ModelBundle back = load_model(in, "model.txt");
  CHECK(serialize_model(back) == text);

  const TagSequence prev = {Tag::B, Tag::NB, Tag::O};
  const EncodedSentence enc =
      encode_for_bundle(bundle, {"a", "q", "c"}, &prev);
  CHECK(network_forward(back.network, enc) ==
        network_forward(bundle.network, enc));
}

TEST_CASE("loading rejects other schema versions and truncated files") {
  ModelBundle bundle = make_bundle(tiny_config("F", 4), small_dict());
  std::string text = serialize_model(bundle);

  std::string wrong = text;
  const auto pos = wrong.find("schema_version 1");
  REQUIRE(pos != std::string::npos);
  wrong.replace(pos, 16, "schema_version 0");
  std::istringstream bad(wrong);
  CHECK_THROWS_WITH_AS(load_model(bad, "m"),
                       doctest::Contains("not supported"), ModelFormatError);

  std::istringstream cut(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(load_model(cut, "m"), ModelFormatError);

  std::istringstream scribble("not a model\n");
  CHECK_THROWS_AS(load_model(scribble, "m"), ModelFormatError);
}

TEST_CASE("embedding-mode models reload their table from the recorded path") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "prosody_training_test";
  fs::create_directories(dir);
  const fs::path vec_path = dir / "toy.vec";

  EmbeddingTable table(4);
  table.add("天", {0.1, -0.2, 0.3, 1.0 / 3.0});
  table.add("地", {-0.4, 0.5, -0.6, 0.7});
  save_embeddings_text(table, vec_path);

  TrainConfig config = tiny_config("F", 4);
  config.features = FeatureMode::Embedding;

  ModelBundle unreferenced = make_bundle(config, table);
  CHECK_THROWS_AS(serialize_model(unreferenced), std::invalid_argument);

  ModelBundle bundle = make_bundle(config, table, vec_path.string());
  const std::string text = serialize_model(bundle);
  CHECK(text.find("features embedding") != std::string::npos);
  CHECK(text.find(vec_path.string()) != std::string::npos);

  std::istringstream in(text);
  const ModelBundle back = load_model(in, "m");
  CHECK(back.embeddings.dim() == 4);
  REQUIRE(back.embeddings.row("天") != nullptr);
  CHECK(*back.embeddings.row("天") == *bundle.embeddings.row("天"));
  CHECK(serialize_model(back) == text);
}

TEST_CASE("fit learns a one-sentence corpus to zero error") {
  // End-to-end smoke: a BLSTM memorizing one sentence with the real
  // validation measure (no hook).
  const CharDictionary dict = small_dict();
  TrainConfig config = tiny_config("B", 8);
  config.learning_rate = 0.01;
  config.max_epochs = 300;
  config.patience = 300;
  config.batch_size = 4;
  ModelBundle bundle = make_bundle(config, dict);
  const std::vector<TrainingExample> data = {
      example_for(bundle, {"a", "b", "c", "d", "e"},
                  {Tag::NB, Tag::B, Tag::NB, Tag::NB, Tag::B})};
  const FitResult result = fit(bundle, data, data);
  CHECK(tag_error_rate(result.best, data) == 0.0);
  CHECK(boundary_f_score(result.best, data) == 1.0);
  CHECK(result.records.size() <= 300);
}

}  // TEST_SUITE
