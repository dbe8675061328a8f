// Hot-path microbenchmarks at realistic sizes: a 4030-character one-hot
// dictionary, 40-character sentences, the standard FBB/32 stack.

#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "prosody/embeddings.hpp"
#include "prosody/inference.hpp"
#include "prosody/training.hpp"

namespace {

using namespace prosody;

constexpr std::size_t kDictSize = 4030;  // entries including the unknown
constexpr std::size_t kSentenceLen = 40;

CharDictionary big_dictionary() {
  std::vector<std::string> chars;
  chars.reserve(kDictSize - 1);
  for (std::size_t i = 0; i + 1 < kDictSize; ++i) {
    chars.push_back("c" + std::to_string(i));
  }
  return CharDictionary(std::move(chars));
}

std::vector<std::string> random_sentence(const CharDictionary& dict, Rng& rng,
                                         std::size_t length) {
  std::vector<std::string> chars;
  chars.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    chars.push_back(dict.known_chars()[rng.next_below(dict.size() - 1)]);
  }
  return chars;
}

TagSequence random_tags(Rng& rng, std::size_t length) {
  TagSequence tags;
  tags.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    tags.push_back(static_cast<Tag>(rng.next_below(2)));  // B or NB
  }
  return tags;
}

ModelBundle standard_bundle(const CharDictionary& dict) {
  TrainConfig config = TrainConfig::defaults_for(Level::Pw);
  config.topology = "FBB";
  config.hidden = 32;
  return make_bundle(config, dict);
}

void forward_benchmark(benchmark::State& state) {
  const CharDictionary dict = big_dictionary();
  const ModelBundle bundle = standard_bundle(dict);
  Rng rng(1);
  const EncodedSentence enc =
      encode_for_bundle(bundle, random_sentence(dict, rng, kSentenceLen));
  for (auto _ : state) {
    Matrix scores = network_forward(bundle.network, enc);
    benchmark::DoNotOptimize(scores.data());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(kSentenceLen));
}
BENCHMARK(forward_benchmark)->Name("network_forward/FBB32/T40/M4030");

void backward_benchmark(benchmark::State& state) {
  const CharDictionary dict = big_dictionary();
  const ModelBundle bundle = standard_bundle(dict);
  Rng rng(2);
  const EncodedSentence enc =
      encode_for_bundle(bundle, random_sentence(dict, rng, kSentenceLen));
  ForwardCache cache;
  const Matrix scores = network_forward(bundle.network, enc, &cache);
  Matrix d_scores(scores.rows(), scores.cols());
  for (double& v : d_scores.values()) v = rng.uniform(-1.0, 1.0);
  for (auto _ : state) {
    NetworkModel grads = network_backward(bundle.network, cache, d_scores);
    benchmark::DoNotOptimize(grads.w_out.data());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(kSentenceLen));
}
BENCHMARK(backward_benchmark)->Name("network_backward/FBB32/T40/M4030");

void viterbi_benchmark(benchmark::State& state) {
  Rng rng(3);
  Matrix f(kSentenceLen, kNumTags);
  for (double& v : f.values()) v = rng.uniform(-2.0, 2.0);
  const TransitionMatrix trans = make_transitions(rng);
  for (auto _ : state) {
    ViterbiResult result = viterbi_decode(f, trans);
    benchmark::DoNotOptimize(result.score);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(kSentenceLen));
}
BENCHMARK(viterbi_benchmark)->Name("viterbi_decode/T40");

void log_partition_benchmark(benchmark::State& state) {
  Rng rng(4);
  Matrix f(kSentenceLen, kNumTags);
  for (double& v : f.values()) v = rng.uniform(-2.0, 2.0);
  const TransitionMatrix trans = make_transitions(rng);
  for (auto _ : state) {
    LatticeResult result = log_partition(f, trans);
    benchmark::DoNotOptimize(result.log_z);
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<int64_t>(kSentenceLen));
}
BENCHMARK(log_partition_benchmark)->Name("log_partition/T40");

void loss_benchmark(benchmark::State& state) {
  Rng rng(5);
  Matrix f(kSentenceLen, kNumTags);
  for (double& v : f.values()) v = rng.uniform(-2.0, 2.0);
  const TransitionMatrix trans = make_transitions(rng);
  const TagSequence gold = random_tags(rng, kSentenceLen);
  for (auto _ : state) {
    SllGrads grads = sll_loss_and_grads(f, trans, gold);
    benchmark::DoNotOptimize(grads.loss);
  }
}
BENCHMARK(loss_benchmark)->Name("sll_loss_and_grads/T40");

void train_epoch_benchmark(benchmark::State& state) {
  const CharDictionary dict = big_dictionary();
  ModelBundle bundle = standard_bundle(dict);
  Rng rng(6);
  std::vector<TrainingExample> train;
  for (int i = 0; i < 32; ++i) {
    const auto chars = random_sentence(dict, rng, 20);
    train.push_back(
        {encode_for_bundle(bundle, chars), random_tags(rng, 20)});
  }
  auto params = bundle.param_views();
  OptimizerState optimizer = init_optimizer(1e-3, 0.9, params);
  Rng shuffle_rng(7);
  for (auto _ : state) {
    const double loss = train_epoch(bundle, train, optimizer, shuffle_rng);
    benchmark::DoNotOptimize(loss);
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(train_epoch_benchmark)
    ->Name("train_epoch/FBB32/32x20/M4030")
    ->Unit(benchmark::kMillisecond);

void skipgram_benchmark(benchmark::State& state) {
  std::string corpus;
  Rng rng(8);
  for (int line = 0; line < 200; ++line) {
    for (int t = 0; t < 30; ++t) {
      corpus += static_cast<char>('a' + rng.next_below(26));
    }
    corpus += '\n';
  }
  SkipgramConfig config;
  config.dim = 32;
  config.epochs = 1;
  for (auto _ : state) {
    EmbeddingTable table = train_skipgram(corpus, config);
    benchmark::DoNotOptimize(table.size());
  }
  state.SetItemsProcessed(state.iterations() * 200 * 30);
}
BENCHMARK(skipgram_benchmark)
    ->Name("skipgram_pass/6000tok/dim32")
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
