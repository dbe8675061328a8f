#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "prosody/inference.hpp"

using namespace prosody;

namespace {

Matrix random_scores(std::size_t t_len, Rng& rng, double lo = -2.0,
                     double hi = 2.0) {
  Matrix f(t_len, kNumTags);
  for (double& v : f.values()) v = rng.uniform(lo, hi);
  return f;
}

TransitionMatrix random_transitions(Rng& rng) {
  TransitionMatrix tr;
  tr.scores = Matrix(kNumTags, kNumTags);
  tr.init = Vector(kNumTags);
  for (double& v : tr.scores.values()) v = rng.uniform(-1.0, 1.0);
  for (double& v : tr.init) v = rng.uniform(-1.0, 1.0);
  return tr;
}

TransitionMatrix zero_transitions() {
  TransitionMatrix tr;
  tr.scores = Matrix(kNumTags, kNumTags);
  tr.init = Vector(kNumTags, 0.0);
  return tr;
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("single-position score is init plus emission") {
  Rng rng(1);
  const Matrix f = random_scores(1, rng);
  const TransitionMatrix tr = random_transitions(rng);
  for (std::size_t g = 0; g < kNumTags; ++g) {
    const TagSequence tags = {static_cast<Tag>(g)};
    CHECK(sentence_score(f, tr, tags) == tr.init[g] + f(0, g));
  }
}

TEST_CASE("adding a constant to f adds T*c to every path score") {
  Rng rng(2);
  const std::size_t t_len = 4;
  const Matrix f = random_scores(t_len, rng);
  const TransitionMatrix tr = random_transitions(rng);
  const double c = 0.731;
  Matrix shifted = f;
  for (double& v : shifted.values()) v += c;
  for (const auto& [tags, score] : brute_force_paths(f, tr)) {
    CHECK(sentence_score(shifted, tr, tags) ==
          doctest::Approx(score + t_len * c).epsilon(1e-12));
  }
}

TEST_CASE("two-position score equals an in-test path enumeration") {
  Rng rng(3);
  const Matrix f = random_scores(2, rng);
  const TransitionMatrix tr = random_transitions(rng);
  for (std::size_t a = 0; a < kNumTags; ++a) {
    for (std::size_t b = 0; b < kNumTags; ++b) {
      const double want = tr.init[a] + f(0, a) + tr.scores(a, b) + f(1, b);
      const TagSequence tags = {static_cast<Tag>(a), static_cast<Tag>(b)};
      CHECK(sentence_score(f, tr, tags) ==
            doctest::Approx(want).epsilon(1e-14));
    }
  }
}

TEST_CASE("sentence_score rejects length mismatch") {
  Rng rng(4);
  const Matrix f = random_scores(3, rng);
  const TransitionMatrix tr = random_transitions(rng);
  CHECK_THROWS_AS(sentence_score(f, tr, TagSequence{Tag::B}), DimensionError);
}

TEST_CASE("huge per-tag margins dominate any transition") {
  Rng rng(5);
  const std::size_t t_len = 5;
  Matrix f(t_len, kNumTags);
  for (std::size_t t = 0; t < t_len; ++t) {
    f(t, 0) = -100.0;
    f(t, 1) = 100.0;  // NB wins everywhere
    f(t, 2) = -100.0;
  }
  const TransitionMatrix tr = random_transitions(rng);
  const ViterbiResult result = viterbi_decode(f, tr);
  CHECK(result.tags == TagSequence(t_len, Tag::NB));
}

TEST_CASE("all-zero scores break ties toward tag index 0") {
  const Matrix f(4, kNumTags);
  const TransitionMatrix tr = zero_transitions();
  const ViterbiResult result = viterbi_decode(f, tr);
  CHECK(result.tags == TagSequence(4, Tag::B));
  CHECK(result.score == 0.0);
}

TEST_CASE("viterbi rejects an empty sentence") {
  const Matrix f(0, kNumTags);
  const TransitionMatrix tr = zero_transitions();
  CHECK_THROWS_AS(viterbi_decode(f, tr), std::invalid_argument);
  CHECK_THROWS_AS(log_partition(f, tr), std::invalid_argument);
}

TEST_CASE("brute force enumerates 3^T paths, first position fastest") {
  Rng rng(6);
  const Matrix f = random_scores(2, rng);
  const TransitionMatrix tr = random_transitions(rng);
  const auto paths = brute_force_paths(f, tr);
  REQUIRE(paths.size() == 9);
  // Last position most significant: index i encodes tag_0 = i % 3 and
  // tag_1 = i / 3.
  CHECK(paths[0].first == TagSequence{Tag::B, Tag::B});
  CHECK(paths[1].first == TagSequence{Tag::NB, Tag::B});
  CHECK(paths[2].first == TagSequence{Tag::O, Tag::B});
  CHECK(paths[3].first == TagSequence{Tag::B, Tag::NB});
  CHECK(paths[8].first == TagSequence{Tag::O, Tag::O});
  for (const auto& [tags, score] : paths) {
    CHECK(score == sentence_score(f, tr, tags));
  }
}

TEST_CASE("brute force refuses more than 8 positions") {
  const Matrix f(9, kNumTags);
  const TransitionMatrix tr = zero_transitions();
  CHECK_THROWS_AS(brute_force_paths(f, tr), std::invalid_argument);
}

TEST_CASE("viterbi and log-partition match brute force on 100 instances") {
  Rng rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t t_len = 1 + rng.next_below(6);
    const Matrix f = random_scores(t_len, rng);
    const TransitionMatrix tr = random_transitions(rng);

    const auto paths = brute_force_paths(f, tr);
    const auto best = std::max_element(
        paths.begin(), paths.end(), [](const auto& a, const auto& b) {
          return a.second < b.second;
        });

    const ViterbiResult vit = viterbi_decode(f, tr);
    CHECK(vit.score == best->second);
    CHECK(vit.tags == best->first);  // first maximum = tie-break order
    CHECK(sentence_score(f, tr, vit.tags) == vit.score);

    Vector all_scores;
    all_scores.reserve(paths.size());
    for (const auto& [tags, score] : paths) all_scores.push_back(score);
    const double brute_log_z = logsumexp(all_scores);

    const LatticeResult lattice = log_partition(f, tr);
    CHECK(lattice.log_z == doctest::Approx(brute_log_z).epsilon(1e-8));
    CHECK(lattice.log_z >= vit.score);
  }
}

TEST_CASE("posterior marginals are a distribution at every position") {
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t t_len = 1 + rng.next_below(6);
    const Matrix f = random_scores(t_len, rng);
    const TransitionMatrix tr = random_transitions(rng);
    const LatticeResult lattice = log_partition(f, tr);
    REQUIRE(lattice.marginals.rows() == t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      double sum = 0.0;
      for (std::size_t y = 0; y < kNumTags; ++y) {
        const double p = lattice.marginals(t, y);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0 + 1e-12);
        sum += p;
      }
      CHECK(std::abs(sum - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("marginals match brute-force posterior enumeration") {
  Rng rng(9);
  const std::size_t t_len = 4;
  const Matrix f = random_scores(t_len, rng);
  const TransitionMatrix tr = random_transitions(rng);
  const auto paths = brute_force_paths(f, tr);

  Vector all_scores;
  for (const auto& [tags, score] : paths) all_scores.push_back(score);
  const double log_z = logsumexp(all_scores);

  Matrix want(t_len, kNumTags);
  Matrix want_trans(kNumTags, kNumTags);
  for (const auto& [tags, score] : paths) {
    const double p = std::exp(score - log_z);
    for (std::size_t t = 0; t < t_len; ++t) {
      want(t, static_cast<std::size_t>(tags[t])) += p;
    }
    for (std::size_t t = 0; t + 1 < t_len; ++t) {
      want_trans(static_cast<std::size_t>(tags[t]),
                 static_cast<std::size_t>(tags[t + 1])) += p;
    }
  }

  const LatticeResult lattice = log_partition(f, tr);
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t y = 0; y < kNumTags; ++y) {
      CHECK(lattice.marginals(t, y) ==
            doctest::Approx(want(t, y)).epsilon(1e-10));
    }
  }
  for (std::size_t a = 0; a < kNumTags; ++a) {
    for (std::size_t b = 0; b < kNumTags; ++b) {
      CHECK(lattice.expected_transitions(a, b) ==
            doctest::Approx(want_trans(a, b)).epsilon(1e-10));
    }
  }
}

TEST_CASE("shifting f shifts scores by T*c and keeps the argmax") {
  Rng rng(10);
  const std::size_t t_len = 5;
  const Matrix f = random_scores(t_len, rng);
  const TransitionMatrix tr = random_transitions(rng);
  const double c = -1.37;
  Matrix shifted = f;
  for (double& v : shifted.values()) v += c;

  const ViterbiResult base = viterbi_decode(f, tr);
  const ViterbiResult moved = viterbi_decode(shifted, tr);
  CHECK(moved.tags == base.tags);
  CHECK(moved.score == doctest::Approx(base.score + t_len * c).epsilon(1e-12));

  const double lz = log_partition(f, tr).log_z;
  const double lz_moved = log_partition(shifted, tr).log_z;
  CHECK(lz_moved == doctest::Approx(lz + t_len * c).epsilon(1e-12));
}

TEST_CASE("decoding ignores a constant added to all transitions") {
  Rng rng(11);
  const std::size_t t_len = 5;
  const Matrix f = random_scores(t_len, rng);
  TransitionMatrix tr = random_transitions(rng);
  const ViterbiResult base = viterbi_decode(f, tr);
  for (double& v : tr.scores.values()) v += 2.19;
  const ViterbiResult moved = viterbi_decode(f, tr);
  CHECK(moved.tags == base.tags);
}

TEST_CASE("make_transitions draws from the seeded init range") {
  Rng rng(12);
  const TransitionMatrix tr = make_transitions(rng);
  for (double v : tr.scores.values()) {
    CHECK(v >= -0.1);
    CHECK(v < 0.1);
  }
  for (double v : tr.init) {
    CHECK(v >= -0.1);
    CHECK(v < 0.1);
  }
  const TransitionMatrix z = zeros_like(tr);
  for (double v : z.scores.values()) CHECK(v == 0.0);
  for (double v : z.init) CHECK(v == 0.0);
}

}  // TEST_SUITE
