#include "prosody/inference.hpp"

#include <array>
#include <cmath>
#include "prosody/strings.hpp"
#include <stdexcept>

namespace prosody {

namespace {

constexpr std::size_t kTags = static_cast<std::size_t>(kNumTags);

void check_shapes(const Matrix& f, const TransitionMatrix& trans,
                  std::string_view where) {
  if (f.rows() == 0) {
    throw std::invalid_argument(fmt("{}: empty score matrix", where));
  }
  if (f.cols() != kTags) {
    throw DimensionError(fmt("{}: scores are {}x{} but {} tags exist",
                                     where, f.rows(), f.cols(), kTags));
  }
  if (trans.scores.rows() != kTags || trans.scores.cols() != kTags ||
      trans.init.size() != kTags) {
    throw DimensionError(fmt(
        "{}: transition table is {}x{} with {} initial scores; expected "
        "{}x{} and {}",
        where, trans.scores.rows(), trans.scores.cols(), trans.init.size(),
        kTags, kTags, kTags));
  }
}

}  // namespace

std::vector<ParamView> TransitionMatrix::param_views() {
  std::vector<ParamView> out;
  out.push_back(
      {"trans.s", scores.values(), scores.rows(), scores.cols()});
  out.push_back({"trans.s_init", std::span(init.data(), init.size()),
                 init.size(), 1});
  return out;
}

std::vector<ConstParamView> TransitionMatrix::param_views() const {
  std::vector<ConstParamView> out;
  out.push_back(
      {"trans.s", scores.values(), scores.rows(), scores.cols()});
  out.push_back({"trans.s_init", std::span(init.data(), init.size()),
                 init.size(), 1});
  return out;
}

TransitionMatrix make_transitions(Rng& rng) {
  TransitionMatrix t;
  t.scores = Matrix(kTags, kTags);
  for (double& v : t.scores.values()) v = rng.uniform(-0.1, 0.1);
  t.init = Vector(kTags);
  for (double& v : t.init) v = rng.uniform(-0.1, 0.1);
  return t;
}

TransitionMatrix zeros_like(const TransitionMatrix&) {
  TransitionMatrix z;
  z.scores = Matrix(kTags, kTags);
  z.init = Vector(kTags, 0.0);
  return z;
}

double sentence_score(const Matrix& f, const TransitionMatrix& trans,
                      const TagSequence& tags) {
  check_shapes(f, trans, "sentence_score");
  if (tags.size() != f.rows()) {
    throw DimensionError(
        fmt("sentence_score: {} positions but {} tags", f.rows(),
                    tags.size()));
  }
  auto idx = [](Tag t) { return static_cast<std::size_t>(t); };
  double acc = trans.init[idx(tags[0])];
  acc += f(0, idx(tags[0]));
  for (std::size_t t = 1; t < tags.size(); ++t) {
    acc += trans.scores(idx(tags[t - 1]), idx(tags[t]));
    acc += f(t, idx(tags[t]));
  }
  return acc;
}

ViterbiResult viterbi_decode(const Matrix& f, const TransitionMatrix& trans) {
  check_shapes(f, trans, "viterbi_decode");
  const std::size_t T = f.rows();

  std::array<double, kTags> delta;
  for (std::size_t y = 0; y < kTags; ++y) {
    delta[y] = trans.init[y];
    delta[y] += f(0, y);
  }
  // back[t][y]: best predecessor of tag y at position t.
  std::vector<std::array<std::size_t, kTags>> back(T);
  for (std::size_t t = 1; t < T; ++t) {
    std::array<double, kTags> next;
    for (std::size_t y = 0; y < kTags; ++y) {
      double best = delta[0] + trans.scores(0, y);
      std::size_t best_a = 0;
      for (std::size_t a = 1; a < kTags; ++a) {
        const double cand = delta[a] + trans.scores(a, y);
        if (cand > best) {  // strict: ties keep the lower index
          best = cand;
          best_a = a;
        }
      }
      back[t][y] = best_a;
      next[y] = best + f(t, y);
    }
    delta = next;
  }

  std::size_t best_y = 0;
  for (std::size_t y = 1; y < kTags; ++y) {
    if (delta[y] > delta[best_y]) best_y = y;
  }

  ViterbiResult res;
  res.score = delta[best_y];
  res.tags.resize(T);
  res.tags[T - 1] = static_cast<Tag>(best_y);
  for (std::size_t t = T - 1; t > 0; --t) {
    best_y = back[t][best_y];
    res.tags[t - 1] = static_cast<Tag>(best_y);
  }
  return res;
}

LatticeResult log_partition(const Matrix& f, const TransitionMatrix& trans) {
  check_shapes(f, trans, "log_partition");
  const std::size_t T = f.rows();

  // Forward scores alpha_t[y]: log-sum over all prefixes ending in y at t.
  Matrix alpha(T, kTags);
  for (std::size_t y = 0; y < kTags; ++y) {
    double a = trans.init[y];
    a += f(0, y);
    alpha(0, y) = a;
  }
  std::array<double, kTags> acc;
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t y = 0; y < kTags; ++y) {
      for (std::size_t a = 0; a < kTags; ++a) {
        acc[a] = alpha(t - 1, a) + trans.scores(a, y);
      }
      alpha(t, y) = logsumexp(acc) + f(t, y);
    }
  }

  // Backward scores beta_t[a]: log-sum over all suffixes after tag a at t.
  Matrix beta(T, kTags);
  for (std::size_t y = 0; y < kTags; ++y) beta(T - 1, y) = 0.0;
  for (std::size_t t = T - 1; t > 0; --t) {
    for (std::size_t a = 0; a < kTags; ++a) {
      for (std::size_t y = 0; y < kTags; ++y) {
        acc[y] = trans.scores(a, y) + f(t, y) + beta(t, y);
      }
      beta(t - 1, a) = logsumexp(acc);
    }
  }

  LatticeResult res;
  {
    std::array<double, kTags> last;
    for (std::size_t y = 0; y < kTags; ++y) last[y] = alpha(T - 1, y);
    res.log_z = logsumexp(last);
  }

  res.marginals = Matrix(T, kTags);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t y = 0; y < kTags; ++y) {
      res.marginals(t, y) = std::exp(alpha(t, y) + beta(t, y) - res.log_z);
    }
  }

  res.expected_transitions = Matrix(kTags, kTags);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    for (std::size_t a = 0; a < kTags; ++a) {
      for (std::size_t y = 0; y < kTags; ++y) {
        res.expected_transitions(a, y) +=
            std::exp(alpha(t, a) + trans.scores(a, y) + f(t + 1, y) +
                     beta(t + 1, y) - res.log_z);
      }
    }
  }
  return res;
}

std::vector<std::pair<TagSequence, double>> brute_force_paths(
    const Matrix& f, const TransitionMatrix& trans) {
  check_shapes(f, trans, "brute_force_paths");
  const std::size_t T = f.rows();
  if (T > 8) {
    throw std::invalid_argument(fmt(
        "brute_force_paths: {} positions would enumerate 3^{} paths", T, T));
  }

  std::size_t total = 1;
  for (std::size_t t = 0; t < T; ++t) total *= kTags;

  std::vector<std::pair<TagSequence, double>> paths;
  paths.reserve(total);
  TagSequence tags(T);
  for (std::size_t n = 0; n < total; ++n) {
    // Position 0 is the least significant digit of n, so increasing n orders
    // paths by the final tag first.
    std::size_t rem = n;
    for (std::size_t t = 0; t < T; ++t) {
      tags[t] = static_cast<Tag>(rem % kTags);
      rem /= kTags;
    }
    paths.emplace_back(tags, sentence_score(f, trans, tags));
  }
  return paths;
}

}  // namespace prosody
