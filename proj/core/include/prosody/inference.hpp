#pragma once

#include <vector>

#include "prosody/numerics.hpp"
#include "prosody/tags.hpp"

namespace prosody {

/// Learned tag-transition parameters of the sentence-level lattice.
/// scores(a, b) is the score of tag b directly following tag a; init[b] is
/// the score of opening the sentence with tag b.
struct TransitionMatrix {
  Matrix scores;  // kNumTags x kNumTags
  Vector init;    // kNumTags

  std::vector<ParamView> param_views();
  std::vector<ConstParamView> param_views() const;
};

/// Entries drawn uniformly from [-0.1, 0.1].
TransitionMatrix make_transitions(Rng& rng);
TransitionMatrix zeros_like(const TransitionMatrix& t);

/// Score of one complete tag path given the per-position scores f (T rows,
/// one column per tag). Summation order matches the Viterbi recursion
/// exactly, so path enumeration and the DP agree to the last bit.
double sentence_score(const Matrix& f, const TransitionMatrix& trans,
                      const TagSequence& tags);

struct ViterbiResult {
  TagSequence tags;
  double score = 0.0;
};

/// Highest-scoring tag path; score ties break toward the lower tag index.
ViterbiResult viterbi_decode(const Matrix& f, const TransitionMatrix& trans);

/// Log-partition plus the posterior quantities the loss gradient needs.
struct LatticeResult {
  double log_z = 0.0;
  Matrix marginals;             // T x kNumTags, P(tag_t = y)
  Matrix expected_transitions;  // kNumTags x kNumTags, sum_t P(y_t=a, y_t+1=b)
};

LatticeResult log_partition(const Matrix& f, const TransitionMatrix& trans);

/// Exhaustive enumeration of all kNumTags^T tag paths with their exact
/// sentence_score. Oracle for the two functions above; refuses sentences
/// longer than 8 positions. Paths are ordered with the LAST position most
/// significant, so the first score maximum in list order coincides with the
/// Viterbi tie-break (which fixes the final tag first and walks back).
std::vector<std::pair<TagSequence, double>> brute_force_paths(
    const Matrix& f, const TransitionMatrix& trans);

}  // namespace prosody
