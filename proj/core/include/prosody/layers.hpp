#pragma once

#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "prosody/features.hpp"
#include "prosody/numerics.hpp"
#include "prosody/tags.hpp"

namespace prosody {

/// Fully connected layer with tanh activation, applied per position.
struct FeedForwardLayer {
  Matrix w;  // H x in
  Vector b;  // H

  std::size_t input_dim() const { return w.cols(); }
  std::size_t output_dim() const { return w.rows(); }
};

/// One LSTM cell: gates i/f/o, cell candidate, diagonal peepholes.
/// The output gate's peephole reads the freshly updated cell state.
struct LstmCellParams {
  Matrix w_xi, w_hi;
  Vector p_ci, b_i;
  Matrix w_xf, w_hf;
  Vector p_cf, b_f;
  Matrix w_xc, w_hc;
  Vector b_c;
  Matrix w_xo, w_ho;
  Vector p_co, b_o;

  std::size_t input_dim() const { return w_xi.cols(); }
  std::size_t hidden_size() const { return w_xi.rows(); }
};

/// Bidirectional LSTM layer: two independent cells scanning opposite
/// directions; per-position output is the concatenation (dim 2H).
struct BlstmLayer {
  LstmCellParams forward_cell;
  LstmCellParams backward_cell;

  std::size_t input_dim() const { return forward_cell.input_dim(); }
  std::size_t output_dim() const { return 2 * forward_cell.hidden_size(); }
};

using HiddenLayer = std::variant<FeedForwardLayer, BlstmLayer>;

/// Stacked network described by a topology string over {F, B} plus a linear
/// output layer producing one score per tag. Scores are unnormalized; the
/// tag lattice does all normalization.
struct NetworkModel {
  std::string topology;
  std::size_t input_dim = 0;
  std::size_t hidden_size = 0;
  std::vector<HiddenLayer> layers;
  Matrix w_out;  // kNumTags x top_dim
  Vector b_out;  // kNumTags

  /// Output dimension of the last hidden layer (input_dim when none).
  std::size_t top_dim() const;

  /// Named views over every parameter tensor, in a stable order shared by
  /// gradients, the optimizer, and serialization.
  std::vector<ParamView> param_views();
  std::vector<ConstParamView> param_views() const;
};

/// Validates the topology string and builds a model with entries drawn
/// uniformly from [-0.1, 0.1] and zero biases.
NetworkModel make_network(const std::string& topology, std::size_t input_dim,
                          std::size_t hidden_size, Rng& rng);

/// Same shapes as m, all parameters zero. Gradient container.
NetworkModel zeros_like(const NetworkModel& m);

// --- forward/backward ---

/// Cached activations of one LSTM scan; arrays are indexed by absolute
/// position regardless of scan direction.
struct LstmScanCache {
  std::vector<Vector> gate_i, gate_f, gate_g, gate_o;
  std::vector<Vector> cell, cell_tanh, hidden;
};

struct BlstmCache {
  LstmScanCache fwd, bwd;
};

/// FF layers need no extra state beyond their output sequence, which the
/// ForwardCache already keeps.
struct FfnnCache {};

using LayerCache = std::variant<FfnnCache, BlstmCache>;

/// Everything network_backward needs: the encoded input plus every layer's
/// internal state and output sequence.
struct ForwardCache {
  EncodedSentence input;
  std::vector<LayerCache> layer_caches;
  std::vector<std::vector<Vector>> layer_outputs;
};

/// Per-position tanh(Wx + b).
std::vector<Vector> ffnn_forward(const FeedForwardLayer& layer,
                                 std::span<const Vector> xs);

/// One LSTM step; returns (h_t, c_t).
std::pair<Vector, Vector> lstm_cell_step(const LstmCellParams& p,
                                         const Vector& x, const Vector& h_prev,
                                         const Vector& c_prev);

/// Bidirectional scan over the whole sequence; output dim 2H per position.
/// Throws on an empty sequence. Cache is optional.
std::vector<Vector> blstm_forward(const BlstmLayer& layer,
                                  std::span<const Vector> xs,
                                  BlstmCache* cache = nullptr);

/// Runs the full stack; returns the T x kNumTags score matrix. When cache is
/// non-null it is filled for a later network_backward call.
Matrix network_forward(const NetworkModel& model, const EncodedSentence& enc,
                       ForwardCache* cache = nullptr);

/// Exact reverse-mode gradients of sum(d_scores . scores) with respect to
/// every parameter, returned as a zeros_like-shaped model.
NetworkModel network_backward(const NetworkModel& model,
                              const ForwardCache& cache,
                              const Matrix& d_scores);

}  // namespace prosody
