#include "prosody/layers.hpp"

#include <cmath>
#include "prosody/strings.hpp"
#include <stdexcept>

namespace prosody {

namespace {

// Uniform view over a layer's input sequence. The first layer reads the
// encoded sentence directly so one-hot inputs never get materialized; upper
// layers read the dense output of the layer below. The one-hot code paths
// reproduce the dense matvec sum order exactly, so both routes give equal
// scores.
class SeqInput {
 public:
  explicit SeqInput(const EncodedSentence& enc) : enc_(&enc) {}
  explicit SeqInput(std::span<const Vector> xs) : xs_(xs) {}

  std::size_t length() const { return enc_ != nullptr ? enc_->length() : xs_.size(); }

  // out += W x_t
  void add_matvec(const Matrix& w, std::size_t t, Vector& out) const {
    if (enc_ == nullptr) {
      prosody::add_matvec(w, xs_[t], out);
      return;
    }
    const EncodedSentence& e = *enc_;
    if (w.cols() != e.dim || w.rows() != out.size()) {
      throw DimensionError(fmt(
          "layer input: W is {}x{} but features have dimension {}", w.rows(),
          w.cols(), e.dim));
    }
    if (e.mode == FeatureMode::OneHot) {
      const std::size_t j = e.hot[t];
      if (e.cascade) {
        const double cv = e.cascade_values[t];
        const std::size_t jc = e.dim - 1;
        for (std::size_t i = 0; i < w.rows(); ++i) {
          double acc = w(i, j);
          acc += w(i, jc) * cv;
          out[i] += acc;
        }
      } else {
        for (std::size_t i = 0; i < w.rows(); ++i) out[i] += w(i, j);
      }
    } else {
      const Vector& base = e.dense[t];
      for (std::size_t i = 0; i < w.rows(); ++i) {
        const double* wr = w.row(i);
        double acc = 0.0;
        for (std::size_t c = 0; c < base.size(); ++c) acc += wr[c] * base[c];
        if (e.cascade) acc += wr[e.dim - 1] * e.cascade_values[t];
        out[i] += acc;
      }
    }
  }

  // g += a x_t^T
  void accumulate_outer(Matrix& g, const Vector& a, std::size_t t) const {
    if (enc_ == nullptr) {
      add_outer(g, a, xs_[t]);
      return;
    }
    const EncodedSentence& e = *enc_;
    if (e.mode == FeatureMode::OneHot) {
      const std::size_t j = e.hot[t];
      for (std::size_t i = 0; i < g.rows(); ++i) g(i, j) += a[i];
    } else {
      const Vector& base = e.dense[t];
      for (std::size_t i = 0; i < g.rows(); ++i) {
        double* gr = g.row(i);
        const double ai = a[i];
        for (std::size_t c = 0; c < base.size(); ++c) gr[c] += ai * base[c];
      }
    }
    if (e.cascade) {
      const double cv = e.cascade_values[t];
      const std::size_t jc = e.dim - 1;
      for (std::size_t i = 0; i < g.rows(); ++i) g(i, jc) += a[i] * cv;
    }
  }

 private:
  const EncodedSentence* enc_ = nullptr;
  std::span<const Vector> xs_;
};

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-0.1, 0.1);
  return m;
}

Vector random_vector(std::size_t n, Rng& rng) {
  Vector v(n);
  for (double& x : v) x = rng.uniform(-0.1, 0.1);
  return v;
}

LstmCellParams make_cell(std::size_t input_dim, std::size_t hidden, Rng& rng) {
  LstmCellParams p;
  p.w_xi = random_matrix(hidden, input_dim, rng);
  p.w_hi = random_matrix(hidden, hidden, rng);
  p.p_ci = random_vector(hidden, rng);
  p.b_i = Vector(hidden, 0.0);
  p.w_xf = random_matrix(hidden, input_dim, rng);
  p.w_hf = random_matrix(hidden, hidden, rng);
  p.p_cf = random_vector(hidden, rng);
  p.b_f = Vector(hidden, 0.0);
  p.w_xc = random_matrix(hidden, input_dim, rng);
  p.w_hc = random_matrix(hidden, hidden, rng);
  p.b_c = Vector(hidden, 0.0);
  p.w_xo = random_matrix(hidden, input_dim, rng);
  p.w_ho = random_matrix(hidden, hidden, rng);
  p.p_co = random_vector(hidden, rng);
  p.b_o = Vector(hidden, 0.0);
  return p;
}

LstmCellParams cell_like(const LstmCellParams& p) {
  LstmCellParams z;
  z.w_xi = Matrix(p.w_xi.rows(), p.w_xi.cols());
  z.w_hi = Matrix(p.w_hi.rows(), p.w_hi.cols());
  z.p_ci = Vector(p.p_ci.size(), 0.0);
  z.b_i = Vector(p.b_i.size(), 0.0);
  z.w_xf = Matrix(p.w_xf.rows(), p.w_xf.cols());
  z.w_hf = Matrix(p.w_hf.rows(), p.w_hf.cols());
  z.p_cf = Vector(p.p_cf.size(), 0.0);
  z.b_f = Vector(p.b_f.size(), 0.0);
  z.w_xc = Matrix(p.w_xc.rows(), p.w_xc.cols());
  z.w_hc = Matrix(p.w_hc.rows(), p.w_hc.cols());
  z.b_c = Vector(p.b_c.size(), 0.0);
  z.w_xo = Matrix(p.w_xo.rows(), p.w_xo.cols());
  z.w_ho = Matrix(p.w_ho.rows(), p.w_ho.cols());
  z.p_co = Vector(p.p_co.size(), 0.0);
  z.b_o = Vector(p.b_o.size(), 0.0);
  return z;
}

template <typename View, typename Model>
void collect_views(Model& m, std::vector<View>& out) {
  auto add_matrix = [&out](std::string name, auto& mat) {
    out.push_back(View{std::move(name), mat.values(), mat.rows(), mat.cols()});
  };
  auto add_vector = [&out](std::string name, auto& vec) {
    out.push_back(View{std::move(name),
                       std::span(vec.data(), vec.size()), vec.size(), 1});
  };
  auto add_cell = [&](const std::string& prefix, auto& c) {
    add_matrix(prefix + ".w_xi", c.w_xi);
    add_matrix(prefix + ".w_hi", c.w_hi);
    add_vector(prefix + ".p_ci", c.p_ci);
    add_vector(prefix + ".b_i", c.b_i);
    add_matrix(prefix + ".w_xf", c.w_xf);
    add_matrix(prefix + ".w_hf", c.w_hf);
    add_vector(prefix + ".p_cf", c.p_cf);
    add_vector(prefix + ".b_f", c.b_f);
    add_matrix(prefix + ".w_xc", c.w_xc);
    add_matrix(prefix + ".w_hc", c.w_hc);
    add_vector(prefix + ".b_c", c.b_c);
    add_matrix(prefix + ".w_xo", c.w_xo);
    add_matrix(prefix + ".w_ho", c.w_ho);
    add_vector(prefix + ".p_co", c.p_co);
    add_vector(prefix + ".b_o", c.b_o);
  };
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const std::string base = fmt("layer{}", i);
    std::visit(
        [&](auto& layer) {
          using L = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<L, FeedForwardLayer>) {
            add_matrix(base + ".ff.w", layer.w);
            add_vector(base + ".ff.b", layer.b);
          } else {
            add_cell(base + ".blstm.fwd", layer.forward_cell);
            add_cell(base + ".blstm.bwd", layer.backward_cell);
          }
        },
        m.layers[i]);
  }
  add_matrix("out.w", m.w_out);
  add_vector("out.b", m.b_out);
}

std::size_t layer_output_dim(const HiddenLayer& layer) {
  return std::visit([](const auto& l) { return l.output_dim(); }, layer);
}

// One directional LSTM pass. Cache arrays are indexed by absolute sentence
// position; `reverse` only changes the visit order and which neighbor
// supplies the recurrent state.
void lstm_scan(const LstmCellParams& p, const SeqInput& in, bool reverse,
               LstmScanCache& cache) {
  const std::size_t T = in.length();
  const std::size_t H = p.hidden_size();
  cache.gate_i.assign(T, Vector());
  cache.gate_f.assign(T, Vector());
  cache.gate_g.assign(T, Vector());
  cache.gate_o.assign(T, Vector());
  cache.cell.assign(T, Vector());
  cache.cell_tanh.assign(T, Vector());
  cache.hidden.assign(T, Vector());

  Vector h(H, 0.0), c(H, 0.0);
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t t = reverse ? T - 1 - step : step;

    Vector ai(H, 0.0), af(H, 0.0), ag(H, 0.0), ao(H, 0.0);
    in.add_matvec(p.w_xi, t, ai);
    add_matvec(p.w_hi, h, ai);
    in.add_matvec(p.w_xf, t, af);
    add_matvec(p.w_hf, h, af);
    in.add_matvec(p.w_xc, t, ag);
    add_matvec(p.w_hc, h, ag);
    in.add_matvec(p.w_xo, t, ao);
    add_matvec(p.w_ho, h, ao);

    Vector gi(H), gf(H), gg(H), cell(H);
    for (std::size_t k = 0; k < H; ++k) {
      gi[k] = sigmoid(ai[k] + p.p_ci[k] * c[k] + p.b_i[k]);
      gf[k] = sigmoid(af[k] + p.p_cf[k] * c[k] + p.b_f[k]);
      gg[k] = std::tanh(ag[k] + p.b_c[k]);
      cell[k] = gf[k] * c[k] + gi[k] * gg[k];
    }
    Vector go(H), ct(H), hidden(H);
    for (std::size_t k = 0; k < H; ++k) {
      // Output gate peeks at the cell state updated this step.
      go[k] = sigmoid(ao[k] + p.p_co[k] * cell[k] + p.b_o[k]);
      ct[k] = std::tanh(cell[k]);
      hidden[k] = go[k] * ct[k];
    }

    cache.gate_i[t] = std::move(gi);
    cache.gate_f[t] = std::move(gf);
    cache.gate_g[t] = std::move(gg);
    cache.gate_o[t] = std::move(go);
    cache.cell[t] = cell;
    cache.cell_tanh[t] = std::move(ct);
    cache.hidden[t] = hidden;
    c = std::move(cell);
    h = std::move(hidden);
  }
}

// Reverse-mode pass over one scan. dh_above[t] is the loss gradient flowing
// into h_t from the layers above; parameter gradients accumulate into `grad`
// and, when d_in is given, input gradients accumulate into (*d_in)[t].
void lstm_scan_backward(const LstmCellParams& p, const SeqInput& in,
                        bool reverse, const LstmScanCache& cache,
                        std::span<const Vector> dh_above, LstmCellParams& grad,
                        std::vector<Vector>* d_in) {
  const std::size_t T = in.length();
  const std::size_t H = p.hidden_size();
  const Vector zero(H, 0.0);

  Vector dh_carry(H, 0.0), dc_carry(H, 0.0);
  for (std::size_t step = T; step-- > 0;) {
    const std::size_t t = reverse ? T - 1 - step : step;
    const bool first = step == 0;
    const std::size_t prev_t = reverse ? t + 1 : t - 1;
    const Vector& h_prev = first ? zero : cache.hidden[prev_t];
    const Vector& c_prev = first ? zero : cache.cell[prev_t];

    const Vector& gi = cache.gate_i[t];
    const Vector& gf = cache.gate_f[t];
    const Vector& gg = cache.gate_g[t];
    const Vector& go = cache.gate_o[t];
    const Vector& cell = cache.cell[t];
    const Vector& ct = cache.cell_tanh[t];

    Vector da_i(H), da_f(H), da_g(H), da_o(H);
    for (std::size_t k = 0; k < H; ++k) {
      const double dh = dh_above[t][k] + dh_carry[k];
      const double dao = dh * ct[k] * go[k] * (1.0 - go[k]);
      const double dc = dh * go[k] * (1.0 - ct[k] * ct[k]) + dc_carry[k] +
                        p.p_co[k] * dao;
      da_o[k] = dao;
      da_i[k] = dc * gg[k] * gi[k] * (1.0 - gi[k]);
      da_f[k] = dc * c_prev[k] * gf[k] * (1.0 - gf[k]);
      da_g[k] = dc * gi[k] * (1.0 - gg[k] * gg[k]);
      dc_carry[k] = dc * gf[k] + p.p_ci[k] * da_i[k] + p.p_cf[k] * da_f[k];
    }

    std::fill(dh_carry.begin(), dh_carry.end(), 0.0);
    add_matvec_transpose(p.w_hi, da_i, dh_carry);
    add_matvec_transpose(p.w_hf, da_f, dh_carry);
    add_matvec_transpose(p.w_hc, da_g, dh_carry);
    add_matvec_transpose(p.w_ho, da_o, dh_carry);

    in.accumulate_outer(grad.w_xi, da_i, t);
    in.accumulate_outer(grad.w_xf, da_f, t);
    in.accumulate_outer(grad.w_xc, da_g, t);
    in.accumulate_outer(grad.w_xo, da_o, t);
    add_outer(grad.w_hi, da_i, h_prev);
    add_outer(grad.w_hf, da_f, h_prev);
    add_outer(grad.w_hc, da_g, h_prev);
    add_outer(grad.w_ho, da_o, h_prev);
    for (std::size_t k = 0; k < H; ++k) {
      grad.p_ci[k] += da_i[k] * c_prev[k];
      grad.p_cf[k] += da_f[k] * c_prev[k];
      grad.p_co[k] += da_o[k] * cell[k];
      grad.b_i[k] += da_i[k];
      grad.b_f[k] += da_f[k];
      grad.b_c[k] += da_g[k];
      grad.b_o[k] += da_o[k];
    }

    if (d_in != nullptr) {
      Vector& dx = (*d_in)[t];
      add_matvec_transpose(p.w_xi, da_i, dx);
      add_matvec_transpose(p.w_xf, da_f, dx);
      add_matvec_transpose(p.w_xc, da_g, dx);
      add_matvec_transpose(p.w_xo, da_o, dx);
    }
  }
}

std::vector<Vector> blstm_apply(const BlstmLayer& layer, const SeqInput& in,
                                BlstmCache* cache) {
  const std::size_t T = in.length();
  if (T == 0) throw std::invalid_argument("blstm_forward: empty sequence");
  BlstmCache local;
  BlstmCache& c = cache != nullptr ? *cache : local;
  lstm_scan(layer.forward_cell, in, /*reverse=*/false, c.fwd);
  lstm_scan(layer.backward_cell, in, /*reverse=*/true, c.bwd);

  const std::size_t H = layer.forward_cell.hidden_size();
  std::vector<Vector> out(T, Vector(2 * H));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < H; ++k) {
      out[t][k] = c.fwd.hidden[t][k];
      out[t][H + k] = c.bwd.hidden[t][k];
    }
  }
  return out;
}

std::vector<Vector> ffnn_apply(const FeedForwardLayer& layer,
                               const SeqInput& in) {
  const std::size_t T = in.length();
  std::vector<Vector> out(T);
  for (std::size_t t = 0; t < T; ++t) {
    Vector a = layer.b;
    in.add_matvec(layer.w, t, a);
    for (double& v : a) v = std::tanh(v);
    out[t] = std::move(a);
  }
  return out;
}

}  // namespace

std::size_t NetworkModel::top_dim() const {
  return layers.empty() ? input_dim : layer_output_dim(layers.back());
}

std::vector<ParamView> NetworkModel::param_views() {
  std::vector<ParamView> out;
  collect_views<ParamView>(*this, out);
  return out;
}

std::vector<ConstParamView> NetworkModel::param_views() const {
  std::vector<ConstParamView> out;
  collect_views<ConstParamView>(*this, out);
  return out;
}

NetworkModel make_network(const std::string& topology, std::size_t input_dim,
                          std::size_t hidden_size, Rng& rng) {
  if (input_dim == 0 || hidden_size == 0) {
    throw std::invalid_argument(
        "make_network: input and hidden dimensions must be positive");
  }
  NetworkModel m;
  m.topology = topology;
  m.input_dim = input_dim;
  m.hidden_size = hidden_size;
  std::size_t dim = input_dim;
  for (char kind : topology) {
    if (kind == 'F') {
      FeedForwardLayer layer;
      layer.w = random_matrix(hidden_size, dim, rng);
      layer.b = Vector(hidden_size, 0.0);
      dim = hidden_size;
      m.layers.emplace_back(std::move(layer));
    } else if (kind == 'B') {
      BlstmLayer layer;
      layer.forward_cell = make_cell(dim, hidden_size, rng);
      layer.backward_cell = make_cell(dim, hidden_size, rng);
      dim = 2 * hidden_size;
      m.layers.emplace_back(std::move(layer));
    } else {
      throw std::invalid_argument(fmt(
          "make_network: topology character '{}' is not F or B", kind));
    }
  }
  m.w_out = random_matrix(kNumTags, dim, rng);
  m.b_out = Vector(kNumTags, 0.0);
  return m;
}

NetworkModel zeros_like(const NetworkModel& m) {
  NetworkModel z;
  z.topology = m.topology;
  z.input_dim = m.input_dim;
  z.hidden_size = m.hidden_size;
  z.layers.reserve(m.layers.size());
  for (const auto& layer : m.layers) {
    std::visit(
        [&z](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, FeedForwardLayer>) {
            FeedForwardLayer f;
            f.w = Matrix(l.w.rows(), l.w.cols());
            f.b = Vector(l.b.size(), 0.0);
            z.layers.emplace_back(std::move(f));
          } else {
            BlstmLayer b;
            b.forward_cell = cell_like(l.forward_cell);
            b.backward_cell = cell_like(l.backward_cell);
            z.layers.emplace_back(std::move(b));
          }
        },
        layer);
  }
  z.w_out = Matrix(m.w_out.rows(), m.w_out.cols());
  z.b_out = Vector(m.b_out.size(), 0.0);
  return z;
}

std::vector<Vector> ffnn_forward(const FeedForwardLayer& layer,
                                 std::span<const Vector> xs) {
  return ffnn_apply(layer, SeqInput(xs));
}

std::pair<Vector, Vector> lstm_cell_step(const LstmCellParams& p,
                                         const Vector& x, const Vector& h_prev,
                                         const Vector& c_prev) {
  const std::size_t H = p.hidden_size();
  if (h_prev.size() != H || c_prev.size() != H) {
    throw DimensionError(
        fmt("lstm_cell_step: cell has {} units but h_prev has {} and "
                    "c_prev has {}",
                    H, h_prev.size(), c_prev.size()));
  }
  // Matches the scan's evaluation order exactly so a one-step scan and a
  // manual step agree to the last bit.
  Vector ai(H, 0.0), af(H, 0.0), ag(H, 0.0), ao(H, 0.0);
  add_matvec(p.w_xi, x, ai);
  add_matvec(p.w_hi, h_prev, ai);
  add_matvec(p.w_xf, x, af);
  add_matvec(p.w_hf, h_prev, af);
  add_matvec(p.w_xc, x, ag);
  add_matvec(p.w_hc, h_prev, ag);
  add_matvec(p.w_xo, x, ao);
  add_matvec(p.w_ho, h_prev, ao);
  Vector c(H), h(H);
  for (std::size_t k = 0; k < H; ++k) {
    const double gi = sigmoid(ai[k] + p.p_ci[k] * c_prev[k] + p.b_i[k]);
    const double gf = sigmoid(af[k] + p.p_cf[k] * c_prev[k] + p.b_f[k]);
    const double gg = std::tanh(ag[k] + p.b_c[k]);
    c[k] = gf * c_prev[k] + gi * gg;
    const double go = sigmoid(ao[k] + p.p_co[k] * c[k] + p.b_o[k]);
    h[k] = go * std::tanh(c[k]);
  }
  return {std::move(h), std::move(c)};
}

std::vector<Vector> blstm_forward(const BlstmLayer& layer,
                                  std::span<const Vector> xs,
                                  BlstmCache* cache) {
  return blstm_apply(layer, SeqInput(xs), cache);
}

Matrix network_forward(const NetworkModel& model, const EncodedSentence& enc,
                       ForwardCache* cache) {
  const std::size_t T = enc.length();
  if (T == 0) {
    throw std::invalid_argument("network_forward: empty sentence");
  }
  if (enc.dim != model.input_dim) {
    throw DimensionError(
        fmt("network_forward: model expects {}-dimensional features "
                    "but the sentence is encoded with {}",
                    model.input_dim, enc.dim));
  }
  if (cache != nullptr) {
    cache->input = enc;
    cache->layer_caches.clear();
    cache->layer_outputs.clear();
  }

  std::vector<Vector> current;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    SeqInput in = li == 0 ? SeqInput(enc) : SeqInput(std::span<const Vector>(current));
    std::vector<Vector> next;
    if (const auto* ff = std::get_if<FeedForwardLayer>(&model.layers[li])) {
      next = ffnn_apply(*ff, in);
      if (cache != nullptr) cache->layer_caches.emplace_back(FfnnCache{});
    } else {
      const auto& bl = std::get<BlstmLayer>(model.layers[li]);
      BlstmCache bc;
      next = blstm_apply(bl, in, cache != nullptr ? &bc : nullptr);
      if (cache != nullptr) cache->layer_caches.emplace_back(std::move(bc));
    }
    if (cache != nullptr) cache->layer_outputs.push_back(next);
    current = std::move(next);
  }

  Matrix scores(T, kNumTags);
  if (model.layers.empty()) {
    SeqInput in(enc);
    for (std::size_t t = 0; t < T; ++t) {
      Vector s = model.b_out;
      in.add_matvec(model.w_out, t, s);
      for (std::size_t y = 0; y < kNumTags; ++y) scores(t, y) = s[y];
    }
  } else {
    for (std::size_t t = 0; t < T; ++t) {
      Vector s = model.b_out;
      add_matvec(model.w_out, current[t], s);
      for (std::size_t y = 0; y < kNumTags; ++y) scores(t, y) = s[y];
    }
  }
  return scores;
}

NetworkModel network_backward(const NetworkModel& model,
                              const ForwardCache& cache,
                              const Matrix& d_scores) {
  const std::size_t T = cache.input.length();
  if (d_scores.rows() != T ||
      d_scores.cols() != static_cast<std::size_t>(kNumTags)) {
    throw DimensionError(fmt(
        "network_backward: d_scores is {}x{} but the sentence has {} "
        "positions and {} tags",
        d_scores.rows(), d_scores.cols(), T, kNumTags));
  }
  if (cache.layer_outputs.size() != model.layers.size()) {
    throw std::invalid_argument(
        "network_backward: cache does not match the model's layer stack");
  }
  NetworkModel grad = zeros_like(model);

  // Output layer.
  std::vector<Vector> d_top(T, Vector(model.top_dim(), 0.0));
  for (std::size_t t = 0; t < T; ++t) {
    Vector ds(kNumTags);
    for (std::size_t y = 0; y < kNumTags; ++y) ds[y] = d_scores(t, y);
    if (model.layers.empty()) {
      SeqInput(cache.input).accumulate_outer(grad.w_out, ds, t);
    } else {
      add_outer(grad.w_out, ds, cache.layer_outputs.back()[t]);
    }
    for (std::size_t y = 0; y < kNumTags; ++y) grad.b_out[y] += ds[y];
    add_matvec_transpose(model.w_out, ds, d_top[t]);
  }
  if (model.layers.empty()) return grad;

  // Hidden layers, top down.
  std::vector<Vector> d_out = std::move(d_top);
  for (std::size_t li = model.layers.size(); li-- > 0;) {
    SeqInput in = li == 0 ? SeqInput(cache.input)
                          : SeqInput(std::span<const Vector>(
                                cache.layer_outputs[li - 1]));
    const bool want_input_grad = li > 0;
    std::vector<Vector> d_in;
    if (want_input_grad) {
      d_in.assign(T, Vector(layer_output_dim(model.layers[li - 1]), 0.0));
    }

    if (const auto* ff = std::get_if<FeedForwardLayer>(&model.layers[li])) {
      auto& gf = std::get<FeedForwardLayer>(grad.layers[li]);
      const auto& acts = cache.layer_outputs[li];
      for (std::size_t t = 0; t < T; ++t) {
        Vector da(ff->output_dim());
        for (std::size_t k = 0; k < da.size(); ++k) {
          da[k] = d_out[t][k] * (1.0 - acts[t][k] * acts[t][k]);
        }
        in.accumulate_outer(gf.w, da, t);
        for (std::size_t k = 0; k < da.size(); ++k) gf.b[k] += da[k];
        if (want_input_grad) add_matvec_transpose(ff->w, da, d_in[t]);
      }
    } else {
      const auto& bl = std::get<BlstmLayer>(model.layers[li]);
      auto& gb = std::get<BlstmLayer>(grad.layers[li]);
      const auto& bc = std::get<BlstmCache>(cache.layer_caches[li]);
      const std::size_t H = bl.forward_cell.hidden_size();
      std::vector<Vector> dh_fwd(T, Vector(H)), dh_bwd(T, Vector(H));
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < H; ++k) {
          dh_fwd[t][k] = d_out[t][k];
          dh_bwd[t][k] = d_out[t][H + k];
        }
      }
      lstm_scan_backward(bl.forward_cell, in, /*reverse=*/false, bc.fwd,
                         dh_fwd, gb.forward_cell,
                         want_input_grad ? &d_in : nullptr);
      lstm_scan_backward(bl.backward_cell, in, /*reverse=*/true, bc.bwd,
                         dh_bwd, gb.backward_cell,
                         want_input_grad ? &d_in : nullptr);
    }

    if (!want_input_grad) break;
    d_out = std::move(d_in);
  }
  return grad;
}

}  // namespace prosody
