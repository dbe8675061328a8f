#include "prosody/numerics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include "prosody/strings.hpp"

namespace prosody {

Vector affine(const Matrix& w, const Vector& x, const Vector& b) {
  if (w.cols() != x.size() || w.rows() != b.size()) {
    throw DimensionError(fmt(
        "affine: W is {}x{} but x has length {} and b has length {}", w.rows(),
        w.cols(), x.size(), b.size()));
  }
  Vector out(b);
  add_matvec(w, x, out);
  return out;
}

Vector activate(Activation kind, const Vector& v) {
  Vector out(v.size());
  switch (kind) {
    case Activation::Sigmoid:
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = sigmoid(v[i]);
      break;
    case Activation::Tanh:
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
      break;
    case Activation::Linear:
      out = v;
      break;
  }
  return out;
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("logsumexp: empty input");
  double m = *std::max_element(v.begin(), v.end());
  if (std::isinf(m) && m < 0) return m;  // all -inf
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - m);
  return m + std::log(sum);
}

void add_matvec(const Matrix& w, const Vector& x, Vector& out) {
  if (w.cols() != x.size() || w.rows() != out.size()) {
    throw DimensionError(fmt(
        "add_matvec: W is {}x{} but x has length {} and out has length {}",
        w.rows(), w.cols(), x.size(), out.size()));
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* wr = w.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols(); ++c) acc += wr[c] * x[c];
    out[r] += acc;
  }
}

void add_matvec_transpose(const Matrix& w, const Vector& v, Vector& out) {
  if (w.rows() != v.size() || w.cols() != out.size()) {
    throw DimensionError(fmt(
        "add_matvec_transpose: W is {}x{} but v has length {} and out has "
        "length {}",
        w.rows(), w.cols(), v.size(), out.size()));
  }
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const double* wr = w.row(r);
    const double vr = v[r];
    for (std::size_t c = 0; c < w.cols(); ++c) out[c] += wr[c] * vr;
  }
}

void add_outer(Matrix& g, const Vector& a, const Vector& b) {
  if (g.rows() != a.size() || g.cols() != b.size()) {
    throw DimensionError(
        fmt("add_outer: G is {}x{} but a has length {} and b has "
                    "length {}",
                    g.rows(), g.cols(), a.size(), b.size()));
  }
  for (std::size_t r = 0; r < g.rows(); ++r) {
    double* gr = g.row(r);
    const double ar = a[r];
    for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += ar * b[c];
  }
}

void check_finite(std::span<const double> v, std::string_view what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::runtime_error(fmt("non-finite value in {}", what));
    }
  }
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  if (ec != std::errc()) {
    throw std::runtime_error("format_double: conversion failed");
  }
  return std::string(buf, end);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw std::invalid_argument(
        fmt("parse_double: '{}' is not a decimal number", s));
  }
  return v;
}

OptimizerState init_optimizer(double learning_rate, double momentum,
                              std::span<const ParamView> params) {
  if (learning_rate <= 0.0) {
    throw std::invalid_argument("init_optimizer: learning rate must be positive");
  }
  if (momentum < 0.0 || momentum >= 1.0) {
    throw std::invalid_argument("init_optimizer: momentum must be in [0, 1)");
  }
  OptimizerState state;
  state.learning_rate = learning_rate;
  state.momentum = momentum;
  state.velocity.reserve(params.size());
  for (const auto& p : params) state.velocity.emplace_back(p.values.size(), 0.0);
  return state;
}

void sgd_momentum_step(std::span<const ParamView> params,
                       std::span<const ParamView> grads, OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.velocity.size()) {
    throw DimensionError(fmt(
        "sgd_momentum_step: {} params vs {} grads vs {} velocity buffers",
        params.size(), grads.size(), state.velocity.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].values;
    auto g = grads[k].values;
    auto& v = state.velocity[k];
    if (p.size() != g.size() || p.size() != v.size()) {
      throw DimensionError(fmt(
          "sgd_momentum_step: tensor '{}' has {} entries but grad has {} and "
          "velocity has {}",
          params[k].name, p.size(), g.size(), v.size()));
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = state.momentum * v[i] - state.learning_rate * g[i];
      p[i] += v[i];
    }
  }
}

std::size_t Rng::next_below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::next_below: n must be positive");
  // Rejection sampling keeps the draw unbiased and platform-stable.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

}  // namespace prosody
