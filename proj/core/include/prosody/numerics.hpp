#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace prosody {

using Vector = std::vector<double>;

/// Shape mismatch between operands; the message names both shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Named view over one parameter tensor (vectors use cols == 1).
struct ParamView {
  std::string name;
  std::span<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

struct ConstParamView {
  std::string name;
  std::span<const double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

enum class Activation { Sigmoid, Tanh, Linear };

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Wx + b. Throws DimensionError when shapes disagree.
Vector affine(const Matrix& w, const Vector& x, const Vector& b);

/// Element-wise sigmoid / tanh / identity.
Vector activate(Activation kind, const Vector& v);

/// log sum_i exp(v_i), max-shifted. Throws on empty input.
double logsumexp(std::span<const double> v);

/// out += W x
void add_matvec(const Matrix& w, const Vector& x, Vector& out);
/// out += W^T v
void add_matvec_transpose(const Matrix& w, const Vector& v, Vector& out);
/// g += a b^T
void add_outer(Matrix& g, const Vector& a, const Vector& b);

/// Throws std::runtime_error if any entry is NaN or infinite.
void check_finite(std::span<const double> v, std::string_view what);

/// Decimal form with 17 significant digits; parse_double inverts it exactly,
/// so serialized parameters round-trip value-exact.
std::string format_double(double v);
double parse_double(std::string_view s);

/// SGD-with-momentum state: one velocity buffer per parameter tensor.
struct OptimizerState {
  double learning_rate = 0.0;
  double momentum = 0.0;
  std::vector<Vector> velocity;
};

OptimizerState init_optimizer(double learning_rate, double momentum,
                              std::span<const ParamView> params);

/// velocity <- momentum * velocity - lr * grad; param <- param + velocity.
/// Classical momentum. Throws DimensionError when any shape disagrees.
void sgd_momentum_step(std::span<const ParamView> params,
                       std::span<const ParamView> grads, OptimizerState& state);

/// Deterministic RNG: mt19937_64 (fully specified by the standard) with
/// hand-rolled scaling, so sequences do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t next_below(std::size_t n);

  /// Seeded Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = next_below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace prosody
