#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "prosody/tags.hpp"

namespace prosody {

/// Boundary-detection scores over tag B. Values are fractions in [0, 1];
/// zero denominators yield 0 with the degenerate flag set (never NaN).
struct PrfMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f_score = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  bool degenerate = false;
};

/// 2pr/(p+r); 0 when p + r == 0. Scale-invariant, so percentage inputs give
/// percentage output.
double harmonic_f(double p, double r);

/// Per-character scoring of predicted against gold tags: tp counts positions
/// where both are B, fp where only the prediction is, fn where only gold is.
/// O positions count like any other non-B target. Throws on shape mismatch.
PrfMetrics score_prf(std::span<const TagSequence> pred,
                     std::span<const TagSequence> gold);

/// Half-up rounding at `decimals` places (formatting convention for tables).
double round_half_up(double value, int decimals);

/// Aligned text table with columns Boundary / P / R / F, one row per level,
/// percentages to two decimals (half-up). Degenerate rows are marked '*'.
std::string emit_report(
    std::span<const std::pair<Level, PrfMetrics>> rows);

/// Machine-readable dump: one "level.key=value" line per metric.
std::string emit_kv(std::span<const std::pair<Level, PrfMetrics>> rows);

}  // namespace prosody
