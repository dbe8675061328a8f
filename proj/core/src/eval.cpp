#include "prosody/eval.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>

#include "prosody/strings.hpp"

#include "prosody/numerics.hpp"

namespace prosody {

double harmonic_f(double p, double r) {
  const double denom = p + r;
  if (denom == 0.0) return 0.0;
  return 2.0 * p * r / denom;
}

PrfMetrics score_prf(std::span<const TagSequence> pred,
                     std::span<const TagSequence> gold) {
  if (pred.size() != gold.size()) {
    throw DimensionError(
        fmt("score_prf: {} predicted sentences but {} gold",
                    pred.size(), gold.size()));
  }
  PrfMetrics m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gold[i].size()) {
      throw DimensionError(fmt(
          "score_prf: sentence {} has {} predicted tags but {} gold", i,
          pred[i].size(), gold[i].size()));
    }
    for (std::size_t t = 0; t < pred[i].size(); ++t) {
      const bool pb = pred[i][t] == Tag::B;
      const bool gb = gold[i][t] == Tag::B;
      if (pb && gb) ++m.tp;
      else if (pb) ++m.fp;
      else if (gb) ++m.fn;
    }
  }
  if (m.tp + m.fp > 0) {
    m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  } else {
    m.degenerate = true;
  }
  if (m.tp + m.fn > 0) {
    m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  } else {
    m.degenerate = true;
  }
  if (m.precision + m.recall > 0.0) {
    m.f_score = harmonic_f(m.precision, m.recall);
  } else {
    m.degenerate = true;
  }
  return m;
}

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::floor(value * scale + 0.5) / scale;
}

namespace {

std::string percent_cell(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", round_half_up(fraction * 100.0, 2));
  return buf;
}

std::string pad_left(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

std::string pad_right(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string report_row(std::string_view label, std::string p, std::string r,
                       std::string f, bool degenerate) {
  std::string out = pad_right(std::string(label), 10);
  out += pad_left(std::move(p), 10);
  out += pad_left(std::move(r), 10);
  out += pad_left(std::move(f), 10);
  if (degenerate) out += " *";
  out += '\n';
  return out;
}

}  // namespace

std::string emit_report(std::span<const std::pair<Level, PrfMetrics>> rows) {
  std::string out = report_row("Boundary", "P", "R", "F", false);
  bool any_degenerate = false;
  for (const auto& [level, m] : rows) {
    any_degenerate = any_degenerate || m.degenerate;
    out += report_row(level_name(level), percent_cell(m.precision),
                      percent_cell(m.recall), percent_cell(m.f_score),
                      m.degenerate);
  }
  if (any_degenerate) {
    out += "* zero denominator; affected metrics reported as 0\n";
  }
  return out;
}

std::string emit_kv(std::span<const std::pair<Level, PrfMetrics>> rows) {
  std::string out;
  for (const auto& [level, m] : rows) {
    std::string prefix{level_name(level)};
    for (char& c : prefix) c = static_cast<char>(std::tolower(c));
    out += fmt("{}.precision={}\n", prefix, format_double(m.precision));
    out += fmt("{}.recall={}\n", prefix, format_double(m.recall));
    out += fmt("{}.f={}\n", prefix, format_double(m.f_score));
    out += fmt("{}.tp={}\n", prefix, m.tp);
    out += fmt("{}.fp={}\n", prefix, m.fp);
    out += fmt("{}.fn={}\n", prefix, m.fn);
    out += fmt("{}.degenerate={}\n", prefix, m.degenerate ? 1 : 0);
  }
  return out;
}

}  // namespace prosody
