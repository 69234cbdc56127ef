#pragma once

// Symbolic distance codec. A distance d (in reference units) is written as
// floor(d) full groups "<" + "="*G + ">" (G = 1/delta marks each) followed by
// one residual group of m = floor((d - floor(d)) / delta) marks when m > 0.
//
//   sequence := full_group* residual_group?
//   full_group := "<" "="{G} ">"
//   residual_group := "<" "="{1..G-1} ">"
//
// Whitespace between groups is ignored by the decoder.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pts/error.hpp"

namespace pts {

struct SymbolicSeq {
  std::string text;
  double value = 0.0;
  double delta = 0.1;
  std::int64_t k = 0;  // full groups
  std::int64_t m = 0;  // residual marks
};

// Marks per full group; throws unless 1/delta is integral.
inline std::int64_t marks_per_unit(double delta) {
  if (!(delta > 0.0) || delta > 1.0) throw Error(Errc::domain, "delta must be in (0, 1]");
  const double inv = 1.0 / delta;
  const double rounded = std::round(inv);
  if (std::abs(inv - rounded) > 1e-9 * rounded) {
    throw Error(Errc::domain, "1/delta must be an integer");
  }
  return static_cast<std::int64_t>(rounded);
}

// Total number of marks for d, flooring with a snap of 1e-9 toward the next
// boundary so float noise like 0.8999999999999999 still reads as 0.9.
inline std::int64_t quantize_marks(double d, double delta) {
  if (!(d >= 0.0) || !std::isfinite(d)) throw Error(Errc::domain, "distance must be finite and >= 0");
  marks_per_unit(delta);
  const auto n = static_cast<std::int64_t>(std::floor(d / delta));
  if (static_cast<double>(n + 1) * delta - d < 1e-9) return n + 1;
  return n;
}

inline std::string full_group(double delta) {
  return "<" + std::string(static_cast<std::size_t>(marks_per_unit(delta)), '=') + ">";
}

inline SymbolicSeq encode(double d, double delta = 0.1) {
  const std::int64_t per = marks_per_unit(delta);
  const std::int64_t n = quantize_marks(d, delta);
  SymbolicSeq seq;
  seq.delta = delta;
  seq.k = n / per;
  seq.m = n % per;
  const std::string full = full_group(delta);
  seq.text.reserve(static_cast<std::size_t>((seq.k + 1) * (per + 2)));
  for (std::int64_t i = 0; i < seq.k; ++i) seq.text += full;
  if (seq.m > 0) seq.text += "<" + std::string(static_cast<std::size_t>(seq.m), '=') + ">";
  seq.value = static_cast<double>(seq.k) + static_cast<double>(seq.m) * delta;
  return seq;
}

// Parses a grammatical sequence into (k, m). Throws malformed_symbolic.
inline SymbolicSeq parse_symbolic(std::string_view text, double delta = 0.1) {
  const std::int64_t per = marks_per_unit(delta);
  SymbolicSeq seq;
  seq.delta = delta;
  bool residual_seen = false;
  std::size_t i = 0;
  auto fail = [&](const std::string& why) -> void {
    throw Error(Errc::malformed_symbolic, why + " at offset " + std::to_string(i));
  };
  while (true) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) break;
    if (text[i] != '<') fail("expected '<'");
    const std::size_t start = i++;
    std::int64_t marks = 0;
    while (i < text.size() && text[i] == '=') {
      ++marks;
      ++i;
    }
    if (i == text.size() || text[i] != '>') {
      i = start;
      fail("expected '>' closing the group");
    }
    ++i;
    if (marks == 0) {
      i = start;
      fail("empty group");
    }
    if (marks > per) {
      i = start;
      fail("group longer than one unit");
    }
    if (residual_seen) {
      i = start;
      fail("group after the residual group");
    }
    if (marks == per) {
      ++seq.k;
    } else {
      seq.m = marks;
      residual_seen = true;
    }
  }
  if (seq.k == 0 && seq.m == 0) throw Error(Errc::malformed_symbolic, "empty sequence");
  seq.text = encode(static_cast<double>(seq.k) + static_cast<double>(seq.m) * delta, delta).text;
  seq.value = static_cast<double>(seq.k) + static_cast<double>(seq.m) * delta;
  return seq;
}

inline double decode(std::string_view text, double delta = 0.1) {
  return parse_symbolic(text, delta).value;
}

struct DecompositionTrace {
  double d_t = 0.0;
  double d_r = 0.0;
  std::int64_t k = 0;
  double covered = 0.0;  // L = k * d_r
  double residual = 0.0;
  std::int64_t iterations = 0;
};

// Tiles the reference along the target: while L + d_r <= d_t, add d_r.
inline DecompositionTrace decompose(double d_t, double d_r) {
  if (!(d_t > 0.0) || !(d_r > 0.0) || !std::isfinite(d_t) || !std::isfinite(d_r)) {
    throw Error(Errc::domain, "decompose needs finite positive lengths");
  }
  if (d_t / d_r > 1e8) throw Error(Errc::domain, "target too long for the reference");
  DecompositionTrace t{d_t, d_r};
  double covered = 0.0;
  std::int64_t k = 0;
  while (true) {
    ++t.iterations;
    if (!(covered + d_r <= d_t)) break;
    covered += d_r;
    ++k;
  }
  t.k = k;
  t.covered = covered;
  t.residual = d_t - covered;
  return t;
}

// Every maximal "<=...=>" run inside free text, in order of appearance.
struct SymbolicToken {
  std::size_t offset = 0;
  std::string text;
  std::int64_t marks = 0;
};

inline std::vector<SymbolicToken> find_symbolic_groups(std::string_view text) {
  std::vector<SymbolicToken> out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '<') continue;
    std::size_t j = i + 1;
    while (j < text.size() && text[j] == '=') ++j;
    if (j > i + 1 && j < text.size() && text[j] == '>') {
      out.push_back({i, std::string(text.substr(i, j - i + 1)), static_cast<std::int64_t>(j - i - 1)});
      i = j;
    }
  }
  return out;
}

}  // namespace pts
