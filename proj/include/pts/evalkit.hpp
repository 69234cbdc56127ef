#pragma once

// Answer extraction, relative-accuracy scoring, report aggregation, the
// error-by-target-size trend, and the perception-token ratio.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pts/bench.hpp"
#include "pts/error.hpp"
#include "pts/symbolic.hpp"

namespace pts {

inline constexpr std::array<double, 5> kThresholds = {0.5, 0.4, 0.3, 0.2, 0.1};

// ---------------------------------------------------------------------------
// Answer extraction

namespace detail {

inline std::string strip_digit_commas(std::string_view in) {
  std::string s;
  s.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == ',' && i > 0 && i + 1 < in.size() && std::isdigit(static_cast<unsigned char>(in[i - 1])) &&
        std::isdigit(static_cast<unsigned char>(in[i + 1]))) {
      continue;
    }
    s.push_back(in[i]);
  }
  return s;
}

struct NumberSpan {
  std::size_t pos, len;
  double value;
};

// Numbers not glued to letters ("Qwen2.5" and "x2" are not numbers here).
inline std::vector<NumberSpan> standalone_numbers(std::string_view s) {
  std::vector<NumberSpan> out;
  auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  std::size_t i = 0;
  while (i < s.size()) {
    const bool digit = std::isdigit(static_cast<unsigned char>(s[i]));
    const bool lead_dot = s[i] == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]));
    if (!digit && !lead_dot) {
      ++i;
      continue;
    }
    std::size_t start = i;
    if (start > 0 && s[start - 1] == '-' && (start < 2 || !alnum(s[start - 2]))) --start;
    const bool glued_before = start > 0 && (alnum(s[start - 1]) || s[start - 1] == '.');
    std::size_t j = i;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    if (j < s.size() && s[j] == '.' && j + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[j + 1]))) {
      ++j;
      while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    }
    const bool glued_after = j < s.size() && alnum(s[j]);
    if (!glued_before && !glued_after) {
      out.push_back({start, j - start, std::stod(std::string(s.substr(start, j - start)))});
    }
    i = j;
  }
  return out;
}

inline std::optional<double> first_number(std::string_view s) {
  const auto nums = standalone_numbers(strip_digit_commas(s));
  if (nums.empty()) return std::nullopt;
  return nums.front().value;
}

}  // namespace detail

// Priority: <answer> content, then \boxed{...}, then the last standalone
// number anywhere in the text.
inline std::optional<double> extract_answer(std::string_view raw) {
  const std::size_t a0 = raw.find("<answer>");
  if (a0 != std::string_view::npos) {
    const std::size_t a1 = raw.find("</answer>", a0);
    const auto inner = raw.substr(a0 + 8, a1 == std::string_view::npos ? std::string_view::npos : a1 - a0 - 8);
    if (auto v = detail::first_number(inner)) return v;
  }
  const std::size_t b0 = raw.rfind("\\boxed{");
  if (b0 != std::string_view::npos) {
    std::size_t depth = 1, i = b0 + 7;
    for (; i < raw.size() && depth > 0; ++i) {
      if (raw[i] == '{') ++depth;
      if (raw[i] == '}') --depth;
    }
    if (auto v = detail::first_number(raw.substr(b0 + 7, i - b0 - 8))) return v;
  }
  const auto nums = detail::standalone_numbers(detail::strip_digit_commas(raw));
  if (nums.empty()) return std::nullopt;
  return nums.back().value;
}

// ---------------------------------------------------------------------------
// Relative accuracy

inline double relative_error(double y_hat, double y) {
  if (!(y > 0.0)) throw Error(Errc::domain, "ground truth must be positive");
  return std::abs(y_hat - y) / y;
}

inline bool ra_at(double y_hat, double y, double theta) { return relative_error(y_hat, y) < theta; }

inline double ra_avg(double y_hat, double y) {
  const double e = relative_error(y_hat, y);
  int hits = 0;
  for (double t : kThresholds) hits += e < t ? 1 : 0;
  return hits / static_cast<double>(kThresholds.size());
}

struct EvalRecord {
  std::string item_id;
  Subtask subtask = Subtask::length;
  double y = 0.0;
  std::optional<double> y_hat;
  std::optional<double> rel_error;
  std::array<bool, 5> hits{};  // aligned with kThresholds

  double ra_avg() const {
    return static_cast<double>(std::count(hits.begin(), hits.end(), true)) / hits.size();
  }
  bool ra_01() const { return hits[4]; }
};

inline EvalRecord score(const std::string& id, Subtask subtask, double y, std::optional<double> y_hat) {
  if (!(y > 0.0)) throw Error(Errc::domain, "ground truth for " + id + " must be positive");
  EvalRecord r{id, subtask, y, y_hat, std::nullopt, {}};
  if (y_hat && std::isfinite(*y_hat)) {
    r.rel_error = relative_error(*y_hat, y);
    for (std::size_t i = 0; i < kThresholds.size(); ++i) r.hits[i] = *r.rel_error < kThresholds[i];
  } else {
    r.y_hat.reset();
  }
  return r;
}

struct ReportCell {
  std::size_t n = 0;
  std::size_t unparseable = 0;
  double ra_01 = 0.0;   // percent
  double ra_avg = 0.0;  // percent
};

struct Report {
  std::map<Subtask, ReportCell> subtasks;
  ReportCell overall;  // ra values are the macro mean over subtasks
};

inline Report aggregate(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw Error(Errc::domain, "cannot aggregate an empty record set");
  Report rep;
  std::map<Subtask, std::pair<double, double>> sums;
  for (const auto& r : records) {
    auto& cell = rep.subtasks[r.subtask];
    ++cell.n;
    if (!r.y_hat) ++cell.unparseable;
    sums[r.subtask].first += r.ra_01() ? 1.0 : 0.0;
    sums[r.subtask].second += r.ra_avg();
  }
  for (auto& [s, cell] : rep.subtasks) {
    cell.ra_01 = 100.0 * sums[s].first / static_cast<double>(cell.n);
    cell.ra_avg = 100.0 * sums[s].second / static_cast<double>(cell.n);
    rep.overall.n += cell.n;
    rep.overall.unparseable += cell.unparseable;
    rep.overall.ra_01 += cell.ra_01;
    rep.overall.ra_avg += cell.ra_avg;
  }
  rep.overall.ra_01 /= static_cast<double>(rep.subtasks.size());
  rep.overall.ra_avg /= static_cast<double>(rep.subtasks.size());
  return rep;
}

inline double round1(double v) { return std::round(v * 10.0) / 10.0; }

inline nlohmann::ordered_json report_json(const Report& rep) {
  auto cell = [](const ReportCell& c) {
    nlohmann::ordered_json j;
    j["n"] = c.n;
    j["unparseable"] = c.unparseable;
    j["RA_0.1"] = round1(c.ra_01);
    j["RA_avg"] = round1(c.ra_avg);
    return j;
  };
  nlohmann::ordered_json j;
  nlohmann::ordered_json subs = nlohmann::ordered_json::object();
  for (const auto& [s, c] : rep.subtasks) subs[subtask_name(s)] = cell(c);
  j["subtasks"] = subs;
  j["average"] = cell(rep.overall);
  return j;
}

// ---------------------------------------------------------------------------
// Responses

struct ResponseRow {
  std::string id;
  std::string model;
  std::string raw;
  std::optional<std::string> error;
};

inline std::vector<ResponseRow> read_responses(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::io, "cannot open responses '" + path.string() + "'");
  std::vector<ResponseRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ResponseRow r;
      r.id = j.at("id").get<std::string>();
      r.model = j.value("model", "");
      r.raw = j.value("raw", "");
      if (j.contains("error") && !j["error"].is_null()) r.error = j["error"].get<std::string>();
      rows.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::io, fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return rows;
}

// One record per manifest item. Items without a usable response are scored
// as unparseable, so the denominator stays the full manifest.
inline std::vector<EvalRecord> score_responses(const std::vector<BenchItem>& items,
                                               const std::vector<ResponseRow>& rows) {
  std::map<std::string, const ResponseRow*> by_id;
  for (const auto& r : rows) by_id[r.id] = &r;  // the last row for an id wins
  std::vector<EvalRecord> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    std::optional<double> y_hat;
    if (auto it = by_id.find(item.id); it != by_id.end() && !it->second->error) {
      y_hat = extract_answer(it->second->raw);
    }
    out.push_back(score(item.id, item.subtask, item.answer, y_hat));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Error trend over ground-truth size

struct TrendBin {
  double lo = 0.0, hi = 0.0;
  std::size_t n = 0;
  double mean_rel_err = 0.0;
};

// Equal-count bins over y (sorted ascending); the first n % bins bins take
// one extra record. Every record must carry a prediction.
inline std::vector<TrendBin> error_trend(std::vector<EvalRecord> records, std::size_t n_bins) {
  if (n_bins < 2) throw Error(Errc::domain, "error_trend needs at least 2 bins");
  if (records.size() < n_bins) {
    throw Error(Errc::domain, fmt::format("{} records cannot fill {} bins", records.size(), n_bins));
  }
  for (const auto& r : records) {
    if (!r.rel_error) throw Error(Errc::domain, "record " + r.item_id + " has no prediction");
  }
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.y < b.y; });
  const std::size_t base = records.size() / n_bins, extra = records.size() % n_bins;
  std::vector<TrendBin> bins;
  std::size_t at = 0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    TrendBin bin;
    bin.n = size;
    bin.lo = records[at].y;
    bin.hi = records[at + size - 1].y;
    double sum = 0.0;
    for (std::size_t i = at; i < at + size; ++i) sum += *records[i].rel_error;
    bin.mean_rel_err = sum / static_cast<double>(size);
    bins.push_back(bin);
    at += size;
  }
  return bins;
}

inline std::string trend_csv(const std::vector<TrendBin>& bins) {
  std::string out = "bin_lo,bin_hi,n,mean_rel_err\n";
  for (const auto& b : bins) out += fmt::format("{:.17g},{:.17g},{},{:.17g}\n", b.lo, b.hi, b.n, b.mean_rel_err);
  return out;
}

// ---------------------------------------------------------------------------
// Perception ratio

struct Lexicon {
  std::string version;
  std::set<std::string> shape, measure, unit;

  bool geometric(const std::string& w) const { return shape.count(w) || measure.count(w); }
};

inline Lexicon parse_lexicon(std::string_view text) {
  Lexicon lex;
  std::set<std::string>* section = nullptr;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("# perception lexicon, version ", 0) == 0) lex.version = line.substr(30);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line.erase(0, line.find_first_not_of(" \t"));
    line.erase(line.find_last_not_of(" \t") + 1);
    if (line.empty()) continue;
    if (line == "[shape]") section = &lex.shape;
    else if (line == "[measure]") section = &lex.measure;
    else if (line == "[unit]") section = &lex.unit;
    else if (line.front() == '[') throw Error(Errc::invalid_config, fmt::format("lexicon line {}: unknown section {}", lineno, line));
    else if (section == nullptr) throw Error(Errc::invalid_config, fmt::format("lexicon line {}: word before any section", lineno));
    else section->insert(line);
  }
  if (lex.shape.empty() || lex.unit.empty()) throw Error(Errc::invalid_config, "lexicon lacks shape or unit words");
  return lex;
}

// Same content as assets/perception_lexicon_v1.txt (a test keeps them equal).
inline constexpr std::string_view kLexiconV1 = R"(# perception lexicon, version 1
# One word per line, lowercase, grouped into sections.
#   [shape]    geometric objects and their parts; always perceptual
#   [measure]  measured attributes; always perceptual, and a number right
#              after one (e.g. "radius 2.5", "width is 3") counts as well
#   [unit]     measurement units; perceptual only next to a number
# "image" is deliberately absent: it names the input, not a visual attribute.

[shape]
circle
circles
triangle
triangles
rectangle
rectangles
square
squares
trapezoid
trapezoids
pentagon
pentagons
polygon
polygons
line
lines
segment
segments
edge
edges
vertex
vertices
corner
corners

[measure]
radius
radii
diameter
width
height
length
lengths
side
sides
perimeter
area
diagonal
circumference

[unit]
unit
units
cm
mm
px
pixel
pixels
inch
inches
meter
meters
)";

inline const Lexicon& default_lexicon() {
  static const Lexicon lex = parse_lexicon(kLexiconV1);
  return lex;
}

enum class TokenKind { word, number, symbolic };

struct Token {
  TokenKind kind;
  std::string text;
};

// Tokenizer: tags like <think> or </answer> are removed; then symbolic
// groups, numbers (digits with an optional fraction) and letter runs
// (lowercased) are tokens; everything else separates tokens.
inline std::vector<Token> tokenize(std::string_view raw) {
  static const std::regex kTag(R"(</?[A-Za-z_]+>)");
  const std::string text = std::regex_replace(std::string(raw), kTag, " ");
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '<') {
      std::size_t j = i + 1;
      while (j < text.size() && text[j] == '=') ++j;
      if (j > i + 1 && j < text.size() && text[j] == '>') {
        out.push_back({TokenKind::symbolic, text.substr(i, j - i + 1)});
        i = j + 1;
        continue;
      }
      ++i;
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      if (j + 1 < text.size() && text[j] == '.' && std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
        ++j;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
      }
      out.push_back({TokenKind::number, text.substr(i, j - i)});
      i = j;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      std::string w;
      while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) {
        w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[j]))));
        ++j;
      }
      out.push_back({TokenKind::word, std::move(w)});
      i = j;
      continue;
    }
    ++i;
  }
  return out;
}

struct PerceptionResult {
  double ratio = 0.0;
  std::size_t perceptual = 0;
  std::size_t total = 0;
  bool empty = false;
};

// A token is perceptual if it is a symbolic group, a shape or measure word,
// a unit word next to a number, or a number followed by a unit word or
// directly preceded by a measure word (optionally with "is"/"of" between).
inline PerceptionResult perception_ratio(std::string_view text, const Lexicon& lex = default_lexicon()) {
  const auto toks = tokenize(text);
  PerceptionResult r;
  r.total = toks.size();
  if (toks.empty()) {
    r.empty = true;
    return r;
  }
  auto is_unit = [&](std::size_t i) { return i < toks.size() && toks[i].kind == TokenKind::word && lex.unit.count(toks[i].text); };
  auto is_num = [&](std::size_t i) { return i < toks.size() && toks[i].kind == TokenKind::number; };
  auto is_measure = [&](std::size_t i) {
    return i < toks.size() && toks[i].kind == TokenKind::word && lex.measure.count(toks[i].text);
  };
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    bool p = false;
    switch (t.kind) {
      case TokenKind::symbolic: p = true; break;
      case TokenKind::word:
        p = lex.geometric(t.text) || (lex.unit.count(t.text) && ((i > 0 && is_num(i - 1)) || is_num(i + 1)));
        break;
      case TokenKind::number: {
        const bool linker = i >= 2 && toks[i - 1].kind == TokenKind::word &&
                            (toks[i - 1].text == "is" || toks[i - 1].text == "of") && is_measure(i - 2);
        p = is_unit(i + 1) || (i > 0 && is_measure(i - 1)) || linker;
        break;
      }
    }
    if (p) ++r.perceptual;
  }
  r.ratio = static_cast<double>(r.perceptual) / static_cast<double>(r.total);
  return r;
}

// The fast-perception baseline: the answer with no intermediate steps.
inline std::string direct_answer_text(double y) {
  const std::string v = fmt::format("{:.2f}", y);
  return "Based on the image, the answer is approximately " + v + ".\n<answer>" + v + "</answer>";
}

}  // namespace pts
