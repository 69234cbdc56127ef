#pragma once

// Five-stage reasoning chains: deterministic synthesis from a scene, a
// parser that accepts both tagged and untagged chain text, and a validator
// that re-checks every symbolic block and arithmetic claim.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pts/bench.hpp"
#include "pts/error.hpp"
#include "pts/geometry.hpp"
#include "pts/prompt.hpp"
#include "pts/rng.hpp"
#include "pts/symbolic.hpp"

namespace pts {

enum class Stage { review, hint, reference, estimation, calculation };
inline constexpr std::array<Stage, 5> kAllStages = {Stage::review, Stage::hint, Stage::reference,
                                                    Stage::estimation, Stage::calculation};

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::review: return "review";
    case Stage::hint: return "hint";
    case Stage::reference: return "reference";
    case Stage::estimation: return "estimation";
    case Stage::calculation: return "calculation";
  }
  return "?";
}

struct Chain {
  std::array<std::string, 5> stages;
  std::array<bool, 5> present{};
  double answer = 0.0;
  std::string answer_text;
  std::string item_id;
  double delta = 0.1;
  bool tagged = true;  // false when the stages came from the untagged heuristics

  const std::string& stage(Stage s) const { return stages[static_cast<std::size_t>(s)]; }
  std::string& stage(Stage s) { return stages[static_cast<std::size_t>(s)]; }
  bool has(Stage s) const { return present[static_cast<std::size_t>(s)]; }
};

inline std::string serialize_chain(const Chain& c) {
  std::string out = "<think>\n";
  for (auto s : kAllStages) {
    if (!c.has(s)) continue;
    out += fmt::format("<{0}>\n{1}\n</{0}>\n", stage_name(s), c.stage(s));
  }
  out += "</think>\n<answer>" + c.answer_text + "</answer>";
  return out;
}

// ---------------------------------------------------------------------------
// Number formatting and arithmetic

// Up to `max_decimals`, trailing zeros trimmed, at least one decimal kept.
inline std::string fmt_num(double v, int max_decimals = 4) {
  std::string s = fmt::format("{:.{}f}", v, max_decimals);
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.push_back('0');
  }
  if (s == "-0.0") s = "0.0";
  return s;
}

// Two decimals, widened while rounding would move the value by more than
// 0.9% (small ratios such as 0.054 need a third digit).
inline std::string round_answer(double q) {
  for (int d = 2; d < 8; ++d) {
    const double scale = std::pow(10.0, d);
    const double r = std::round(q * scale) / scale;
    if (r > 0.0 && std::abs(r - q) <= 0.009 * std::abs(q)) return fmt::format("{:.{}f}", r, d);
  }
  return fmt_num(q, 8);
}

namespace expr {

// Recursive-descent evaluator for + - * / ^ ( ) and sqrt(...).
class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  std::optional<double> run() {
    try {
      const double v = parse_sum();
      skip();
      if (pos_ != s_.size()) return std::nullopt;
      if (!std::isfinite(v)) return std::nullopt;
      return v;
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  int operators() const { return ops_; }

 private:
  void skip() {
    while (pos_ < s_.size() && s_[pos_] == ' ') ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  [[noreturn]] void fail() { throw Error(Errc::chain_parse, "bad expression"); }

  double parse_sum() {
    double v = parse_product();
    while (true) {
      if (eat('+')) {
        ++ops_;
        v += parse_product();
      } else if (eat('-')) {
        ++ops_;
        v -= parse_product();
      } else {
        return v;
      }
    }
  }
  double parse_product() {
    double v = parse_power();
    while (true) {
      if (eat('*')) {
        ++ops_;
        v *= parse_power();
      } else if (eat('/')) {
        ++ops_;
        const double d = parse_power();
        if (d == 0.0) fail();
        v /= d;
      } else {
        return v;
      }
    }
  }
  double parse_power() {
    const double base = parse_unary();
    if (eat('^')) {
      ++ops_;
      return std::pow(base, parse_power());
    }
    return base;
  }
  double parse_unary() {
    if (eat('-')) return -parse_unary();
    return parse_primary();
  }
  double parse_primary() {
    skip();
    if (eat('(')) {
      const double v = parse_sum();
      if (!eat(')')) fail();
      return v;
    }
    if (s_.substr(pos_, 4) == "sqrt") {
      pos_ += 4;
      if (!eat('(')) fail();
      const double v = parse_sum();
      if (!eat(')') || v < 0.0) fail();
      ++ops_;
      return std::sqrt(v);
    }
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
      ++pos_;
    }
    if (start == pos_) fail();
    const std::string tok(s_.substr(start, pos_ - start));
    if (std::count(tok.begin(), tok.end(), '.') > 1 || tok == ".") fail();
    return std::stod(tok);
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int ops_ = 0;
};

}  // namespace expr

inline std::optional<double> evaluate_expression(std::string_view text, int* operators = nullptr) {
  expr::Parser p(text);
  auto v = p.run();
  if (operators != nullptr) *operators = p.operators();
  return v;
}

// Rewrites the notations seen in chain text to plain ASCII: LaTeX and
// unicode multiplication, division and approximation signs. '~' marks an
// approximate equality afterwards.
inline std::string normalize_math(std::string_view in) {
  std::string s(in);
  auto rep = [&](const std::string& from, const std::string& to) {
    for (std::size_t p = s.find(from); p != std::string::npos; p = s.find(from, p + to.size())) {
      s.replace(p, from.size(), to);
    }
  };
  rep("$\\approx$", "~");
  rep("\\approx", "~");
  rep("\xE2\x89\x88", "~");  // U+2248
  rep("$\\times$", "*");
  rep("\\times", "*");
  rep("\xC3\x97", "*");  // U+00D7
  rep("\xC3\xB7", "/");  // U+00F7
  rep("\\div", "/");
  return s;
}

// Replaces every symbolic group's characters with '#', keeping offsets.
inline std::string mask_symbolic(std::string_view in) {
  std::string s(in);
  for (const auto& g : find_symbolic_groups(in)) {
    std::fill(s.begin() + static_cast<std::ptrdiff_t>(g.offset),
              s.begin() + static_cast<std::ptrdiff_t>(g.offset + g.text.size()), '#');
  }
  return s;
}

struct ArithmeticClaim {
  std::string lhs;
  std::string rhs;
  double lhs_value = 0.0;
  double rhs_value = 0.0;
  char relation = '=';     // '=' or '~'
  std::size_t relation_pos = 0;  // offsets into the normalized text
  std::size_t rhs_pos = 0;
  bool holds = false;
};

inline constexpr double kArithmeticTolerance = 0.01;

inline bool within_relative(double stated, double exact, double tol) {
  return std::abs(stated - exact) <= tol * std::abs(exact);
}

namespace detail {

inline bool expr_char(char c) {
  return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '+' || c == '-' ||
         c == '*' || c == '/' || c == '^' || c == '(' || c == ')' || c == ' ';
}

// Reads a plain decimal number at `pos`; returns its length or 0.
inline std::size_t number_at(std::string_view s, std::size_t pos) {
  std::size_t i = pos;
  if (i < s.size() && s[i] == '-') ++i;
  const std::size_t digits_from = i;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i < s.size() && s[i] == '.' && i + 1 < s.size() &&
      std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
    ++i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  }
  if (i == digits_from) return 0;
  if (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) return 0;
  return i - pos;
}

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

}  // namespace detail

// Finds "<expression> = <number>" claims. The expression is the longest run
// of arithmetic characters before the relation sign and must contain an
// operator; the right side must be a lone number.
inline std::vector<ArithmeticClaim> find_claims(std::string_view raw) {
  const std::string norm = normalize_math(raw);
  const std::string text = mask_symbolic(norm);
  std::vector<ArithmeticClaim> out;
  for (std::size_t p = 0; p < text.size(); ++p) {
    const char rel = text[p];
    if (rel != '=' && rel != '~') continue;
    std::size_t start = p;
    while (start > 0) {
      const char c = text[start - 1];
      if (detail::expr_char(c)) {
        --start;
      } else if (start >= 4 && text.compare(start - 4, 4, "sqrt") == 0 && c == 't' &&
                 start < p && text[start] == '(') {
        start -= 4;
      } else {
        break;
      }
    }
    std::string lhs = detail::trim(std::string_view(text).substr(start, p - start));
    // Drop leading noise, such as a sentence-ending period, up to the first
    // character that can open an expression.
    while (!lhs.empty()) {
      const char c = lhs.front();
      const bool opener = std::isdigit(static_cast<unsigned char>(c)) || c == '(' ||
                          (c == 's' && lhs.rfind("sqrt", 0) == 0) ||
                          ((c == '.' || c == '-') && lhs.size() > 1 &&
                           std::isdigit(static_cast<unsigned char>(lhs[1])));
      if (opener) break;
      lhs.erase(0, 1);
    }
    // Unbalanced leading parentheses belong to surrounding prose.
    while (!lhs.empty() && lhs.front() == '(' &&
           std::count(lhs.begin(), lhs.end(), '(') > std::count(lhs.begin(), lhs.end(), ')')) {
      lhs.erase(0, 1);
      lhs = detail::trim(lhs);
    }
    if (lhs.find_first_of("0123456789") == std::string::npos) continue;

    std::size_t r = p + 1;
    while (r < text.size() && text[r] == ' ') ++r;
    const std::size_t len = detail::number_at(text, r);
    if (len == 0) continue;
    std::size_t after = r + len;
    while (after < text.size() && text[after] == ' ') ++after;
    if (after < text.size() && std::string_view("+-*/^(").find(text[after]) != std::string_view::npos) {
      continue;  // the right side is itself an expression; a later sign closes it
    }

    int ops = 0;
    const auto value = evaluate_expression(lhs, &ops);
    if (!value || ops == 0) continue;
    ArithmeticClaim c;
    c.lhs = lhs;
    c.rhs = text.substr(r, len);
    c.lhs_value = *value;
    c.rhs_value = std::stod(c.rhs);
    c.relation = rel;
    c.relation_pos = p;
    c.rhs_pos = r;
    c.holds = within_relative(c.rhs_value, c.lhs_value, kArithmeticTolerance);
    out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Estimation blocks

struct EstimationBlock {
  std::vector<std::string> groups;
  std::int64_t marks = 0;  // full groups count as 1/delta marks
  double decoded = 0.0;
  double stated = 0.0;
  bool consistent = false;
  std::string note;
};

struct EstimationScan {
  std::vector<EstimationBlock> blocks;
  std::vector<std::string> problems;  // totals without support, dangling groups
  std::vector<std::size_t> total_offsets;  // offsets of block totals in the scanned text
};

// A block is a run of symbolic groups closed by the next "= N units" total.
inline EstimationScan scan_estimation(std::string_view raw, double delta) {
  static const std::regex kTotal(R"([=~]\s*(-?\d+(?:\.\d+)?)\s*(?:square\s+)?units?\b)");
  const std::string norm = normalize_math(raw);
  const std::string masked = mask_symbolic(norm);
  const auto groups = find_symbolic_groups(norm);
  const auto claims = find_claims(norm);
  const std::int64_t per = marks_per_unit(delta);

  EstimationScan scan;
  std::size_t gi = 0;
  for (auto it = std::sregex_iterator(masked.begin(), masked.end(), kTotal); it != std::sregex_iterator();
       ++it) {
    const auto pos = static_cast<std::size_t>(it->position(0));
    EstimationBlock block;
    bool malformed = false;
    while (gi < groups.size() && groups[gi].offset < pos) {
      const auto& g = groups[gi++];
      block.groups.push_back(g.text);
      if (g.marks > per) malformed = true;
      block.marks += g.marks;
    }
    const double stated = std::stod((*it)[1].str());
    if (block.groups.empty()) {
      const bool derived = std::any_of(claims.begin(), claims.end(), [&](const ArithmeticClaim& c) {
        return c.relation_pos == pos;
      });
      if (!derived) {
        scan.problems.push_back(fmt::format("total {} units is backed by neither segments nor arithmetic",
                                            (*it)[1].str()));
      }
      continue;
    }
    block.decoded = static_cast<double>(block.marks) * delta;
    block.stated = stated;
    block.consistent = !malformed && std::abs(block.decoded - stated) <= 1e-9;
    if (malformed) block.note = "a group is longer than one unit";
    else if (!block.consistent) block.note = fmt::format("segments sum to {}, text states {}",
                                                         fmt_num(block.decoded), (*it)[1].str());
    scan.total_offsets.push_back(pos);
    scan.blocks.push_back(std::move(block));
  }
  if (gi < groups.size()) {
    scan.problems.push_back(fmt::format("{} segment(s) after the last stated total", groups.size() - gi));
  }
  return scan;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::optional<double> parse_plain_number(std::string s) {
  s.erase(std::remove(s.begin(), s.end(), ','), s.end());
  s = trim(s);
  if (s.empty()) return std::nullopt;
  const std::size_t len = number_at(s, 0);
  if (len == 0 || len != s.size()) return std::nullopt;
  return std::stod(s);
}

inline std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t nl = s.find('\n', start);
    const std::size_t end = nl == std::string_view::npos ? s.size() : nl;
    out.emplace_back(s.substr(start, end - start));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return out;
}

inline std::string join_lines(const std::vector<std::string>& lines, std::size_t from, std::size_t to) {
  std::string out;
  for (std::size_t i = from; i < to && i < lines.size(); ++i) {
    if (!out.empty()) out += "\n";
    out += lines[i];
  }
  return trim(out);
}

// Stage assignment for prose chains without stage tags. See docs/chain-format.md.
inline void assign_untagged(Chain& c, std::string_view think, double delta) {
  static const std::regex kReference(
      R"(\b(choose|take|use|select|pick)\b[^.]*\bas\s+(the|our)\s+reference)", std::regex::icase);
  static const std::regex kTotal(R"([=~]\s*-?\d+(?:\.\d+)?\s*(?:square\s+)?units?\b)");
  const auto lines = split_lines(think);
  const std::size_t n = lines.size();
  std::optional<std::size_t> hint, ref, last_total;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string l = lower(lines[i]);
    if (l.find("precise measurement") != std::string::npos ||
        (l.find("delimiter") != std::string::npos && !find_symbolic_groups(l).empty())) {
      hint = i;
      break;
    }
  }
  for (std::size_t i = hint ? *hint + 1 : 0; i < n; ++i) {
    if (std::regex_search(lines[i], kReference)) {
      ref = i;
      break;
    }
  }
  std::size_t pending = 0;
  for (std::size_t i = ref ? *ref + 1 : 0; i < n; ++i) {
    const std::string masked = mask_symbolic(normalize_math(lines[i]));
    pending += find_symbolic_groups(lines[i]).size();
    if (pending > 0 && std::regex_search(masked, kTotal)) {
      last_total = i;
      pending = 0;
    }
  }
  (void)delta;
  auto set = [&](Stage s, std::size_t from, std::size_t to) {
    std::string t = join_lines(lines, from, to);
    if (!t.empty()) {
      c.stage(s) = std::move(t);
      c.present[static_cast<std::size_t>(s)] = true;
    }
  };
  const std::size_t review_end = hint ? *hint : (ref ? *ref : 0);
  set(Stage::review, 0, review_end);
  if (hint) set(Stage::hint, *hint, ref ? *ref : *hint + 1);
  if (ref) set(Stage::reference, *ref, *ref + 1);
  if (ref && last_total) {
    set(Stage::estimation, *ref + 1, *last_total + 1);
    set(Stage::calculation, *last_total + 1, n);
  }
}

}  // namespace detail

// Full-group width seen in the text: the longest group names one unit.
inline double infer_delta(std::string_view text) {
  std::int64_t best = 0;
  for (const auto& g : find_symbolic_groups(text)) best = std::max(best, g.marks);
  if (best < 2) return 0.1;
  return 1.0 / static_cast<double>(best);
}

// Throws Error(chain_parse) naming the first missing tag:
// missing-think-open, missing-think-close, missing-answer-open,
// missing-answer-close, or answer-not-numeric.
inline Chain parse_chain(std::string_view text, std::optional<double> delta = std::nullopt) {
  auto need = [&](std::string_view tag, std::size_t from, const char* name) {
    const std::size_t p = text.find(tag, from);
    if (p == std::string_view::npos) throw Error(Errc::chain_parse, name);
    return p;
  };
  const std::size_t t0 = need("<think>", 0, "missing-think-open");
  const std::size_t t1 = need("</think>", t0, "missing-think-close");
  const std::size_t a0 = need("<answer>", t1, "missing-answer-open");
  const std::size_t a1 = need("</answer>", a0, "missing-answer-close");

  Chain c;
  const std::string_view think = text.substr(t0 + 7, t1 - t0 - 7);
  c.delta = delta ? *delta : infer_delta(think);
  c.answer_text = detail::trim(text.substr(a0 + 8, a1 - a0 - 8));
  const auto num = detail::parse_plain_number(c.answer_text);
  if (!num) throw Error(Errc::chain_parse, "answer-not-numeric");
  c.answer = *num;

  bool any_tag = false;
  for (auto s : kAllStages) {
    const std::string open = fmt::format("<{}>", stage_name(s));
    const std::string close = fmt::format("</{}>", stage_name(s));
    const std::size_t o = think.find(open);
    if (o == std::string_view::npos) continue;
    any_tag = true;
    const std::size_t e = think.find(close, o);
    if (e == std::string_view::npos) continue;
    c.stage(s) = detail::trim(think.substr(o + open.size(), e - o - open.size()));
    c.present[static_cast<std::size_t>(s)] = true;
  }
  c.tagged = any_tag;
  if (!any_tag) detail::assign_untagged(c, think, c.delta);
  return c;
}

// ---------------------------------------------------------------------------
// Validation

struct ChainReport {
  bool parse_ok = false;
  std::array<bool, 5> stage_presence{};
  bool estimation_consistent = false;
  bool arithmetic_consistent = false;
  bool answer_consistent = false;
  std::vector<std::string> diagnostics;
  std::vector<EstimationBlock> blocks;
  std::vector<ArithmeticClaim> claims;

  bool all_stages() const {
    return std::all_of(stage_presence.begin(), stage_presence.end(), [](bool b) { return b; });
  }
  bool valid() const {
    return parse_ok && all_stages() && estimation_consistent && arithmetic_consistent && answer_consistent;
  }
};

inline ChainReport validate_chain(const Chain& chain, const BenchItem& item) {
  ChainReport rep;
  rep.parse_ok = true;
  rep.stage_presence = chain.present;
  for (auto s : kAllStages) {
    if (!chain.has(s)) rep.diagnostics.push_back(std::string("missing stage: ") + stage_name(s));
  }

  // (b) estimation totals against their segments
  if (chain.has(Stage::estimation)) {
    const auto scan = scan_estimation(chain.stage(Stage::estimation), chain.delta);
    rep.blocks = scan.blocks;
    rep.estimation_consistent = !scan.blocks.empty() && scan.problems.empty() &&
                                std::all_of(scan.blocks.begin(), scan.blocks.end(),
                                            [](const EstimationBlock& b) { return b.consistent; });
    if (scan.blocks.empty()) rep.diagnostics.push_back("estimation stage has no segment blocks");
    for (const auto& p : scan.problems) rep.diagnostics.push_back("estimation: " + p);
    for (std::size_t i = 0; i < scan.blocks.size(); ++i) {
      if (!scan.blocks[i].consistent) {
        rep.diagnostics.push_back(fmt::format("estimation block {}: {}", i + 1, scan.blocks[i].note));
      }
    }
  }

  // (c) every arithmetic claim in the estimation and calculation stages
  std::vector<ArithmeticClaim> calc_claims;
  for (auto s : {Stage::estimation, Stage::calculation}) {
    if (!chain.has(s)) continue;
    auto claims = find_claims(chain.stage(s));
    if (s == Stage::calculation) calc_claims = claims;
    rep.claims.insert(rep.claims.end(), claims.begin(), claims.end());
  }
  rep.arithmetic_consistent = !rep.claims.empty();
  if (rep.claims.empty()) rep.diagnostics.push_back("no arithmetic claims found");
  for (const auto& c : rep.claims) {
    if (!c.holds) {
      rep.arithmetic_consistent = false;
      rep.diagnostics.push_back(
          fmt::format("claim '{} {} {}' is off: left side is {}", c.lhs, c.relation, c.rhs, fmt_num(c.lhs_value, 6)));
    }
  }

  // (d) the answer against the final calculation result
  if (calc_claims.empty()) {
    rep.diagnostics.push_back("calculation stage states no result");
  } else {
    const double result = calc_claims.back().rhs_value;
    rep.answer_consistent = within_relative(chain.answer, result, kArithmeticTolerance);
    if (!rep.answer_consistent) {
      rep.diagnostics.push_back(fmt::format("answer {} differs from the calculated {}", chain.answer_text,
                                            calc_claims.back().rhs));
    }
  }
  if (!item.id.empty() && !chain.item_id.empty() && item.id != chain.item_id) {
    rep.diagnostics.push_back("chain belongs to item " + chain.item_id + ", not " + item.id);
  }
  return rep;
}

// Parse then validate; parse failures become a report with parse_ok = false.
inline ChainReport validate_chain_text(std::string_view text, const BenchItem& item,
                                       std::optional<double> delta = std::nullopt) {
  try {
    Chain c = parse_chain(text, delta);
    c.item_id = item.id;
    return validate_chain(c, item);
  } catch (const Error& e) {
    if (e.code() != Errc::chain_parse) throw;
    ChainReport rep;
    rep.diagnostics.push_back(std::string("parse failure: ") + e.detail());
    return rep;
  }
}

// ---------------------------------------------------------------------------
// Synthesis

namespace detail {

struct Segment {
  AttributeSelector sel;
  std::string phrase;
  double px = 0.0;
  std::int64_t marks = 0;  // estimate in delta steps
  std::string value;       // printed estimate
};

// The segments a quantity is computed from.
inline std::vector<AttributeSelector> segments_of(const Scene& scene, const AttributeSelector& q) {
  if (q.is_segment()) return {q};
  if (q.of_image()) return {AttributeSelector::image_width(), AttributeSelector::image_height()};
  const Shape& shape = find_shape(scene, *q.color);
  switch (shape.kind()) {
    case ShapeKind::circle: return {AttributeSelector::radius_of(shape.color)};
    case ShapeKind::rectangle:
      return {AttributeSelector::side_of(shape.color, SideRank::longest),
              AttributeSelector::side_of(shape.color, SideRank::shortest)};
    default: break;
  }
  if (q.attr == Attribute::area && shape.kind() != ShapeKind::triangle) {
    throw Error(Errc::unsupported_attribute,
                std::string("no area formula for a ") + kind_name(shape.kind()));
  }
  std::vector<AttributeSelector> out;
  for (std::size_t i = 0; i < side_lengths(shape).size(); ++i) {
    out.push_back(AttributeSelector::side_of(shape.color, SideRank::index, static_cast<int>(i)));
  }
  return out;
}

inline int value_decimals(double delta) {
  return std::max(1, static_cast<int>(std::ceil(-std::log10(delta) - 1e-9)));
}

struct Wording {
  Rng rng;
  template <std::size_t N>
  const char* pick(const std::array<const char*, N>& options) {
    return options[rng.index(N)];
  }
};

inline const std::array<const char*, 3> kBlockOpeners = {
    "Laying the ruler along the {} gives:",
    "Stepping the ruler along the {}, I count:",
    "Now the {}. Placing the ruler end to end along it:",
};

inline std::string units_word(double v) { return std::abs(v - 1.0) < 1e-12 ? "unit" : "units"; }

}  // namespace detail

struct SynthOptions {
  double delta = 0.1;
};

inline Chain synthesize_chain(const BenchItem& item, const Scene& scene, const SynthOptions& opts = {}) {
  const double delta = opts.delta;
  const std::int64_t per = marks_per_unit(delta);
  const int dec = detail::value_decimals(delta);
  auto val = [&](std::int64_t marks) { return fmt::format("{:.{}f}", static_cast<double>(marks) * delta, dec); };
  detail::Wording words{Rng(derive_seed(item.scene_seed, fnv1a(item.id), 0x636861696eULL))};

  const AttributeSelector& tq = item.target;
  const AttributeSelector& rq = item.reference;

  // Every segment either quantity needs, without repeats.
  std::vector<detail::Segment> segs;
  auto add_segments = [&](const AttributeSelector& q) {
    for (const auto& s : detail::segments_of(scene, q)) {
      const bool seen = std::any_of(segs.begin(), segs.end(), [&](const detail::Segment& x) { return x.sel == s; });
      if (!seen) segs.push_back({s, selector_phrase(scene, s), resolve_attribute(scene, s), 0, {}});
    }
  };
  add_segments(tq);
  add_segments(rq);
  const std::size_t ruler = static_cast<std::size_t>(
      std::min_element(segs.begin(), segs.end(), [](const auto& a, const auto& b) { return a.px < b.px; }) -
      segs.begin());
  for (std::size_t i = 0; i < segs.size(); ++i) {
    auto& s = segs[i];
    s.marks = i == ruler ? per
                         : std::max<std::int64_t>(1, std::llround(s.px / segs[ruler].px / delta));
    s.value = val(s.marks);
  }
  auto seg_value = [&](const AttributeSelector& sel) -> const detail::Segment& {
    for (const auto& s : segs) {
      if (s.sel == sel) return s;
    }
    throw Error(Errc::invalid_scene, "segment missing from plan");
  };

  Chain c;
  c.item_id = item.id;
  c.delta = delta;
  const std::string tphr = selector_phrase(scene, tq);
  const std::string rphr = selector_phrase(scene, rq);
  const std::string full = full_group(delta);

  c.stage(Stage::review) = fmt::format(
      "The question takes the {1} as 1 unit and asks for the {0} in that unit. "
      "So I need both quantities, and the answer is the {0} divided by the {1}.",
      tphr, rphr);

  std::string hint = fmt::format(
      "Sizes in a picture are easiest to judge against a ruler, so I will fix one segment at 1.0 unit "
      "and write it as {}. The angle brackets are delimiters, and each = inside stands for {} units. "
      "Any other segment is then laid out as whole rulers plus a shorter remainder.",
      full, fmt_num(delta, dec + 1));
  if (item.subtask == Subtask::perimeter) {
    hint += " For perimeters: a polygon's is the sum of its edges, a circle's is 2 * 3.14 * radius, "
            "and the image's is 2 * (width + height).";
  } else if (item.subtask == Subtask::area) {
    hint += " For areas: a circle's is 3.14 * radius^2, a rectangle's is longer side * shorter side, "
            "a triangle's follows from its three sides by Heron's formula, and the image's is width * height.";
  }
  c.stage(Stage::hint) = hint;

  std::string needed;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    needed += (i == 0 ? "" : (i + 1 == segs.size() ? " and " : ", ")) + ("the " + segs[i].phrase);
  }
  c.stage(Stage::reference) = fmt::format(
      "The segments involved are {}. I take the {} as the ruler, since it is the shortest of them: "
      "its length is 1.0 unit, drawn as {}.",
      needed, segs[ruler].phrase, full);

  std::string est;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (i == ruler) continue;
    const auto& s = segs[i];
    const std::int64_t k = s.marks / per;
    const std::int64_t m = s.marks % per;
    if (!est.empty()) est += "\n";
    est += fmt::format(fmt::runtime(words.pick(detail::kBlockOpeners)), s.phrase) + "\n";
    for (std::int64_t j = 0; j < k; ++j) {
      est += fmt::format("Segment {}: {} (1.0 unit)\n", j + 1, full);
    }
    if (m > 0) {
      const auto residual = encode(static_cast<double>(m) * delta, delta).text;
      est += fmt::format("{}: {} ({} {})\n", k == 0 ? "Segment 1" : "Final segment", residual, val(m),
                         detail::units_word(static_cast<double>(m) * delta));
    }
    std::string sum;
    const std::int64_t terms = k + (m > 0 ? 1 : 0);
    if (terms <= 1) {
      sum = s.value;
    } else if (k > 4) {
      sum = fmt::format("1.0 * {}", k) + (m > 0 ? " + " + val(m) : "") + " = " + s.value;
    } else {
      for (std::int64_t j = 0; j < k; ++j) sum += (j ? " + " : "") + std::string("1.0");
      if (m > 0) sum += " + " + val(m);
      sum += " = " + s.value;
    }
    est += fmt::format("So the {} = {} {}.", s.phrase, sum, detail::units_word(static_cast<double>(s.marks) * delta));
  }
  c.stage(Stage::estimation) = est;

  // Calculation: each non-segment quantity from its formula, then the ratio.
  std::string calc;
  auto quantity = [&](const AttributeSelector& q) -> std::string {
    if (q.is_segment()) return seg_value(q).value;
    const auto parts = detail::segments_of(scene, q);
    const std::string phrase = selector_phrase(scene, q);
    const bool is_area = q.attr == Attribute::area;
    const char* unit = is_area ? "square units" : "units";
    std::string formula;
    double v = 0.0;
    auto sv = [&](std::size_t i) { return seg_value(parts[i]).value; };
    auto sd = [&](std::size_t i) { return std::stod(sv(i)); };
    std::optional<ShapeKind> kind;
    if (!q.of_image()) kind = find_shape(scene, *q.color).kind();
    if (!is_area) {
      if (q.of_image() || kind == ShapeKind::rectangle) {
        formula = fmt::format("2 * ({} + {})", sv(0), sv(1));
        v = 2.0 * (sd(0) + sd(1));
      } else if (kind == ShapeKind::circle) {
        formula = fmt::format("2 * 3.14 * {}", sv(0));
        v = 2.0 * 3.14 * sd(0);
      } else {
        for (std::size_t i = 0; i < parts.size(); ++i) {
          formula += (i ? " + " : "") + sv(i);
          v += sd(i);
        }
      }
      const std::string out = fmt_num(v);
      calc += fmt::format("The {} = {} = {} {}.\n", phrase, formula, out, unit);
      return out;
    }
    if (q.of_image() || kind == ShapeKind::rectangle) {
      formula = fmt::format("{} * {}", sv(0), sv(1));
      v = sd(0) * sd(1);
    } else if (kind == ShapeKind::circle) {
      formula = fmt::format("3.14 * {}^2", sv(0));
      v = 3.14 * sd(0) * sd(0);
    } else {
      const double s = (sd(0) + sd(1) + sd(2)) / 2.0;
      const std::string ss = fmt_num(s);
      calc += fmt::format("For the {}, half the perimeter is s = ({} + {} + {}) / 2 = {}.\n", phrase, sv(0),
                          sv(1), sv(2), ss);
      const double sp = std::stod(ss);
      const double prod = sp * (sp - sd(0)) * (sp - sd(1)) * (sp - sd(2));
      if (!(prod > 0.0)) {
        throw Error(Errc::incompatible_scene,
                    "estimated sides of " + phrase.substr(8) + " do not form a triangle");
      }
      formula = fmt::format("sqrt({0} * ({0} - {1}) * ({0} - {2}) * ({0} - {3}))", ss, sv(0), sv(1), sv(2));
      v = std::sqrt(prod);
    }
    const std::string out = fmt_num(v);
    calc += fmt::format("The {} = {} = {} {}.\n", phrase, formula, out, unit);
    return out;
  };
  const std::string T = quantity(tq);
  const std::string R = quantity(rq);
  const double q = std::stod(T) / std::stod(R);
  const std::string qs = fmt_num(q);
  c.answer_text = round_answer(std::stod(qs));
  c.answer = std::stod(c.answer_text);
  calc += fmt::format("Dividing the {} by the {}: {} / {} = {}, which rounds to {}.", tphr, rphr, T, R, qs,
                      c.answer_text);
  c.stage(Stage::calculation) = calc;

  c.present.fill(true);
  return c;
}

// ---------------------------------------------------------------------------
// Corruption

enum class CorruptMode { drop_mark, drop_segment, perturb_sum, swap_answer, strip_stage };
inline constexpr std::array<CorruptMode, 5> kAllCorruptModes = {
    CorruptMode::drop_mark, CorruptMode::drop_segment, CorruptMode::perturb_sum, CorruptMode::swap_answer,
    CorruptMode::strip_stage};

inline const char* corrupt_mode_name(CorruptMode m) {
  switch (m) {
    case CorruptMode::drop_mark: return "drop-mark";
    case CorruptMode::drop_segment: return "drop-segment";
    case CorruptMode::perturb_sum: return "perturb-sum";
    case CorruptMode::swap_answer: return "swap-answer";
    case CorruptMode::strip_stage: return "strip-stage";
  }
  return "?";
}

inline CorruptMode corrupt_mode_from_name(const std::string& s) {
  for (auto m : kAllCorruptModes) {
    if (s == corrupt_mode_name(m)) return m;
  }
  throw Error(Errc::invalid_config, "unknown corruption mode '" + s + "'");
}

inline Chain corrupt_chain(const Chain& chain, Rng& rng, CorruptMode mode) {
  Chain c = chain;
  auto inapplicable = [&](const std::string& why) {
    return Error(Errc::inapplicable, std::string(corrupt_mode_name(mode)) + ": " + why);
  };
  switch (mode) {
    case CorruptMode::drop_mark:
    case CorruptMode::drop_segment: {
      if (!c.has(Stage::estimation)) throw inapplicable("no estimation stage");
      auto& text = c.stage(Stage::estimation);
      auto groups = find_symbolic_groups(text);
      if (mode == CorruptMode::drop_segment) {
        const std::int64_t per = marks_per_unit(c.delta);
        std::erase_if(groups, [&](const SymbolicToken& g) { return g.marks != per; });
      }
      if (groups.empty()) throw inapplicable("no symbolic groups to alter");
      const auto& g = groups[rng.index(groups.size())];
      if (mode == CorruptMode::drop_mark) text.erase(g.offset + 1, 1);
      else text.erase(g.offset, g.text.size());
      return c;
    }
    case CorruptMode::perturb_sum: {
      if (!c.has(Stage::calculation)) throw inapplicable("no calculation stage");
      auto& text = c.stage(Stage::calculation);
      text = normalize_math(text);
      const auto claims = find_claims(text);
      if (claims.empty()) throw inapplicable("no arithmetic claims");
      const auto& cl = claims[rng.index(claims.size())];
      text.replace(cl.rhs_pos, cl.rhs.size(), fmt_num(cl.rhs_value * 1.1));
      return c;
    }
    case CorruptMode::swap_answer: {
      const double f = rng.uniform() < 0.5 ? rng.uniform(1.2, 2.0) : rng.uniform(0.3, 0.8);
      c.answer = std::stod(fmt_num(c.answer * f));
      c.answer_text = fmt_num(c.answer);
      return c;
    }
    case CorruptMode::strip_stage: {
      std::vector<std::size_t> present;
      for (std::size_t i = 0; i < 5; ++i) {
        if (c.present[i]) present.push_back(i);
      }
      if (present.empty()) throw inapplicable("no stage left to strip");
      const std::size_t i = present[rng.index(present.size())];
      c.present[i] = false;
      c.stages[i].clear();
      return c;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Records

inline std::string chain_prompt(const BenchItem& item) {
  return std::string(kSystemPrompt) + "\n\n" + item.question;
}

inline nlohmann::ordered_json chain_record(const Chain& c, const BenchItem& item) {
  nlohmann::ordered_json j;
  j["id"] = item.id;
  j["prompt"] = chain_prompt(item);
  j["chain"] = serialize_chain(c);
  j["answer"] = c.answer;
  j["delta"] = c.delta;
  return j;
}

}  // namespace pts
