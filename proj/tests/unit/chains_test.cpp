#include <gtest/gtest.h>

#include "pts/bench.hpp"
#include "pts/chains.hpp"
#include "pts/render.hpp"
#include "pts/reward.hpp"

using namespace pts;

namespace {

std::string fixture(const std::string& name) {
  const auto b = read_file(std::filesystem::path(PTS_FIXTURES) / name);
  return {b.begin(), b.end()};
}

const Manifest& bench() {
  static const Manifest m = build_benchmark(2024);
  return m;
}

std::string parse_error(const std::string& text) {
  try {
    parse_chain(text);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::chain_parse);
    return e.detail();
  }
  return "";
}

// Triangle whose shortest side is 400 px on a 760 px tall canvas.
Scene triangle_scene() {
  Scene s;
  s.width = 900;
  s.height = 760;
  s.shapes.push_back({Triangle{{Vec2{100, 100}, Vec2{500, 100}, Vec2{300, 600}}}, "red"});
  return s;
}

// Independent estimate of the chain answer: every segment a quantity needs is
// measured in units of the shortest such segment and rounded to 0.1.
double quantized_oracle(const Scene& scene, const BenchItem& item) {
  auto segs = [&](const AttributeSelector& q) -> std::vector<double> {
    if (q.is_segment()) return {resolve_attribute(scene, q)};
    if (q.of_image()) return {double(scene.width), double(scene.height)};
    const Shape& sh = find_shape(scene, *q.color);
    if (const auto* c = std::get_if<Circle>(&sh.geometry)) return {c->radius};
    if (const auto* r = std::get_if<Rectangle>(&sh.geometry)) return {2 * r->half_w, 2 * r->half_h};
    return side_lengths(sh);
  };
  const auto t = segs(item.target), r = segs(item.reference);
  double ruler = 1e300;
  for (double v : t) ruler = std::min(ruler, v);
  for (double v : r) ruler = std::min(ruler, v);
  auto est = [&](double px) { return std::max(1.0, std::round(px / ruler * 10.0)) / 10.0; };
  auto value = [&](const AttributeSelector& q, const std::vector<double>& px) {
    if (q.is_segment()) return est(px[0]);
    const bool is_area = q.attr == Attribute::area;
    std::optional<ShapeKind> kind;
    if (!q.of_image()) kind = find_shape(scene, *q.color).kind();
    if (kind == ShapeKind::circle) return is_area ? 3.14 * est(px[0]) * est(px[0]) : 2 * 3.14 * est(px[0]);
    if (px.size() == 2) return is_area ? est(px[0]) * est(px[1]) : 2 * (est(px[0]) + est(px[1]));
    if (is_area) {
      const double a = est(px[0]), b = est(px[1]), c = est(px[2]);
      const double s = (a + b + c) / 2;
      return std::sqrt(s * (s - a) * (s - b) * (s - c));
    }
    double sum = 0.0;
    for (double v : px) sum += est(v);
    return sum;
  };
  return value(item.target, t) / value(item.reference, r);
}

}  // namespace

TEST(Chains, LengthCaseFromScene) {
  const Scene s = triangle_scene();
  BenchItem it;
  it.id = "x";
  it.subtask = Subtask::length;
  it.target = AttributeSelector::side_of("red", SideRank::shortest);
  it.reference = AttributeSelector::image_height();
  it.answer = oracle_answer(s, it);
  const Chain c = synthesize_chain(it, s);
  const std::string est = c.stage(Stage::estimation);
  EXPECT_NE(est.find("<==========> (1.0 unit)"), std::string::npos) << est;
  EXPECT_NE(est.find("<=========> (0.9 units)"), std::string::npos) << est;
  EXPECT_LT(est.find("<==========>"), est.find("<=========> "));
  EXPECT_NE(est.find("1.0 + 0.9 = 1.9 units"), std::string::npos) << est;
  EXPECT_NE(c.stage(Stage::calculation).find("1.0 / 1.9 = 0.5263"), std::string::npos);
  EXPECT_EQ(c.answer_text, "0.53");
  EXPECT_TRUE(validate_chain(c, it).valid());
}

TEST(Chains, PerimeterCaseFromScene) {
  Scene s;
  s.width = 900;
  s.height = 800;
  s.shapes.push_back({Rectangle{{300, 300}, 80, 50, 0.0}, "blue"});
  BenchItem it;
  it.subtask = Subtask::perimeter;
  it.target = AttributeSelector::image_perimeter();
  it.reference = AttributeSelector::perimeter_of("blue");
  const Chain c = synthesize_chain(it, s);
  EXPECT_NE(c.stage(Stage::calculation).find("2 * (1.6 + 1.0) = 5.2 units"), std::string::npos)
      << c.stage(Stage::calculation);
  EXPECT_TRUE(validate_chain(c, it).valid());
}

TEST(Chains, SerializedFormHasStagesInOrder) {
  const auto& m = bench();
  const Chain c = synthesize_chain(m.items[0], m.scenes[0]);
  const std::string t = serialize_chain(c);
  EXPECT_EQ(t.rfind("<think>", 0), 0u);
  std::size_t last = 0;
  for (auto s : kAllStages) {
    const auto p = t.find(std::string("<") + stage_name(s) + ">");
    ASSERT_NE(p, std::string::npos);
    EXPECT_GT(p, last);
    last = p;
  }
  EXPECT_LT(last, t.find("</think>"));
  EXPECT_EQ(t.substr(t.size() - 9), "</answer>");
  EXPECT_EQ(format_reward(t), 1);
}

TEST(Chains, RoundTripThroughText) {
  const auto& m = bench();
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    const Chain c = synthesize_chain(m.items[i], m.scenes[i]);
    const Chain p = parse_chain(serialize_chain(c));
    for (auto s : kAllStages) ASSERT_TRUE(p.has(s)) << m.items[i].id << " " << stage_name(s);
    ASSERT_EQ(p.stages, c.stages);
    ASSERT_DOUBLE_EQ(p.answer, c.answer);
    ASSERT_DOUBLE_EQ(p.delta, 0.1);
    const auto rep = validate_chain(p, m.items[i]);
    ASSERT_TRUE(rep.valid()) << m.items[i].id << ": " << (rep.diagnostics.empty() ? "" : rep.diagnostics[0]);
  }
}

TEST(Chains, AnswerMatchesQuantizedOracle) {
  const auto& m = bench();
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    const Chain c = synthesize_chain(m.items[i], m.scenes[i]);
    const double oracle = quantized_oracle(m.scenes[i], m.items[i]);
    ASSERT_NEAR(c.answer, oracle, 0.01 * oracle) << m.items[i].id;
  }
}

TEST(Chains, SynthesisIsDeterministic) {
  const auto& m = bench();
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(serialize_chain(synthesize_chain(m.items[i], m.scenes[i])),
              serialize_chain(synthesize_chain(m.items[i], m.scenes[i])));
  }
}

TEST(Chains, FinerGranularity) {
  const auto& m = bench();
  for (std::size_t i = 0; i < 60; ++i) {
    const Chain c = synthesize_chain(m.items[i], m.scenes[i], {0.05});
    EXPECT_NE(c.stage(Stage::reference).find(full_group(0.05)), std::string::npos);
    const Chain p = parse_chain(serialize_chain(c));
    EXPECT_DOUBLE_EQ(p.delta, 0.05);
    EXPECT_TRUE(validate_chain(p, m.items[i]).valid()) << m.items[i].id;
  }
}

TEST(Chains, ParseFailuresNameTheTag) {
  EXPECT_EQ(parse_error("no tags"), "missing-think-open");
  EXPECT_EQ(parse_error("<think>x"), "missing-think-close");
  EXPECT_EQ(parse_error("<think>x</think>"), "missing-answer-open");
  EXPECT_EQ(parse_error("<think>x</think><answer>3"), "missing-answer-close");
  EXPECT_EQ(parse_error("<think>x</think><answer>three</answer>"), "answer-not-numeric");
}

TEST(Chains, UntaggedAreaFixture) {
  const Chain c = parse_chain(fixture("area_untagged.txt"));
  EXPECT_FALSE(c.tagged);
  for (auto s : kAllStages) EXPECT_TRUE(c.has(s)) << stage_name(s);
  const auto scan = scan_estimation(c.stage(Stage::estimation), c.delta);
  ASSERT_EQ(scan.blocks.size(), 2u);
  EXPECT_DOUBLE_EQ(scan.blocks[0].decoded, 12.5);
  EXPECT_DOUBLE_EQ(scan.blocks[0].stated, 12.5);
  EXPECT_DOUBLE_EQ(scan.blocks[1].decoded, 15.2);
  const auto rep = validate_chain(c, BenchItem{});
  EXPECT_TRUE(rep.valid());
  bool saw_product = false, saw_quotient = false;
  for (const auto& cl : rep.claims) {
    if (cl.lhs == "12.5 * 15.2") {
      saw_product = true;
      EXPECT_TRUE(cl.holds);
      EXPECT_DOUBLE_EQ(cl.lhs_value, 190.0);
    }
    if (cl.lhs == "190.0 / 3.14") {
      saw_quotient = true;
      EXPECT_TRUE(cl.holds);
      EXPECT_EQ(cl.relation, '~');
    }
  }
  EXPECT_TRUE(saw_product);
  EXPECT_TRUE(saw_quotient);
}

TEST(Chains, TaggedAndUntaggedFixturesAgree) {
  const Chain a = parse_chain(fixture("area_tagged.txt"));
  const Chain b = parse_chain(fixture("area_untagged.txt"));
  EXPECT_TRUE(a.tagged);
  for (auto s : kAllStages) EXPECT_EQ(a.stage(s), b.stage(s)) << stage_name(s);
}

TEST(Chains, OtherFixturesValidate) {
  for (const char* f : {"length_untagged.txt", "perimeter_untagged.txt", "area_tagged.txt"}) {
    const auto rep = validate_chain_text(fixture(f), BenchItem{});
    EXPECT_TRUE(rep.valid()) << f << ": " << (rep.diagnostics.empty() ? "" : rep.diagnostics[0]);
  }
  const Chain p = parse_chain(fixture("perimeter_untagged.txt"));
  EXPECT_DOUBLE_EQ(p.answer, 2.96);
}

TEST(Chains, QuotientWithinTolerance) {
  // 190 / 3.14 = 60.5096..., stated as 60.7.
  const double exact = 190.0 / 3.14;
  EXPECT_NEAR(exact, 60.5096, 1e-4);
  EXPECT_TRUE(within_relative(60.7, exact, kArithmeticTolerance));
  EXPECT_FALSE(within_relative(60.7, exact, 0.003));
  const auto claims = find_claims("Their ratio is 190.0 / 3.14 $\\approx$ 60.7.");
  ASSERT_EQ(claims.size(), 1u);
  EXPECT_TRUE(claims[0].holds);
  EXPECT_FALSE(find_claims("so 190.0 / 3.14 = 62.0")[0].holds);
}

TEST(Chains, ClaimExtraction) {
  auto c = find_claims("the side is 2 * (1.6 + 1.0) = 5.2 units, and 3.14 * 1.0^2 = 3.14 too");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0].lhs, "2 * (1.6 + 1.0)");
  EXPECT_DOUBLE_EQ(c[0].rhs_value, 5.2);
  EXPECT_EQ(c[1].lhs, "3.14 * 1.0^2");
  c = find_claims("s = (1.0 + 2.0 + 2.5) / 2 = 2.75");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_TRUE(c[0].holds);
  c = find_claims("sqrt(2.75 * 1.75 * 0.75 * 0.25) = 0.95");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_TRUE(c[0].holds);
  EXPECT_TRUE(find_claims("the answer is 5 = five").empty());
  EXPECT_EQ(find_claims("15.4 / 5.2 \xE2\x89\x88 2.96")[0].relation, '~');
  EXPECT_TRUE(find_claims("6 \xC3\x97 7 = 42")[0].holds);
}

TEST(Chains, DroppedMarkIsCaught) {
  std::string t = fixture("area_tagged.txt");
  const auto p = t.find("Last piece: <=====>");
  ASSERT_NE(p, std::string::npos);
  t.erase(p + 13, 1);
  const auto rep = validate_chain_text(t, BenchItem{});
  EXPECT_FALSE(rep.estimation_consistent);
  EXPECT_TRUE(rep.arithmetic_consistent);
}

TEST(Chains, UnsupportedTotalIsAProblem) {
  const auto scan = scan_estimation("The side is about = 2.0 units.", 0.1);
  EXPECT_FALSE(scan.problems.empty());
  const auto dangling = scan_estimation("<==========> <==> and nothing else", 0.1);
  EXPECT_FALSE(dangling.problems.empty());
}

TEST(Chains, CorruptionsAreRejected) {
  const auto& m = bench();
  Rng rng(99);
  for (auto mode : kAllCorruptModes) {
    int applied = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      const Chain c = synthesize_chain(m.items[i], m.scenes[i]);
      const Chain bad = corrupt_chain(c, rng, mode);
      ++applied;
      const auto direct = validate_chain(bad, m.items[i]);
      const auto via_text = validate_chain_text(serialize_chain(bad), m.items[i], bad.delta);
      ASSERT_FALSE(direct.valid()) << corrupt_mode_name(mode) << " " << m.items[i].id;
      ASSERT_FALSE(via_text.valid()) << corrupt_mode_name(mode) << " " << m.items[i].id;
      if (mode == CorruptMode::drop_mark) {
        ASSERT_FALSE(direct.estimation_consistent);
      }
      if (mode == CorruptMode::swap_answer) {
        ASSERT_FALSE(direct.answer_consistent);
      }
      if (mode == CorruptMode::perturb_sum) {
        ASSERT_FALSE(direct.arithmetic_consistent);
      }
    }
    EXPECT_EQ(applied, 100);
  }
}

TEST(Chains, InapplicableCorruption) {
  Chain c;
  Rng rng(1);
  try {
    corrupt_chain(c, rng, CorruptMode::strip_stage);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::inapplicable);
  }
  EXPECT_THROW(corrupt_chain(c, rng, CorruptMode::drop_mark), Error);
  EXPECT_THROW(corrupt_mode_from_name("shuffle"), Error);
  EXPECT_EQ(corrupt_mode_from_name("drop-mark"), CorruptMode::drop_mark);
}

TEST(Chains, Expressions) {
  int ops = 0;
  EXPECT_DOUBLE_EQ(*evaluate_expression("2 * (1.6 + 1.0)", &ops), 5.2);
  EXPECT_EQ(ops, 2);
  EXPECT_DOUBLE_EQ(*evaluate_expression("2^3^2"), 512.0);
  EXPECT_DOUBLE_EQ(*evaluate_expression("-3 + 5"), 2.0);
  EXPECT_FALSE(evaluate_expression("1 / 0"));
  EXPECT_FALSE(evaluate_expression("sqrt(-1)"));
  EXPECT_FALSE(evaluate_expression("(1 + 2"));
  EXPECT_FALSE(evaluate_expression("1..2"));
}

TEST(Chains, AnswerRounding) {
  EXPECT_EQ(round_answer(0.5263), "0.53");
  EXPECT_EQ(round_answer(60.5096), "60.51");
  EXPECT_EQ(round_answer(0.054), "0.054");
  EXPECT_EQ(fmt_num(2.0), "2.0");
  EXPECT_EQ(fmt_num(0.52631), "0.5263");
}

TEST(Chains, RecordFields) {
  const auto& m = bench();
  const auto j = chain_record(synthesize_chain(m.items[0], m.scenes[0]), m.items[0]);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"id", "prompt", "chain", "answer", "delta"}));
  EXPECT_NE(j["prompt"].get<std::string>().find(m.items[0].question), std::string::npos);
}
