#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "pts/bench.hpp"
#include "pts/chains.hpp"
#include "pts/evalkit.hpp"

using namespace pts;

namespace {

EvalRecord rec(Subtask s, double y, std::optional<double> y_hat, std::string id = "i") {
  return score(id, s, y, y_hat);
}

}  // namespace

TEST(Evalkit, ExtractAnswer) {
  EXPECT_DOUBLE_EQ(*extract_answer("<answer>2.96</answer>"), 2.96);
  EXPECT_DOUBLE_EQ(*extract_answer("so the answer is: \\boxed{26.67}"), 26.67);
  EXPECT_FALSE(extract_answer("no idea"));
  EXPECT_DOUBLE_EQ(*extract_answer("about 1,234.5 units"), 1234.5);
  EXPECT_DOUBLE_EQ(*extract_answer("step 1 gives 3, then 4.5"), 4.5);
  EXPECT_DOUBLE_EQ(*extract_answer("v2 is about 7"), 7.0);
  EXPECT_DOUBLE_EQ(*extract_answer("think 9 <answer> ~ 0.53 </answer> 10"), 0.53);
  EXPECT_DOUBLE_EQ(*extract_answer("<answer>none</answer> fallback 5"), 5.0);
  EXPECT_DOUBLE_EQ(*extract_answer("\\boxed{\\frac{1}{2}} then 8"), 1.0);
}

TEST(Evalkit, RelativeAccuracy) {
  EXPECT_DOUBLE_EQ(ra_avg(3.0, 3.0), 1.0);
  EXPECT_TRUE(ra_at(3.0, 3.0, 0.1));
  EXPECT_DOUBLE_EQ(ra_avg(1.25, 1.0), 0.6);
  EXPECT_DOUBLE_EQ(relative_error(11.0, 10.0), 0.1);
  EXPECT_FALSE(ra_at(11.0, 10.0, 0.1));
  EXPECT_TRUE(ra_at(11.0, 10.0, 0.2));
  EXPECT_THROW(relative_error(1.0, 0.0), Error);
  EXPECT_THROW(score("x", Subtask::length, -1.0, 1.0), Error);
}

TEST(EvalkitProperty, RaAvgIsStepFunction) {
  Rng rng(31);
  double prev_e = 0.0, prev = 1.0;
  std::vector<double> es;
  for (int i = 0; i < 10000; ++i) es.push_back(rng.uniform(0.0, 0.8));
  std::sort(es.begin(), es.end());
  for (double e : es) {
    const double v = ra_avg(1.0 + e, 1.0);
    const double scaled = v * 5.0;
    ASSERT_DOUBLE_EQ(scaled, std::round(scaled));
    ASSERT_LE(v, prev) << prev_e << " " << e;
    prev = v;
    prev_e = e;
  }
}

TEST(Evalkit, ReportCells) {
  std::vector<EvalRecord> all_right;
  for (auto s : kAllSubtasks) all_right.push_back(rec(s, 2.0, 2.0));
  const auto j = report_json(aggregate(all_right));
  for (auto s : kAllSubtasks) {
    EXPECT_EQ(j["subtasks"][subtask_name(s)]["RA_0.1"], 100.0);
    EXPECT_EQ(j["subtasks"][subtask_name(s)]["RA_avg"], 100.0);
  }
  EXPECT_EQ(j["average"]["RA_avg"], 100.0);

  std::vector<EvalRecord> mixed = {rec(Subtask::length, 2.0, 2.0), rec(Subtask::perimeter, 2.0, 9.0),
                                   rec(Subtask::area, 2.0, std::nullopt)};
  const auto rep = aggregate(mixed);
  EXPECT_EQ(report_json(rep)["average"]["RA_avg"], 33.3);
  EXPECT_EQ(rep.subtasks.at(Subtask::area).unparseable, 1u);
  EXPECT_EQ(rep.subtasks.at(Subtask::area).ra_avg, 0.0);
  EXPECT_THROW(aggregate({}), Error);
}

TEST(EvalkitProperty, Ra01NeverExceedsRaAvg) {
  Rng rng(32);
  std::vector<EvalRecord> recs;
  for (int i = 0; i < 10000; ++i) {
    const double y = rng.uniform(0.05, 100.0);
    std::optional<double> yh;
    if (rng.uniform() > 0.05) yh = y * std::exp(rng.normal() * 0.3);
    recs.push_back(rec(kAllSubtasks[rng.index(3)], y, yh));
    ASSERT_LE(recs.back().ra_01() ? 1.0 : 0.0, recs.back().ra_avg());
  }
  const auto rep = aggregate(recs);
  for (const auto& [s, c] : rep.subtasks) EXPECT_LE(c.ra_01, c.ra_avg);
  EXPECT_LE(rep.overall.ra_01, rep.overall.ra_avg);
}

TEST(Evalkit, ScoreResponses) {
  const Manifest m = build_benchmark(3);
  const auto dir = std::filesystem::temp_directory_path() / "pts_eval_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "r.jsonl");
    f << nlohmann::json{{"id", m.items[0].id}, {"raw", "<answer>0</answer>"}}.dump() << "\n";
    f << nlohmann::json{{"id", m.items[0].id}, {"raw", fmt::format("<answer>{}</answer>", m.items[0].answer)}}.dump()
      << "\n";
    f << nlohmann::json{{"id", m.items[1].id}, {"raw", "<answer>3</answer>"}, {"error", "HTTP 500"}}.dump() << "\n";
  }
  const auto recs = score_responses(m.items, read_responses(dir / "r.jsonl"));
  ASSERT_EQ(recs.size(), 300u);
  EXPECT_DOUBLE_EQ(recs[0].ra_avg(), 1.0);  // last row wins
  EXPECT_FALSE(recs[1].y_hat);              // errored row
  EXPECT_FALSE(recs[2].y_hat);              // missing row
  std::ofstream(dir / "bad.jsonl") << "{not json\n";
  EXPECT_THROW(read_responses(dir / "bad.jsonl"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Evalkit, TrendPerfectAndConstant) {
  std::vector<EvalRecord> perfect, constant;
  for (int i = 1; i <= 103; ++i) {
    perfect.push_back(rec(Subtask::length, i * 0.5, i * 0.5));
    constant.push_back(rec(Subtask::length, i * 0.5, 10.0));
  }
  for (const auto& b : error_trend(perfect, 10)) EXPECT_EQ(b.mean_rel_err, 0.0);
  const auto bins = error_trend(constant, 10);
  ASSERT_EQ(bins.size(), 10u);
  std::size_t total = 0;
  double prev_hi = 0.0;
  std::size_t at = 0;
  for (const auto& b : bins) {
    EXPECT_GT(b.lo, prev_hi);
    prev_hi = b.hi;
    EXPECT_EQ(b.n, at < 30 ? 11u : 10u);  // 103 = 3 * 11 + 7 * 10
    double sum = 0.0;
    for (std::size_t i = at; i < at + b.n; ++i) sum += std::abs(10.0 - (i + 1) * 0.5) / ((i + 1) * 0.5);
    EXPECT_NEAR(b.mean_rel_err, sum / b.n, 1e-12);
    at += b.n;
    total += b.n;
  }
  EXPECT_EQ(total, 103u);
  EXPECT_THROW(error_trend(perfect, 1), Error);
  EXPECT_THROW(error_trend(std::vector<EvalRecord>(perfect.begin(), perfect.begin() + 5), 10), Error);
  perfect.push_back(rec(Subtask::length, 1.0, std::nullopt));
  EXPECT_THROW(error_trend(perfect, 10), Error);
  EXPECT_EQ(trend_csv(bins).substr(0, 28), "bin_lo,bin_hi,n,mean_rel_err");
}

TEST(EvalkitProperty, MultiplicativeNoiseGivesFlatTrend) {
  Rng rng(33);
  std::vector<EvalRecord> recs;
  for (int i = 0; i < 10000; ++i) {
    const double y = std::exp(rng.uniform(std::log(0.05), std::log(100.0)));
    recs.push_back(rec(Subtask::length, y, y * (1.0 + rng.uniform(-0.2, 0.2))));
  }
  // E|eps| = 0.1; a bin of 1000 has standard error about 0.0018.
  for (const auto& b : error_trend(recs, 10)) EXPECT_NEAR(b.mean_rel_err, 0.1, 0.01);
}

TEST(Evalkit, PerceptionRatio) {
  const auto r = perception_ratio("the radius of the circle is 2.5 units");
  EXPECT_EQ(r.total, 8u);
  EXPECT_EQ(r.perceptual, 4u);
  EXPECT_DOUBLE_EQ(r.ratio, 0.5);
  EXPECT_DOUBLE_EQ(perception_ratio("<==========>").ratio, 1.0);
  EXPECT_DOUBLE_EQ(perception_ratio("so the answer is yes").ratio, 0.0);
  EXPECT_TRUE(perception_ratio("<answer></answer>").empty);
  // A unit word without a number nearby is not perceptual.
  EXPECT_EQ(perception_ratio("in units").perceptual, 0u);
}

TEST(Evalkit, LexiconAssetMatchesBuiltIn) {
  const auto b = read_file(std::filesystem::path(PTS_ASSETS) / "perception_lexicon_v1.txt");
  EXPECT_EQ(std::string(b.begin(), b.end()), std::string(kLexiconV1));
  const Lexicon lex = parse_lexicon(std::string(b.begin(), b.end()));
  EXPECT_EQ(lex.version, "1");
  EXPECT_EQ(lex.shape, default_lexicon().shape);
  EXPECT_THROW(parse_lexicon("circle\n"), Error);
  EXPECT_THROW(parse_lexicon("[colour]\nred\n"), Error);
}

TEST(Evalkit, ChainsBeatDirectAnswers) {
  const Manifest m = build_benchmark(8);
  for (std::size_t i = 0; i < 50; ++i) {
    const double chain = perception_ratio(serialize_chain(synthesize_chain(m.items[i], m.scenes[i]))).ratio;
    EXPECT_GT(chain, perception_ratio(direct_answer_text(m.items[i].answer)).ratio);
  }
}
