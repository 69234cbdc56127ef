#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "pts/bench.hpp"

using namespace pts;

namespace {

Scene single_circle(int height, double r) {
  Scene s;
  s.width = 700;
  s.height = height;
  s.seed = 42;
  s.shapes.push_back({Circle{{300, 300}, r}, "red"});
  return s;
}

std::string read_text(const std::filesystem::path& p) {
  const auto b = read_file(p);
  return {b.begin(), b.end()};
}

std::string meta_hash(const Manifest& m) { return manifest_meta(m)["content_hash"].get<std::string>(); }

}  // namespace

TEST(Bench, LengthQuestionAgainstCircleRadius) {
  const Scene s = single_circle(840, 120);
  Rng rng(1);
  const BenchItem it = make_question(s, Subtask::length, 0, rng);
  EXPECT_EQ(it.question, "What is the height of the image if the radius of the red circle is 1 unit?");
  EXPECT_DOUBLE_EQ(it.answer, 7.0);
  EXPECT_DOUBLE_EQ(oracle_answer(s, it), 840.0 / 120.0);
}

TEST(Bench, SegmentOfOneHundredPixels) {
  Scene s = single_circle(840, 50);
  s.shapes[0].geometry = Rectangle{{300, 300}, 50, 80, 0.0};  // shorter side 100 px
  Rng rng(2);
  const BenchItem it = make_question(s, Subtask::length, 0, rng);
  if (it.reference == AttributeSelector::side_of("red", SideRank::shortest)) {
    EXPECT_DOUBLE_EQ(it.answer, 8.4);
  } else {
    EXPECT_DOUBLE_EQ(it.answer, 840.0 / 160.0);
  }
}

TEST(Bench, AreaAgainstCircle) {
  Scene s = single_circle(900, 80);
  s.shapes[0].color = "purple";
  Rng rng(3);
  const BenchItem it = make_question(s, Subtask::area, 0, rng);
  EXPECT_EQ(it.target, AttributeSelector::image_area());
  EXPECT_EQ(it.reference, AttributeSelector::area_of("purple"));
  EXPECT_DOUBLE_EQ(it.answer, (700.0 * 900.0) / (std::numbers::pi * 80.0 * 80.0));
}

TEST(Bench, IncompatibleSceneIsAnError) {
  const Scene s = single_circle(840, 2);  // every ratio above the cap
  Rng rng(4);
  try {
    make_question(s, Subtask::length, 0, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::incompatible_scene);
  }
  EXPECT_NO_THROW(make_question(s, Subtask::length, 0, rng, {0.05, 1000.0, false}));
}

TEST(Bench, BenchmarkCountsAndRanges) {
  const Manifest m = build_benchmark(7);
  ASSERT_EQ(m.items.size(), 300u);
  for (const auto& [name, n] : m.counts()) EXPECT_EQ(n, 100) << name;
  std::map<Subtask, std::set<int>> templates;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    const auto& it = m.items[i];
    const auto& sc = m.scenes[i];
    EXPECT_TRUE(validate_scene(sc).empty());
    EXPECT_GE(it.answer, 0.05);
    EXPECT_LE(it.answer, 100.0);
    EXPECT_EQ(seed_domain(it.scene_seed), SeedDomain::benchmark);
    EXPECT_DOUBLE_EQ(oracle_answer(sc, it), it.answer);
    templates[it.subtask].insert(it.template_id);
    ids.insert(it.id);
  }
  EXPECT_EQ(ids.size(), 300u);
  for (auto s : kAllSubtasks) EXPECT_EQ(templates[s].size(), 4u);
}

TEST(Bench, DeterministicHash) {
  EXPECT_EQ(meta_hash(build_benchmark(11)), meta_hash(build_benchmark(11)));
  EXPECT_NE(meta_hash(build_benchmark(11)), meta_hash(build_benchmark(12)));
  EXPECT_EQ(manifest_jsonl(build_benchmark(11, std::nullopt, 1)), manifest_jsonl(build_benchmark(11, std::nullopt, 3)));
}

TEST(Bench, OodUsesOnlyTrapezoidsAndPentagons) {
  const Manifest m = build_ood(7);
  EXPECT_EQ(m.items.size(), 200u);
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    EXPECT_NE(m.items[i].subtask, Subtask::area);
    for (const auto& sh : m.scenes[i].shapes) {
      EXPECT_TRUE(sh.kind() == ShapeKind::trapezoid || sh.kind() == ShapeKind::pentagon);
    }
  }
  EXPECT_EQ(meta_hash(build_ood(7)), meta_hash(m));
}

TEST(Bench, TrainingSplitLengthOnly) {
  const Manifest m = build_training_split(7, {Subtask::length}, 2000, false);
  ASSERT_EQ(m.items.size(), 2000u);
  for (const auto& it : m.items) EXPECT_EQ(it.subtask, Subtask::length);
}

TEST(Bench, NormalizedSplitStaysBelowOne) {
  const Manifest m = build_training_split(7, {kAllSubtasks.begin(), kAllSubtasks.end()}, 200, true);
  ASSERT_EQ(m.items.size(), 600u);
  double mx = 0.0;
  for (std::size_t i = 0; i < m.items.size(); ++i) {
    mx = std::max(mx, m.items[i].answer);
    EXPECT_DOUBLE_EQ(oracle_answer(m.scenes[i], m.items[i]), m.items[i].answer);
  }
  EXPECT_LT(mx, 1.0);
}

TEST(Bench, TrainingSeedsDisjointFromBenchmark) {
  std::set<std::uint64_t> bench;
  for (const auto& it : build_benchmark(7).items) bench.insert(it.scene_seed);
  for (const auto& it : build_ood(7).items) bench.insert(it.scene_seed);
  for (const auto& it : build_training_split(7, {kAllSubtasks.begin(), kAllSubtasks.end()}, 500, false).items) {
    EXPECT_EQ(bench.count(it.scene_seed), 0u);
    EXPECT_EQ(seed_domain(it.scene_seed), SeedDomain::train);
  }
}

TEST(Bench, WrittenManifestRoundTrips) {
  const auto dir = std::filesystem::temp_directory_path() / "pts_bench_test";
  std::filesystem::remove_all(dir);
  BuildConfig cfg = benchmark_config(5);
  cfg.per_subtask = 4;
  cfg.out_dir = dir;
  const Manifest m = build_manifest(cfg);
  const auto items = read_manifest(dir / "manifest.jsonl");
  ASSERT_EQ(items.size(), 12u);
  for (std::size_t i = 0; i < items.size(); ++i) {
    EXPECT_EQ(item_to_json(items[i]).dump(), item_to_json(m.items[i]).dump());
    EXPECT_TRUE(std::filesystem::exists(dir / items[i].image_path));
    const Scene sc = load_scene_for(dir, items[i]);
    const double y = oracle_answer(sc, items[i]);
    EXPECT_LE(std::abs(y - items[i].answer), 1e-12 * items[i].answer);
  }
  const auto meta = nlohmann::json::parse(read_text(dir / "manifest.meta.json"));
  EXPECT_EQ(meta["items"], 12);
  std::filesystem::remove_all(dir);
}

TEST(Bench, ItemJsonFieldOrder) {
  const Manifest m = build_benchmark(1);
  const auto j = item_to_json(m.items.front());
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"id", "subtask", "image", "question", "answer", "reference", "target",
                                            "scene_seed", "template_id"}));
}

TEST(Bench, UnknownSubtaskName) { EXPECT_THROW(subtask_from_name("volume"), Error); }
