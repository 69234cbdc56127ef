#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pts/hash.hpp"

namespace fs = std::filesystem;

namespace {

struct CliRun {
  int rc = -1;
  std::string out;
};

// Runs the CLI with stderr discarded; returns exit status and stdout.
CliRun run(const std::string& args) {
  const std::string cmd = std::string("'") + PTS_CLI + "' " + args + " 2>/dev/null";
  CliRun r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (p == nullptr) return r;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int st = ::pclose(p);
  r.rc = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

fs::path tmp(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("pts_cli_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Cli, HelpForEverySubcommand) {
  EXPECT_EQ(run("--help").rc, 0);
  EXPECT_EQ(run("--version").rc, 0);
  for (const char* sub : {"gen-bench", "gen-ood", "gen-train", "synth-chains", "validate-chains", "eval", "trend",
                          "perception-ratio", "reward-curve", "grpo-sim", "curriculum-compare", "query-model"}) {
    const CliRun r = run(std::string(sub) + " --help");
    EXPECT_EQ(r.rc, 0) << sub;
    EXPECT_NE(r.out.find("--seed"), std::string::npos) << sub;
  }
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("").rc, 2);
  EXPECT_EQ(run("no-such-command").rc, 2);
  EXPECT_EQ(run("reward-curve --bogus 1").rc, 2);
  EXPECT_EQ(run("gen-bench").rc, 2);  // --out missing
  EXPECT_EQ(run("grpo-sim --steps notanumber").rc, 2);
}

TEST(Cli, OperationalErrorsExitOne) {
  EXPECT_EQ(run("eval --manifest /nonexistent/manifest.jsonl --responses /nonexistent/r.jsonl").rc, 1);
  EXPECT_EQ(run("grpo-sim --group-size 1 --steps 3").rc, 1);
  EXPECT_EQ(run("trend --manifest /nonexistent/m.jsonl --responses /nonexistent/r.jsonl").rc, 1);
}

TEST(Cli, GenBenchIsReproducible) {
  const auto a = tmp("bench_a"), b = tmp("bench_b");
  ASSERT_EQ(run("gen-bench --seed 7 --out '" + a.string() + "'").rc, 0);
  ASSERT_EQ(run("gen-bench --seed 7 --jobs 2 --out '" + b.string() + "'").rc, 0);
  const std::string ma = slurp(a / "manifest.jsonl");
  EXPECT_EQ(count_lines(ma), 300u);
  EXPECT_EQ(pts::sha256_hex(ma), pts::sha256_hex(slurp(b / "manifest.jsonl")));
  const auto meta = nlohmann::json::parse(slurp(a / "manifest.meta.json"));
  EXPECT_EQ(meta["content_hash"], "sha256:" + pts::sha256_hex(ma));

  const auto first = nlohmann::json::parse(ma.substr(0, ma.find('\n')));
  EXPECT_TRUE(fs::exists(a / first["image"].get<std::string>()));

  // Full pipeline on the generated manifest.
  const auto chains = a / "chains.jsonl";
  ASSERT_EQ(run("synth-chains --manifest '" + (a / "manifest.jsonl").string() + "' --out '" + chains.string() + "'").rc,
            0);
  const CliRun v = run("validate-chains --strict --manifest '" + (a / "manifest.jsonl").string() + "' --chains '" +
                    chains.string() + "'");
  ASSERT_EQ(v.rc, 0);
  const auto summary = nlohmann::json::parse(v.out);
  EXPECT_EQ(summary["valid"], 300);

  // Chains as responses: every answer sits inside <answer> tags.
  const auto responses = a / "responses.jsonl";
  {
    std::istringstream in(slurp(chains));
    std::ofstream out(responses);
    std::string line;
    while (std::getline(in, line)) {
      const auto j = nlohmann::json::parse(line);
      out << nlohmann::json{{"id", j["id"]}, {"model", "chains"}, {"raw", j["chain"]}}.dump() << "\n";
    }
  }
  const CliRun e = run("eval --manifest '" + (a / "manifest.jsonl").string() + "' --responses '" + responses.string() + "'");
  ASSERT_EQ(e.rc, 0);
  const auto rep = nlohmann::json::parse(e.out);
  for (const char* s : {"length", "perimeter", "area"}) {
    ASSERT_TRUE(rep["subtasks"].contains(s));
    EXPECT_EQ(rep["subtasks"][s]["n"], 100);
    EXPECT_EQ(rep["subtasks"][s]["unparseable"], 0);
    EXPECT_GT(rep["subtasks"][s]["RA_avg"].get<double>(), 80.0);
  }
  EXPECT_TRUE(rep["average"].contains("RA_0.1"));

  const CliRun t = run("trend --bins 5 --manifest '" + (a / "manifest.jsonl").string() + "' --responses '" +
                    responses.string() + "'");
  ASSERT_EQ(t.rc, 0);
  EXPECT_EQ(count_lines(t.out), 6u);

  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Cli, GenTrainLengthOnly) {
  const auto d = tmp("train");
  ASSERT_EQ(run("gen-train --seed 1 --tasks length --n 2000 --out '" + d.string() + "'").rc, 0);
  const std::string m = slurp(d / "manifest.jsonl");
  EXPECT_EQ(count_lines(m), 2000u);
  std::istringstream in(m);
  std::string line;
  while (std::getline(in, line)) ASSERT_EQ(nlohmann::json::parse(line)["subtask"], "length");
  EXPECT_FALSE(fs::exists(d / "images"));
  fs::remove_all(d);
}

TEST(Cli, ValidateStrictFailsOnBadChain) {
  const auto d = tmp("strict");
  ASSERT_EQ(run("gen-bench --seed 2 --out '" + d.string() + "'").rc, 0);
  const std::string m = slurp(d / "manifest.jsonl");
  const auto first = nlohmann::json::parse(m.substr(0, m.find('\n')));
  {
    std::ofstream f(d / "bad.jsonl");
    f << nlohmann::json{{"id", first["id"]}, {"chain", "<think>nothing here</think><answer>1</answer>"}}.dump() << "\n";
  }
  const std::string args =
      "--manifest '" + (d / "manifest.jsonl").string() + "' --chains '" + (d / "bad.jsonl").string() + "'";
  EXPECT_EQ(run("validate-chains " + args).rc, 0);
  EXPECT_EQ(run("validate-chains --strict " + args).rc, 1);
  fs::remove_all(d);
}

TEST(Cli, RewardCurveCsv) {
  const CliRun r = run("reward-curve --alphas 1,3 --points 11 --max-e 1");
  ASSERT_EQ(r.rc, 0);
  EXPECT_EQ(count_lines(r.out), 12u);
  EXPECT_EQ(r.out.rfind("e,", 0), 0u);
}

TEST(Cli, ConfigFileAndPrecedence) {
  const auto d = tmp("config");
  fs::create_directories(d);
  {
    std::ofstream f(d / "sim.cfg");
    f << "# toy run\nsteps = 7\ngroup_size=4\n";
  }
  const CliRun a = run("grpo-sim --config '" + (d / "sim.cfg").string() + "'");
  ASSERT_EQ(a.rc, 0);
  EXPECT_EQ(count_lines(a.out), 8u);  // header + 7 steps
  const CliRun b = run("grpo-sim --config '" + (d / "sim.cfg").string() + "' --steps 3");
  ASSERT_EQ(b.rc, 0);
  EXPECT_EQ(count_lines(b.out), 4u);
  {
    std::ofstream f(d / "bad.cfg");
    f << "no_such_key = 1\n";
  }
  EXPECT_EQ(run("grpo-sim --config '" + (d / "bad.cfg").string() + "'").rc, 2);
  fs::remove_all(d);
}

TEST(Cli, PerceptionRatioText) {
  const CliRun r = run("perception-ratio --text 'the segment is about 3 units'");
  ASSERT_EQ(r.rc, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_TRUE(j.contains("ratio"));
  EXPECT_EQ(run("perception-ratio").rc, 1);
}
