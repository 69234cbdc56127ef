// pts: command-line front end for benchmark generation, chain synthesis,
// evaluation and the reward simulations.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pts/bench.hpp"
#include "pts/chains.hpp"
#include "pts/client.hpp"
#include "pts/evalkit.hpp"
#include "pts/grposim.hpp"
#include "pts/parallel.hpp"
#include "pts/reward.hpp"
#include "pts/version.hpp"

namespace fs = std::filesystem;
using namespace pts;

namespace {

struct Common {
  std::uint64_t seed = 0;
  unsigned jobs = default_jobs();
  std::string config;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "Global seed")->capture_default_str();
  sub->add_option("--jobs", c.jobs, "Maximum worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  sub->add_option("--config", c.config,
                  "Flat key=value file; keys are flag names without dashes, flags given on the "
                  "command line take precedence");
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file(p, text.data(), text.size());
}

std::vector<Subtask> parse_tasks(const std::string& list) {
  std::vector<Subtask> out;
  std::stringstream ss(list);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    const Subtask s = subtask_from_name(tok);
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  if (out.empty()) throw Error(Errc::invalid_config, "--tasks selects no subtask");
  return out;
}

fs::path manifest_dir_of(const std::string& manifest) {
  const fs::path p(manifest);
  return p.has_parent_path() ? p.parent_path() : fs::path(".");
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::io, "cannot open '" + path + "'");
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::io, fmt::format("{}:{}: {}", path, n, e.what()));
    }
  }
  return out;
}

std::string meta_summary(const Manifest& m) { return manifest_meta(m).dump(2) + "\n"; }

// Rewrites "sub ... --config f ..." into "sub <args from f> ...", so values
// from the file come first and explicit flags (taking the last value) win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  std::string file;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) file = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) file = args[i].substr(9);
  }
  if (file.empty() || args.empty()) return args;
  std::ifstream f(file);
  if (!f) throw Error(Errc::io, "cannot open config '" + file + "'");
  std::vector<std::string> injected;
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(Errc::invalid_config, fmt::format("{}:{}: expected key = value", file, n));
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config") continue;
    injected.push_back("--" + key + "=" + value);
  }
  // args[0] is the subcommand name.
  out.push_back(args[0]);
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

void print_header(CLI::App* sub) {
  std::string cfg = sub->config_to_str(true, false);
  std::cerr << "pts " << kToolkitVersion << " " << sub->get_name() << "\n" << cfg;
  if (!cfg.empty() && cfg.back() != '\n') std::cerr << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual-estimation benchmark and perception-chain toolkit", "pts"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolkitVersion));

  std::map<CLI::App*, std::function<void()>> actions;

  // gen-bench / gen-ood ------------------------------------------------------
  struct GenOpts {
    Common c;
    std::string out;
  };
  GenOpts bench_o, ood_o;
  for (auto* pair : {&bench_o, &ood_o}) {
    const bool ood = pair == &ood_o;
    auto* sub = app.add_subcommand(ood ? "gen-ood" : "gen-bench",
                                   ood ? "Build the out-of-distribution variant (trapezoids and pentagons)"
                                       : "Build the 300-item benchmark with rendered images");
    add_common(sub, pair->c);
    sub->add_option("--out", pair->out, "Output directory")->required();
    actions[sub] = [pair, ood] {
      BuildConfig cfg = ood ? ood_config(pair->c.seed) : benchmark_config(pair->c.seed);
      cfg.out_dir = pair->out;
      cfg.jobs = pair->c.jobs;
      std::cout << meta_summary(build_manifest(cfg));
    };
  }

  // gen-train ----------------------------------------------------------------
  Common train_c;
  std::string train_out, train_tasks = "length,perimeter,area";
  std::size_t train_n = 2000;
  bool train_norm = false, train_render = false;
  {
    auto* sub = app.add_subcommand("gen-train", "Build a training split with fresh scene seeds");
    add_common(sub, train_c);
    sub->add_option("--out", train_out, "Output directory")->required();
    sub->add_option("--tasks", train_tasks, "Comma-separated subtasks")->capture_default_str();
    sub->add_option("--n", train_n, "Items per subtask")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_flag("--normalized", train_norm, "Keep only answers below 1 (reference and target swapped as needed)");
    sub->add_flag("--render", train_render, "Also render PNG images");
    actions[sub] = [&] {
      BuildConfig cfg = training_config(train_c.seed, parse_tasks(train_tasks), train_n, train_norm);
      cfg.out_dir = train_out;
      cfg.render = train_render;
      cfg.jobs = train_c.jobs;
      std::cout << meta_summary(build_manifest(cfg));
    };
  }

  // synth-chains -------------------------------------------------------------
  Common synth_c;
  std::string synth_manifest, synth_out;
  double synth_delta = 0.1;
  {
    auto* sub = app.add_subcommand("synth-chains", "Write five-stage reasoning chains for a manifest");
    add_common(sub, synth_c);
    sub->add_option("--manifest", synth_manifest, "manifest.jsonl (scene files are read next to it)")->required();
    sub->add_option("--delta", synth_delta, "Units per '=' mark")->capture_default_str();
    sub->add_option("--out", synth_out, "Output chains JSONL ('-' for stdout)")->required();
    actions[sub] = [&] {
      const auto items = read_manifest(synth_manifest);
      const auto dir = manifest_dir_of(synth_manifest);
      std::vector<std::string> lines(items.size());
      parallel_for(items.size(), synth_c.jobs, [&](std::size_t i) {
        const Scene scene = load_scene_for(dir, items[i]);
        const Chain c = synthesize_chain(items[i], scene, {synth_delta});
        lines[i] = chain_record(c, items[i]).dump() + "\n";
      });
      std::string text;
      for (const auto& l : lines) text += l;
      write_text(synth_out, text);
      std::cerr << fmt::format("wrote {} chains\n", items.size());
    };
  }

  // validate-chains ----------------------------------------------------------
  Common val_c;
  std::string val_manifest, val_chains, val_out;
  bool val_strict = false;
  {
    auto* sub = app.add_subcommand("validate-chains", "Check chains for stage, segment, arithmetic and answer consistency");
    add_common(sub, val_c);
    sub->add_option("--manifest", val_manifest, "manifest.jsonl")->required();
    sub->add_option("--chains", val_chains, "Chains JSONL with id and chain fields")->required();
    sub->add_option("--out", val_out, "Per-chain report JSONL ('-' for stdout)");
    sub->add_flag("--strict", val_strict, "Exit with status 1 if any chain is invalid");
    actions[sub] = [&] {
      const auto items = read_manifest(val_manifest);
      std::map<std::string, const BenchItem*> by_id;
      for (const auto& it : items) by_id[it.id] = &it;
      const auto rows = read_jsonl(val_chains);
      std::string text;
      std::size_t valid = 0;
      for (const auto& row : rows) {
        const std::string id = row.at("id").get<std::string>();
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(Errc::io, "chain id " + id + " is not in the manifest");
        std::optional<double> delta;
        if (row.contains("delta")) delta = row["delta"].get<double>();
        const auto rep = validate_chain_text(row.at("chain").get<std::string>(), *it->second, delta);
        valid += rep.valid() ? 1 : 0;
        nlohmann::ordered_json j;
        j["id"] = id;
        j["valid"] = rep.valid();
        j["parse_ok"] = rep.parse_ok;
        nlohmann::ordered_json stages;
        for (auto s : kAllStages) stages[stage_name(s)] = rep.stage_presence[static_cast<std::size_t>(s)];
        j["stages"] = stages;
        j["estimation_consistent"] = rep.estimation_consistent;
        j["arithmetic_consistent"] = rep.arithmetic_consistent;
        j["answer_consistent"] = rep.answer_consistent;
        j["diagnostics"] = rep.diagnostics;
        text += j.dump() + "\n";
      }
      if (!val_out.empty()) write_text(val_out, text);
      nlohmann::ordered_json s;
      s["chains"] = rows.size();
      s["valid"] = valid;
      s["invalid"] = rows.size() - valid;
      std::cout << s.dump() << "\n";
      if (val_strict && valid != rows.size()) {
        throw Error(Errc::chain_parse, fmt::format("{} invalid chain(s)", rows.size() - valid));
      }
    };
  }

  // eval / trend -------------------------------------------------------------
  Common eval_c;
  std::string eval_manifest, eval_responses, eval_out;
  {
    auto* sub = app.add_subcommand("eval", "Score responses: RA_0.1 and RA_avg per subtask and averaged");
    add_common(sub, eval_c);
    sub->add_option("--manifest", eval_manifest, "manifest.jsonl")->required();
    sub->add_option("--responses", eval_responses, "Responses JSONL {id, model, raw}")->required();
    sub->add_option("--out", eval_out, "Report JSON ('-' for stdout)");
    actions[sub] = [&] {
      const auto recs = score_responses(read_manifest(eval_manifest), read_responses(eval_responses));
      write_text(eval_out, report_json(aggregate(recs)).dump(2) + "\n");
    };
  }
  Common trend_c;
  std::string trend_manifest, trend_responses, trend_out, trend_subtask = "length";
  std::size_t trend_bins = 10;
  {
    auto* sub = app.add_subcommand("trend", "Mean relative error over equal-count bins of the ground truth");
    add_common(sub, trend_c);
    sub->add_option("--manifest", trend_manifest, "manifest.jsonl")->required();
    sub->add_option("--responses", trend_responses, "Responses JSONL")->required();
    sub->add_option("--subtask", trend_subtask, "Subtask to analyse, or 'all'")->capture_default_str();
    sub->add_option("--bins", trend_bins, "Number of bins")->capture_default_str();
    sub->add_option("--out", trend_out, "CSV output ('-' for stdout)");
    actions[sub] = [&] {
      auto recs = score_responses(read_manifest(trend_manifest), read_responses(trend_responses));
      const std::size_t before = recs.size();
      std::erase_if(recs, [&](const EvalRecord& r) {
        return !r.y_hat || (trend_subtask != "all" && subtask_name(r.subtask) != trend_subtask);
      });
      if (trend_subtask != "all") subtask_from_name(trend_subtask);
      std::cerr << fmt::format("{} of {} records used\n", recs.size(), before);
      write_text(trend_out, trend_csv(error_trend(recs, trend_bins)));
    };
  }

  // perception-ratio ---------------------------------------------------------
  Common pr_c;
  std::string pr_input, pr_text, pr_lexicon, pr_field, pr_out;
  {
    auto* sub = app.add_subcommand("perception-ratio", "Fraction of perception tokens in texts");
    add_common(sub, pr_c);
    auto* in = sub->add_option("--input", pr_input, "JSONL file; the text is read from --field");
    auto* tx = sub->add_option("--text", pr_text, "A single text");
    in->excludes(tx);
    sub->add_option("--field", pr_field, "JSONL field holding the text (default: chain, else raw)");
    sub->add_option("--lexicon", pr_lexicon, "Lexicon file replacing the built-in v1 list");
    sub->add_option("--out", pr_out, "JSONL output ('-' for stdout)");
    actions[sub] = [&] {
      Lexicon lex = default_lexicon();
      if (!pr_lexicon.empty()) {
        const auto bytes = read_file(pr_lexicon);
        lex = parse_lexicon(std::string(bytes.begin(), bytes.end()));
      }
      std::vector<std::pair<std::string, std::string>> texts;
      if (!pr_input.empty()) {
        std::size_t n = 0;
        for (const auto& row : read_jsonl(pr_input)) {
          std::string field = pr_field;
          if (field.empty()) field = row.contains("chain") ? "chain" : "raw";
          if (!row.contains(field)) throw Error(Errc::io, "row without field '" + field + "'");
          texts.emplace_back(row.value("id", std::to_string(n)), row[field].get<std::string>());
          ++n;
        }
      } else if (!pr_text.empty()) {
        texts.emplace_back("text", pr_text);
      } else {
        throw Error(Errc::invalid_config, "one of --input or --text is required");
      }
      std::string out;
      double sum = 0.0;
      for (const auto& [id, t] : texts) {
        const auto r = perception_ratio(t, lex);
        sum += r.ratio;
        nlohmann::ordered_json j;
        j["id"] = id;
        j["ratio"] = r.ratio;
        j["perceptual"] = r.perceptual;
        j["tokens"] = r.total;
        if (r.empty) j["empty"] = true;
        out += j.dump() + "\n";
      }
      write_text(pr_out, out);
      std::cerr << fmt::format("mean ratio {:.6f} over {} text(s)\n", texts.empty() ? 0.0 : sum / texts.size(),
                               texts.size());
    };
  }

  // reward-curve -------------------------------------------------------------
  Common rc_c;
  std::vector<double> rc_alphas = {1.0, 3.0, 5.0};
  double rc_max = 1.0;
  std::size_t rc_points = 101;
  std::string rc_out;
  {
    auto* sub = app.add_subcommand("reward-curve", "Exponential reward against relative error, with the linear baseline");
    add_common(sub, rc_c);
    sub->add_option("--alphas", rc_alphas, "Sensitivities")->delimiter(',')->capture_default_str()
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    sub->add_option("--max-e", rc_max, "Largest relative error")->capture_default_str();
    sub->add_option("--points", rc_points, "Grid points")->capture_default_str();
    sub->add_option("--out", rc_out, "CSV output ('-' for stdout)");
    actions[sub] = [&] { write_text(rc_out, reward_curve_csv(reward_curve(rc_alphas, uniform_grid(0.0, rc_max, rc_points)))); };
  }

  // grpo-sim / curriculum-compare -------------------------------------------
  struct SimOpts {
    Common c;
    SimConfig cfg;
    double mu0 = std::log(3.0);
    double sigma0 = 0.5;
    std::string out;
  };
  auto add_sim = [](CLI::App* sub, SimOpts& o) {
    add_common(sub, o.c);
    sub->add_option("--steps", o.cfg.steps, "Optimization steps")->capture_default_str();
    sub->add_option("--group-size", o.cfg.group_size, "Completions per group")->capture_default_str();
    sub->add_option("--lr", o.cfg.learning_rate, "Learning rate")->capture_default_str();
    sub->add_option("--grad-clip", o.cfg.grad_clip, "Gradient norm cap (0 = off)")->capture_default_str();
    sub->add_option("--clip-eps", o.cfg.surrogate.clip_eps, "Ratio clip epsilon")->capture_default_str();
    sub->add_option("--beta", o.cfg.surrogate.beta, "KL weight")->capture_default_str();
    sub->add_option("--alpha", o.cfg.reward.alpha, "Reward sensitivity")->capture_default_str();
    sub->add_option("--lambda", o.cfg.reward.lambda, "Accuracy weight in the composite reward")->capture_default_str();
    sub->add_option("--mu0", o.mu0, "Initial mean of log-estimate (also the reference)")->capture_default_str();
    sub->add_option("--sigma0", o.sigma0, "Initial sigma (also the reference)")->capture_default_str();
    sub->add_option("--out", o.out, "CSV output ('-' for stdout)");
  };
  SimOpts sim_o;
  {
    auto* sub = app.add_subcommand("grpo-sim", "Train the toy Gaussian policy against one target");
    add_sim(sub, sim_o);
    sub->add_option("--target", sim_o.cfg.target, "Target value")->capture_default_str();
    actions[sub] = [&] {
      SimConfig cfg = sim_o.cfg;
      cfg.seed = sim_o.c.seed;
      cfg.init = {sim_o.mu0, std::log(sim_o.sigma0)};
      const auto rows = train(cfg);
      write_text(sim_o.out, trajectory_csv(rows));
      const auto& last = rows.back();
      std::cerr << fmt::format("final estimate {:.6f} (target {}), mean reward {:.4f}\n", std::exp(last.mu),
                               cfg.target, last.mean_reward);
    };
  }
  SimOpts cur_o;
  double cur_threshold = 0.8;
  std::size_t cur_window = 50;
  {
    auto* sub = app.add_subcommand("curriculum-compare", "Normalized-first versus mixed targets on matched seeds");
    add_sim(sub, cur_o);
    sub->add_option("--noise", cur_o.cfg.readout_noise, "Absolute readout noise")->capture_default_str();
    sub->add_option("--threshold", cur_threshold, "Moving-average reward threshold")->capture_default_str();
    sub->add_option("--window", cur_window, "Moving-average window")->capture_default_str();
    actions[sub] = [&] {
      CurriculumConfig cc;
      cc.base = cur_o.cfg;
      cc.base.seed = cur_o.c.seed;
      cc.base.init = {cur_o.mu0, std::log(cur_o.sigma0)};
      cc.threshold = cur_threshold;
      cc.window = cur_window;
      const auto rep = curriculum_compare(cc);
      write_text(cur_o.out, curriculum_csv(rep));
      nlohmann::ordered_json j = nlohmann::ordered_json::array();
      for (const auto& r : rep.results) {
        nlohmann::ordered_json e;
        e["schedule"] = schedule_name(r.schedule);
        e["steps"] = r.rows.size();
        e["steps_to_threshold"] = r.steps_to_threshold ? nlohmann::ordered_json(*r.steps_to_threshold) : nlohmann::ordered_json(nullptr);
        e["final_mean_reward"] = r.final_mean_reward;
        j.push_back(e);
      }
      std::cerr << j.dump() << "\n";
    };
  }

  // query-model --------------------------------------------------------------
  Common q_c;
  EndpointConfig q_cfg;
  std::string q_manifest, q_out;
  {
    auto* sub = app.add_subcommand("query-model", "Send every manifest item to a chat-completions endpoint");
    add_common(sub, q_c);
    sub->add_option("--manifest", q_manifest, "manifest.jsonl")->required();
    sub->add_option("--out", q_out, "Responses JSONL (appended; existing ids are skipped)")->required();
    sub->add_option("--base-url", q_cfg.base_url, "scheme://host[:port]")->capture_default_str();
    sub->add_option("--path", q_cfg.path, "Request path")->capture_default_str();
    sub->add_option("--model", q_cfg.model, "Model name")->required();
    sub->add_option("--token-env", q_cfg.token_env, "Environment variable holding the bearer token")->capture_default_str();
    sub->add_option("--timeout", q_cfg.timeout_s, "Per-request timeout in seconds")->capture_default_str();
    sub->add_option("--concurrency", q_cfg.concurrency, "Maximum requests in flight")->capture_default_str();
    sub->add_option("--retries", q_cfg.max_retries, "Retries for 5xx, 429 and timeouts")->capture_default_str();
    sub->add_option("--temperature", q_cfg.temperature, "Sampling temperature")->capture_default_str();
    sub->add_option("--max-tokens", q_cfg.max_tokens, "Completion token limit")->capture_default_str();
    actions[sub] = [&] {
      q_cfg.seed = q_c.seed;
      const auto s = run_batch(read_manifest(q_manifest), manifest_dir_of(q_manifest), q_cfg, q_out);
      nlohmann::ordered_json j;
      j["total"] = s.total;
      j["ok"] = s.ok;
      j["failed"] = s.failed;
      j["skipped"] = s.skipped;
      std::cout << j.dump() << "\n";
    };
  }

  std::vector<std::string> args;
  for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
  try {
    std::vector<std::string> fwd(args.rbegin(), args.rend());
    fwd = expand_config(fwd);
    args.assign(fwd.rbegin(), fwd.rend());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const Error& e) {
    std::cerr << nlohmann::json{{"error", std::string(errc_name(e.code()))}, {"message", e.detail()}}.dump() << "\n";
    return 1;
  }

  for (auto& [sub, action] : actions) {
    if (!sub->parsed()) continue;
    print_header(sub);
    try {
      action();
    } catch (const Error& e) {
      std::cerr << nlohmann::json{{"error", std::string(errc_name(e.code()))}, {"message", e.detail()}}.dump() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
      return 1;
    }
    return 0;
  }
  return 2;
}
