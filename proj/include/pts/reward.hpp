#pragma once

// Verifiable reward kernels: exponential relative-error reward, format
// reward, their blend, and group-normalized advantages.

#include <cmath>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "pts/error.hpp"

namespace pts {

struct RewardConfig {
  double alpha = 3.0;
  double lambda = 0.9;
  double std_epsilon = 1e-8;
};

inline void check_reward_config(const RewardConfig& c) {
  if (!(c.alpha > 0.0)) throw Error(Errc::invalid_config, "alpha must be > 0");
  if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) throw Error(Errc::invalid_config, "lambda must be in [0, 1]");
  if (!(c.std_epsilon >= 0.0)) throw Error(Errc::invalid_config, "std_epsilon must be >= 0");
}

// r = exp(-alpha * |o - d| / d)
inline double accuracy_reward(double o, double d_t, double alpha = 3.0) {
  if (!(d_t > 0.0)) throw Error(Errc::domain, "target must be positive");
  return std::exp(-alpha * std::abs(o - d_t) / d_t);
}

inline double linear_reward(double rel_error) { return std::max(0.0, 1.0 - rel_error); }

// 1 iff the text is <think>...</think> then <answer>NUMBER</answer>, with
// only whitespace around and between the two blocks.
inline int format_reward(std::string_view raw) {
  static const std::regex kFormat(
      R"(^\s*<think>[\s\S]*</think>\s*<answer>\s*-?(\d+(\.\d*)?|\.\d+)\s*</answer>\s*$)");
  const std::string s(raw);
  if (!std::regex_match(s, kFormat)) return 0;
  // A second think or answer block is not the expected shape.
  auto count = [&](std::string_view tag) {
    std::size_t n = 0;
    for (std::size_t p = s.find(tag); p != std::string::npos; p = s.find(tag, p + 1)) ++n;
    return n;
  };
  return count("<think>") == 1 && count("</think>") == 1 && count("<answer>") == 1 ? 1 : 0;
}

// lambda * r_acc + (1 - lambda) * r_format; a missing estimate earns no
// accuracy reward.
inline double composite_reward(std::optional<double> o, std::string_view raw, double d_t,
                               const RewardConfig& cfg = {}) {
  check_reward_config(cfg);
  const double acc = o ? accuracy_reward(*o, d_t, cfg.alpha) : 0.0;
  return cfg.lambda * acc + (1.0 - cfg.lambda) * format_reward(raw);
}

struct RewardGroup {
  std::vector<double> rewards;
  std::vector<double> advantages;
  double mean = 0.0;
  double std = 0.0;  // population
  bool degenerate = false;
};

inline RewardGroup group_advantages(const std::vector<double>& rewards, const RewardConfig& cfg = {}) {
  if (rewards.size() < 2) throw Error(Errc::domain, "a reward group needs at least 2 members");
  RewardGroup g;
  g.rewards = rewards;
  const double n = static_cast<double>(rewards.size());
  for (double r : rewards) g.mean += r;
  g.mean /= n;
  double ss = 0.0;
  for (double r : rewards) ss += (r - g.mean) * (r - g.mean);
  g.std = std::sqrt(ss / n);
  g.advantages.assign(rewards.size(), 0.0);
  if (!(g.std > cfg.std_epsilon)) {
    g.degenerate = true;
    return g;
  }
  for (std::size_t i = 0; i < rewards.size(); ++i) g.advantages[i] = (rewards[i] - g.mean) / g.std;
  return g;
}

struct RewardCurve {
  std::vector<double> alphas;
  std::vector<double> errors;
  std::vector<std::vector<double>> exp_rows;  // [error][alpha]
  std::vector<double> linear;
};

inline RewardCurve reward_curve(const std::vector<double>& alphas, const std::vector<double>& errors) {
  if (alphas.empty() || errors.empty()) throw Error(Errc::domain, "reward_curve needs alphas and errors");
  RewardCurve c{alphas, errors, {}, {}};
  for (double e : errors) {
    if (!(e >= 0.0)) throw Error(Errc::domain, "relative errors must be >= 0");
    std::vector<double> row;
    for (double a : alphas) {
      if (!(a > 0.0)) throw Error(Errc::domain, "alpha must be > 0");
      row.push_back(std::exp(-a * e));
    }
    c.exp_rows.push_back(std::move(row));
    c.linear.push_back(linear_reward(e));
  }
  return c;
}

inline std::vector<double> uniform_grid(double lo, double hi, std::size_t n) {
  if (n < 2) throw Error(Errc::domain, "grid needs at least 2 points");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

inline std::string reward_curve_csv(const RewardCurve& c) {
  std::string out = "e,linear";
  for (double a : c.alphas) out += fmt::format(",alpha_{}", a);
  out += "\n";
  for (std::size_t i = 0; i < c.errors.size(); ++i) {
    out += fmt::format("{:.17g},{:.17g}", c.errors[i], c.linear[i]);
    for (double v : c.exp_rows[i]) out += fmt::format(",{:.17g}", v);
    out += "\n";
  }
  return out;
}

}  // namespace pts
