#pragma once

// A desk-sized GRPO loop. The "policy" is a Gaussian over the log of the
// estimate, z ~ N(mu, sigma), o = exp(z); everything in the clipped
// surrogate, including the KL penalty, is available in closed form.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "pts/error.hpp"
#include "pts/reward.hpp"
#include "pts/rng.hpp"

namespace pts {

inline constexpr double kSigmaMin = 1e-4;
inline constexpr double kSigmaMax = 10.0;

struct PolicyParams {
  double mu = 0.0;
  double log_sigma = 0.0;

  double sigma() const { return std::clamp(std::exp(log_sigma), kSigmaMin, kSigmaMax); }
  // d sigma / d log_sigma is zero once the clamp is active.
  bool sigma_clamped() const {
    const double s = std::exp(log_sigma);
    return s < kSigmaMin || s > kSigmaMax;
  }
};

inline double log_density(const PolicyParams& p, double z) {
  const double s = p.sigma();
  const double u = (z - p.mu) / s;
  return -std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * u * u;
}

// KL(N(mu, sigma) || N(mu_r, sigma_r))
inline double gaussian_kl(const PolicyParams& p, const PolicyParams& ref) {
  const double s = p.sigma(), sr = ref.sigma();
  const double dm = p.mu - ref.mu;
  return std::log(sr / s) + (s * s + dm * dm) / (2.0 * sr * sr) - 0.5;
}

struct Group {
  std::vector<double> z;
  std::vector<double> o;
  std::vector<double> logp_old;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

inline Group sample_group(const PolicyParams& theta, std::size_t n, Rng& rng) {
  Group g;
  const double s = theta.sigma();
  for (std::size_t i = 0; i < n; ++i) {
    const double z = theta.mu + s * rng.normal();
    g.z.push_back(z);
    g.o.push_back(std::exp(z));
    g.logp_old.push_back(log_density(theta, z));
  }
  return g;
}

struct SurrogateConfig {
  double clip_eps = 0.2;
  double beta = 0.01;
};

inline void check_group(const Group& g) {
  if (g.z.empty() || g.z.size() != g.logp_old.size() || g.z.size() != g.advantages.size()) {
    throw Error(Errc::domain, "group needs matching samples, old log-densities and advantages");
  }
}

inline double surrogate(const PolicyParams& theta, const PolicyParams& ref, const Group& g,
                        const SurrogateConfig& cfg) {
  check_group(g);
  double sum = 0.0;
  for (std::size_t i = 0; i < g.z.size(); ++i) {
    const double ratio = std::exp(log_density(theta, g.z[i]) - g.logp_old[i]);
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    sum += std::min(ratio * g.advantages[i], clipped * g.advantages[i]);
  }
  return sum / static_cast<double>(g.z.size()) - cfg.beta * gaussian_kl(theta, ref);
}

struct Gradient {
  double d_mu = 0.0;
  double d_log_sigma = 0.0;
};

inline Gradient surrogate_gradient(const PolicyParams& theta, const PolicyParams& ref, const Group& g,
                                   const SurrogateConfig& cfg) {
  check_group(g);
  const double s = theta.sigma();
  const double live = theta.sigma_clamped() ? 0.0 : 1.0;
  Gradient grad;
  for (std::size_t i = 0; i < g.z.size(); ++i) {
    const double ratio = std::exp(log_density(theta, g.z[i]) - g.logp_old[i]);
    const double a = g.advantages[i];
    const double clipped = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    if (ratio * a > clipped * a) continue;  // the clipped branch is flat in theta
    const double u = (g.z[i] - theta.mu) / s;
    grad.d_mu += a * ratio * u / s;
    grad.d_log_sigma += a * ratio * (u * u - 1.0) * live;
  }
  const double n = static_cast<double>(g.z.size());
  grad.d_mu /= n;
  grad.d_log_sigma /= n;
  const double sr = ref.sigma();
  grad.d_mu -= cfg.beta * (theta.mu - ref.mu) / (sr * sr);
  grad.d_log_sigma -= cfg.beta * (s * s / (sr * sr) - 1.0) * live;
  return grad;
}

// ---------------------------------------------------------------------------
// Training

enum class Schedule { fixed, mixed, normalized_first };

inline const char* schedule_name(Schedule s) {
  switch (s) {
    case Schedule::fixed: return "fixed";
    case Schedule::mixed: return "mixed";
    case Schedule::normalized_first: return "normalized-first";
  }
  return "?";
}

struct SimConfig {
  std::size_t group_size = 8;
  SurrogateConfig surrogate;
  double learning_rate = 0.05;
  double grad_clip = 1.0;  // max gradient norm per step; 0 disables
  std::size_t steps = 2000;
  std::uint64_t seed = 0;
  PolicyParams init{std::log(3.0), std::log(0.5)};  // also the reference policy
  RewardConfig reward;
  Schedule schedule = Schedule::fixed;
  double target = 1.0;  // fixed schedule
  // Curriculum target ranges (log-uniform) and absolute readout noise.
  double normalized_lo = 0.05, normalized_hi = 1.0;
  double mixed_lo = 0.05, mixed_hi = 20.0;
  double readout_noise = 0.02;

  void check() const {
    if (group_size < 2) throw Error(Errc::invalid_config, "group size must be >= 2");
    if (!(surrogate.clip_eps > 0.0 && surrogate.clip_eps < 1.0)) throw Error(Errc::invalid_config, "clip eps must be in (0, 1)");
    if (!(surrogate.beta >= 0.0)) throw Error(Errc::invalid_config, "beta must be >= 0");
    if (!(learning_rate > 0.0)) throw Error(Errc::invalid_config, "learning rate must be > 0");
    if (!(target > 0.0)) throw Error(Errc::invalid_config, "target must be > 0");
    if (!(readout_noise >= 0.0)) throw Error(Errc::invalid_config, "readout noise must be >= 0");
    if (!(normalized_lo > 0.0 && normalized_lo < normalized_hi && normalized_hi <= 1.0)) {
      throw Error(Errc::invalid_config, "normalized targets must lie in (0, 1]");
    }
    if (!(mixed_lo > 0.0 && mixed_lo < mixed_hi)) throw Error(Errc::invalid_config, "bad mixed target range");
    check_reward_config(reward);
  }
};

struct TrajectoryRow {
  std::size_t step = 0;
  double target = 0.0;
  double mean_reward = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  double kl = 0.0;
};

namespace detail {

inline double log_uniform(Rng& rng, double lo, double hi) {
  return std::exp(rng.uniform(std::log(lo), std::log(hi)));
}

}  // namespace detail

// Targets drawn per step. Normalized-first spends the first half of the
// budget on targets below 1.
inline double draw_target(const SimConfig& cfg, std::size_t step, Rng& rng) {
  switch (cfg.schedule) {
    case Schedule::fixed: return cfg.target;
    case Schedule::mixed: return detail::log_uniform(rng, cfg.mixed_lo, cfg.mixed_hi);
    case Schedule::normalized_first:
      if (step < cfg.steps / 2) {
        double t;
        do {
          t = detail::log_uniform(rng, cfg.normalized_lo, cfg.normalized_hi);
        } while (!(t < 1.0));
        return t;
      }
      return detail::log_uniform(rng, cfg.mixed_lo, cfg.mixed_hi);
  }
  return cfg.target;
}

// One sample -> advantage -> ascent step per iteration, theta_old refreshed
// every step. Under the fixed schedule the estimate is exp(z); under the
// curricula it is target * exp(z) plus Gaussian readout noise.
inline std::vector<TrajectoryRow> train(const SimConfig& cfg) {
  cfg.check();
  Rng rng(splitmix64(cfg.seed ^ 0x6772706fULL));
  const PolicyParams ref = cfg.init;
  PolicyParams theta = cfg.init;
  std::vector<TrajectoryRow> rows;
  rows.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const double d_t = draw_target(cfg, step, rng);
    const PolicyParams old = theta;
    Group g = sample_group(old, cfg.group_size, rng);
    double mean_r = 0.0;
    for (std::size_t i = 0; i < g.z.size(); ++i) {
      double o = g.o[i];
      if (cfg.schedule != Schedule::fixed) o = d_t * o + cfg.readout_noise * rng.normal();
      // Simulated completions are always well formatted.
      const double r = cfg.reward.lambda * accuracy_reward(o, d_t, cfg.reward.alpha) + (1.0 - cfg.reward.lambda);
      g.rewards.push_back(r);
      mean_r += r;
    }
    mean_r /= static_cast<double>(g.z.size());
    g.advantages = group_advantages(g.rewards, cfg.reward).advantages;
    rows.push_back({step, d_t, mean_r, theta.mu, theta.sigma(), gaussian_kl(theta, ref)});

    Gradient grad = surrogate_gradient(theta, ref, g, cfg.surrogate);
    const double norm = std::hypot(grad.d_mu, grad.d_log_sigma);
    if (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) {
      grad.d_mu *= cfg.grad_clip / norm;
      grad.d_log_sigma *= cfg.grad_clip / norm;
    }
    theta.mu += cfg.learning_rate * grad.d_mu;
    theta.log_sigma += cfg.learning_rate * grad.d_log_sigma;
    theta.log_sigma = std::clamp(theta.log_sigma, std::log(kSigmaMin), std::log(kSigmaMax));
    if (!std::isfinite(theta.mu) || !std::isfinite(theta.log_sigma)) {
      throw Error(Errc::divergence, fmt::format("parameters became non-finite at step {}", step));
    }
  }
  return rows;
}

inline std::string trajectory_csv(const std::vector<TrajectoryRow>& rows) {
  std::string out = "step,mean_reward,mu,sigma,kl\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.step, r.mean_reward, r.mu, r.sigma, r.kl);
  }
  return out;
}

inline std::vector<double> moving_average(const std::vector<double>& v, std::size_t window) {
  std::vector<double> out;
  if (window == 0 || v.size() < window) return out;
  double sum = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    sum += v[i];
    if (i >= window) sum -= v[i - window];
    if (i + 1 >= window) out.push_back(sum / static_cast<double>(window));
  }
  return out;
}

struct CurriculumConfig {
  SimConfig base;  // schedule is overridden
  double threshold = 0.8;
  std::size_t window = 50;
};

struct ScheduleResult {
  Schedule schedule;
  std::vector<TrajectoryRow> rows;
  std::optional<std::size_t> steps_to_threshold;
  double final_mean_reward = 0.0;  // mean over the last window
};

struct CurriculumReport {
  std::vector<ScheduleResult> results;
};

// Runs both schedules from the same seed and step budget. Purely
// observational: which one gets to the threshold first is reported, not
// asserted.
inline CurriculumReport curriculum_compare(const CurriculumConfig& cc) {
  CurriculumReport rep;
  for (auto s : {Schedule::normalized_first, Schedule::mixed}) {
    SimConfig cfg = cc.base;
    cfg.schedule = s;
    ScheduleResult r{s, train(cfg), std::nullopt, 0.0};
    std::vector<double> rewards;
    for (const auto& row : r.rows) rewards.push_back(row.mean_reward);
    const auto ma = moving_average(rewards, cc.window);
    for (std::size_t i = 0; i < ma.size(); ++i) {
      if (ma[i] >= cc.threshold) {
        r.steps_to_threshold = i + cc.window;  // steps consumed when first reached
        break;
      }
    }
    if (!ma.empty()) r.final_mean_reward = ma.back();
    rep.results.push_back(std::move(r));
  }
  return rep;
}

inline std::string curriculum_csv(const CurriculumReport& rep) {
  std::string out = "step,schedule,target,mean_reward,mu,sigma,kl\n";
  for (const auto& r : rep.results) {
    for (const auto& row : r.rows) {
      out += fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", row.step, schedule_name(r.schedule),
                         row.target, row.mean_reward, row.mu, row.sigma, row.kl);
    }
  }
  return out;
}

}  // namespace pts
