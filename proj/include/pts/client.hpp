#pragma once

// Batch client for OpenAI-compatible chat-completions endpoints. Failures
// become rows in the output file; the batch itself only aborts when the
// output cannot be written.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "pts/bench.hpp"
#include "pts/error.hpp"
#include "pts/hash.hpp"
#include "pts/prompt.hpp"
#include "pts/render.hpp"
#include "pts/rng.hpp"

namespace pts {

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000";  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model = "model";
  std::string token_env = "PTS_API_KEY";
  double timeout_s = 60.0;
  unsigned concurrency = 4;
  int max_retries = 3;
  double temperature = 0.0;
  int max_tokens = 2048;
  double backoff_base_s = 0.5;
  double backoff_max_s = 8.0;
  std::uint64_t seed = 0;  // jitter

  void check() const {
    if (concurrency < 1) throw Error(Errc::invalid_config, "concurrency must be >= 1");
    if (max_retries < 0) throw Error(Errc::invalid_config, "max retries must be >= 0");
    if (!(timeout_s > 0.0)) throw Error(Errc::invalid_config, "timeout must be > 0");
    if (base_url.empty()) throw Error(Errc::invalid_config, "base url is empty");
  }
};

struct ResponseRecord {
  std::string id;
  std::string model;
  std::string raw;
  std::int64_t latency_ms = 0;
  int attempt = 0;
  std::optional<std::string> error;
};

inline nlohmann::ordered_json response_json(const ResponseRecord& r) {
  nlohmann::ordered_json j;
  j["id"] = r.id;
  j["model"] = r.model;
  j["raw"] = r.raw;
  j["latency_ms"] = r.latency_ms;
  j["attempt"] = r.attempt;
  if (r.error) j["error"] = *r.error;
  return j;
}

// Request body; independent of credentials, so identical item + config
// gives identical bytes.
inline std::string build_payload(const EndpointConfig& cfg, const BenchItem& item,
                                 const std::vector<std::uint8_t>& png) {
  nlohmann::ordered_json image;
  image["type"] = "image_url";
  image["image_url"]["url"] =
      "data:image/png;base64," + base64_encode(std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
  nlohmann::ordered_json text;
  text["type"] = "text";
  text["text"] = item.question;

  nlohmann::ordered_json sys;
  sys["role"] = "system";
  sys["content"] = kSystemPrompt;
  nlohmann::ordered_json user;
  user["role"] = "user";
  user["content"] = nlohmann::ordered_json::array({image, text});

  nlohmann::ordered_json body;
  body["model"] = cfg.model;
  body["messages"] = nlohmann::ordered_json::array({sys, user});
  body["temperature"] = cfg.temperature;
  body["max_tokens"] = cfg.max_tokens;
  return body.dump();
}

inline bool retryable_status(int status) { return status == 429 || status >= 500; }

inline double backoff_seconds(const EndpointConfig& cfg, const std::string& id, int attempt) {
  const double base = std::min(cfg.backoff_max_s, cfg.backoff_base_s * std::pow(2.0, attempt - 1));
  Rng rng(derive_seed(cfg.seed, fnv1a(id), static_cast<std::uint64_t>(attempt)));
  return base * (0.5 + 0.5 * rng.uniform());
}

namespace detail {

inline std::optional<std::string> completion_text(const std::string& body) {
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    return std::nullopt;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

}  // namespace detail

// Sends one item. 4xx other than 429 fails at once; 5xx, 429 and transport
// errors are retried up to max_retries times with jittered exponential
// backoff.
inline ResponseRecord query(const EndpointConfig& cfg, const BenchItem& item,
                            const std::filesystem::path& manifest_dir) {
  cfg.check();
  ResponseRecord rec;
  rec.id = item.id;
  rec.model = cfg.model;
  std::vector<std::uint8_t> png;
  try {
    png = read_file(manifest_dir / item.image_path);
  } catch (const Error& e) {
    rec.error = e.detail();
    return rec;
  }
  const std::string body = build_payload(cfg, item, png);
  httplib::Headers headers;
  if (const char* tok = std::getenv(cfg.token_env.c_str()); tok != nullptr && *tok != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + tok);
  }
  const auto timeout = std::chrono::duration<double>(cfg.timeout_s);
  const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(timeout);

  for (int attempt = 1; attempt <= cfg.max_retries + 1; ++attempt) {
    rec.attempt = attempt;
    httplib::Client cli(cfg.base_url);
    cli.set_connection_timeout(timeout_us);
    cli.set_read_timeout(timeout_us);
    cli.set_write_timeout(timeout_us);
    cli.set_keep_alive(false);
    const auto t0 = std::chrono::steady_clock::now();
    auto res = cli.Post(cfg.path, headers, body, "application/json");
    rec.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();

    bool retry = false;
    if (!res) {
      rec.error = "transport error: " + httplib::to_string(res.error());
      retry = true;
    } else if (res->status >= 200 && res->status < 300) {
      if (auto text = detail::completion_text(res->body)) {
        rec.raw = std::move(*text);
        rec.error.reset();
        return rec;
      }
      rec.error = "response has no choices[0].message.content";
      return rec;
    } else {
      rec.error = fmt::format("HTTP {}", res->status);
      retry = retryable_status(res->status);
    }
    if (!retry) return rec;
    if (attempt <= cfg.max_retries) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff_seconds(cfg, item.id, attempt)));
    }
  }
  *rec.error += fmt::format(" (gave up after {} attempts)", rec.attempt);
  return rec;
}

struct BatchSummary {
  std::size_t total = 0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::size_t skipped = 0;
};

// Ids that already have a row in `path`. A torn final line is ignored.
inline std::set<std::string> existing_ids(const std::filesystem::path& path) {
  std::set<std::string> ids;
  std::ifstream f(path);
  std::string line;
  while (std::getline(f, line)) {
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("id") && j["id"].is_string()) ids.insert(j["id"].get<std::string>());
    } catch (const nlohmann::json::exception&) {
    }
  }
  return ids;
}

// Appends one row per item not already present in `out_path`.
inline BatchSummary run_batch(const std::vector<BenchItem>& items, const std::filesystem::path& manifest_dir,
                              const EndpointConfig& cfg, const std::filesystem::path& out_path) {
  cfg.check();
  if (out_path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(out_path.parent_path(), ec);
  }
  // Open for append before any request so an unwritable path aborts early.
  const bool existed = std::filesystem::exists(out_path);
  bool needs_newline = false;
  if (existed) {
    std::ifstream in(out_path, std::ios::binary | std::ios::ate);
    if (in && in.tellg() > 0) {
      in.seekg(-1, std::ios::end);
      needs_newline = in.get() != '\n';
    }
  }
  std::ofstream out(out_path, std::ios::app | std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot open '" + out_path.string() + "' for appending");
  if (needs_newline) out << '\n';

  std::set<std::string> done = existing_ids(out_path);
  BatchSummary sum;
  sum.total = items.size();
  std::vector<const BenchItem*> todo;
  for (const auto& item : items) {
    if (done.insert(item.id).second) todo.push_back(&item);
    else ++sum.skipped;
  }

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      const ResponseRecord rec = query(cfg, *todo[i], manifest_dir);
      const std::string line = response_json(rec).dump() + "\n";
      std::lock_guard<std::mutex> lock(mu);
      out << line;
      out.flush();
      if (rec.error) ++sum.failed;
      else ++sum.ok;
    }
  };
  const unsigned n = std::min<std::size_t>(cfg.concurrency, std::max<std::size_t>(1, todo.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (!out) throw Error(Errc::io, "write failed for '" + out_path.string() + "'");
  return sum;
}

}  // namespace pts
