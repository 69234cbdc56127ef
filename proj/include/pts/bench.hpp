#pragma once

// Question templating and benchmark assembly. Every answer is a ratio
// target / reference taken from the geometry oracle on the stored scene.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "pts/error.hpp"
#include "pts/geometry.hpp"
#include "pts/hash.hpp"
#include "pts/parallel.hpp"
#include "pts/render.hpp"
#include "pts/rng.hpp"
#include "pts/scenegen.hpp"
#include "pts/version.hpp"

namespace pts {

enum class Subtask { length, perimeter, area };

inline constexpr std::array<Subtask, 3> kAllSubtasks = {Subtask::length, Subtask::perimeter,
                                                        Subtask::area};

inline const char* subtask_name(Subtask s) {
  switch (s) {
    case Subtask::length: return "length";
    case Subtask::perimeter: return "perimeter";
    case Subtask::area: return "area";
  }
  return "?";
}

inline Subtask subtask_from_name(const std::string& s) {
  for (auto t : kAllSubtasks) {
    if (s == subtask_name(t)) return t;
  }
  throw Error(Errc::invalid_config, "unknown subtask '" + s + "'");
}

struct BenchItem {
  std::string id;
  Subtask subtask = Subtask::length;
  std::string image_path;  // relative to the manifest directory
  std::string question;
  double answer = 0.0;
  AttributeSelector reference;
  AttributeSelector target;
  std::uint64_t scene_seed = 0;
  int template_id = 0;
};

// Which target a template asks about.
enum class TargetRule { image_height, image_width, image_quantity, other_shape, any };

struct QuestionTemplate {
  Subtask subtask;
  int id;
  const char* text;  // {ref} and {tgt} are noun phrases without an article
  TargetRule rule;
};

inline constexpr std::array<QuestionTemplate, 12> kTemplates = {{
    {Subtask::length, 0, "What is the {tgt} if the {ref} is 1 unit?", TargetRule::image_height},
    {Subtask::length, 1, "If the {ref} is 1 unit, how long is the {tgt}?", TargetRule::image_width},
    {Subtask::length, 2, "Taking the {ref} as 1 unit, estimate the length of the {tgt}.",
     TargetRule::other_shape},
    {Subtask::length, 3, "Measured in units where the {ref} is 1 unit, what is the length of the {tgt}?",
     TargetRule::any},
    {Subtask::perimeter, 0, "What is the {tgt} if the {ref} is 1 unit?", TargetRule::image_quantity},
    {Subtask::perimeter, 1, "If the {ref} is 1 unit, what is the {tgt}?", TargetRule::other_shape},
    {Subtask::perimeter, 2, "Taking the {ref} as 1 unit, how long is the {tgt}?", TargetRule::any},
    {Subtask::perimeter, 3, "Relative to the {ref}, which counts as 1 unit, how long is the {tgt}?",
     TargetRule::any},
    {Subtask::area, 0, "What is the {tgt} if the {ref} is 1 unit?", TargetRule::image_quantity},
    {Subtask::area, 1, "If the {ref} is 1 unit, what is the {tgt}?", TargetRule::other_shape},
    {Subtask::area, 2, "Taking the {ref} as 1 unit, how large is the {tgt}?", TargetRule::any},
    {Subtask::area, 3, "Relative to the {ref}, which counts as 1 unit, how large is the {tgt}?",
     TargetRule::any},
}};

inline constexpr int kTemplatesPerSubtask = 4;

inline const QuestionTemplate& find_template(Subtask s, int id) {
  for (const auto& t : kTemplates) {
    if (t.subtask == s && t.id == id) return t;
  }
  throw Error(Errc::invalid_config,
              fmt::format("no template {} for subtask {}", id, subtask_name(s)));
}

struct QuestionOptions {
  double min_ratio = 0.05;
  double max_ratio = 100.0;
  // Keep only answers below 1, swapping reference and target when needed.
  bool normalized = false;
};

namespace detail {

inline void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

inline std::vector<AttributeSelector> primitive_segments(const Shape& s) {
  if (s.kind() == ShapeKind::circle) return {AttributeSelector::radius_of(s.color)};
  return {AttributeSelector::side_of(s.color, SideRank::shortest),
          AttributeSelector::side_of(s.color, SideRank::longest)};
}

// Area templates cover the shapes with a closed-form area the chains know.
inline bool has_area_formula(const Shape& s) {
  return s.kind() == ShapeKind::circle || s.kind() == ShapeKind::rectangle ||
         s.kind() == ShapeKind::triangle;
}

struct Candidate {
  AttributeSelector reference;
  AttributeSelector target;
};

inline std::vector<Candidate> candidates(const Scene& scene, const QuestionTemplate& tpl) {
  std::vector<Candidate> out;
  const Subtask sub = tpl.subtask;
  auto quantity_of = [&](const std::optional<std::string>& color) {
    AttributeSelector s;
    s.attr = sub == Subtask::perimeter ? Attribute::perimeter : Attribute::area;
    s.color = color;
    return s;
  };

  if (sub == Subtask::length) {
    for (const auto& ref_shape : scene.shapes) {
      for (const auto& ref : primitive_segments(ref_shape)) {
        std::vector<AttributeSelector> targets;
        if (tpl.rule == TargetRule::image_height || tpl.rule == TargetRule::any) {
          targets.push_back(AttributeSelector::image_height());
        }
        if (tpl.rule == TargetRule::image_width || tpl.rule == TargetRule::any) {
          targets.push_back(AttributeSelector::image_width());
        }
        if (tpl.rule == TargetRule::other_shape || tpl.rule == TargetRule::any) {
          for (const auto& other : scene.shapes) {
            if (other.color == ref_shape.color) continue;
            for (const auto& t : primitive_segments(other)) targets.push_back(t);
          }
        }
        for (const auto& t : targets) out.push_back({ref, t});
      }
    }
    return out;
  }

  for (const auto& ref_shape : scene.shapes) {
    if (sub == Subtask::area && !has_area_formula(ref_shape)) continue;
    const auto ref = quantity_of(ref_shape.color);
    if (tpl.rule == TargetRule::image_quantity || tpl.rule == TargetRule::any) {
      out.push_back({ref, quantity_of(std::nullopt)});
    }
    if (tpl.rule == TargetRule::other_shape || tpl.rule == TargetRule::any) {
      for (const auto& other : scene.shapes) {
        if (other.color == ref_shape.color) continue;
        if (sub == Subtask::area && !has_area_formula(other)) continue;
        out.push_back({ref, quantity_of(other.color)});
      }
    }
  }
  return out;
}

}  // namespace detail

inline std::string render_question(const Scene& scene, const QuestionTemplate& tpl,
                                   const AttributeSelector& reference,
                                   const AttributeSelector& target) {
  std::string q = tpl.text;
  detail::replace_all(q, "{ref}", selector_phrase(scene, reference));
  detail::replace_all(q, "{tgt}", selector_phrase(scene, target));
  return q;
}

inline BenchItem make_question(const Scene& scene, Subtask subtask, int template_id, Rng& rng,
                               const QuestionOptions& opts = {}) {
  const QuestionTemplate& tpl = find_template(subtask, template_id);
  std::vector<detail::Candidate> usable;
  for (auto c : detail::candidates(scene, tpl)) {
    double y = resolve_attribute(scene, c.target) / resolve_attribute(scene, c.reference);
    if (opts.normalized && y >= 1.0) {
      std::swap(c.reference, c.target);
      y = 1.0 / y;
      if (y >= 1.0) continue;
    }
    if (y < opts.min_ratio || y > opts.max_ratio) continue;
    usable.push_back(c);
  }
  if (usable.empty()) {
    throw Error(Errc::incompatible_scene,
                fmt::format("scene {} has no {} question for template {}", scene.seed,
                            subtask_name(subtask), template_id));
  }
  const auto& pick = usable[rng.index(usable.size())];
  BenchItem item;
  item.subtask = subtask;
  item.template_id = template_id;
  item.reference = pick.reference;
  item.target = pick.target;
  item.scene_seed = scene.seed;
  item.question = render_question(scene, tpl, pick.reference, pick.target);
  item.answer = resolve_attribute(scene, pick.target) / resolve_attribute(scene, pick.reference);
  return item;
}

inline double oracle_answer(const Scene& scene, const BenchItem& item) {
  return resolve_attribute(scene, item.target) / resolve_attribute(scene, item.reference);
}

// ---------------------------------------------------------------------------
// Manifests

struct Manifest {
  std::string benchmark;
  std::uint64_t global_seed = 0;
  std::vector<BenchItem> items;
  std::vector<Scene> scenes;  // parallel to items
  bool normalized = false;

  std::map<std::string, int> counts() const {
    std::map<std::string, int> out;
    for (const auto& it : items) ++out[subtask_name(it.subtask)];
    return out;
  }
};

inline nlohmann::ordered_json item_to_json(const BenchItem& item) {
  nlohmann::ordered_json j;
  j["id"] = item.id;
  j["subtask"] = subtask_name(item.subtask);
  j["image"] = item.image_path;
  j["question"] = item.question;
  j["answer"] = item.answer;
  j["reference"] = to_json(item.reference);
  j["target"] = to_json(item.target);
  j["scene_seed"] = item.scene_seed;
  j["template_id"] = item.template_id;
  return j;
}

inline BenchItem item_from_json(const nlohmann::json& j) {
  BenchItem item;
  item.id = j.at("id").get<std::string>();
  item.subtask = subtask_from_name(j.at("subtask").get<std::string>());
  item.image_path = j.at("image").get<std::string>();
  item.question = j.at("question").get<std::string>();
  item.answer = j.at("answer").get<double>();
  item.reference = selector_from_json(j.at("reference"));
  item.target = selector_from_json(j.at("target"));
  item.scene_seed = j.at("scene_seed").get<std::uint64_t>();
  item.template_id = j.at("template_id").get<int>();
  return item;
}

inline std::string manifest_jsonl(const Manifest& m) {
  std::string out;
  for (const auto& item : m.items) out += item_to_json(item).dump() + "\n";
  return out;
}

inline nlohmann::ordered_json manifest_meta(const Manifest& m) {
  nlohmann::ordered_json j;
  j["toolkit_version"] = kToolkitVersion;
  j["benchmark"] = m.benchmark;
  j["global_seed"] = m.global_seed;
  j["normalized"] = m.normalized;
  j["items"] = m.items.size();
  nlohmann::ordered_json counts = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.counts()) counts[k] = v;
  j["counts"] = counts;
  j["content_hash"] = "sha256:" + sha256_hex(manifest_jsonl(m));
  return j;
}

// Scene files sit next to the images: "<stem>.scene.json".
inline std::string scene_path_for(const std::string& image_path) {
  std::filesystem::path p(image_path);
  p.replace_extension(".scene.json");
  return p.generic_string();
}

inline std::vector<BenchItem> read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::io, "cannot open manifest '" + path.string() + "'");
  std::vector<BenchItem> items;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      items.push_back(item_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::io, fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return items;
}

inline Scene load_scene_for(const std::filesystem::path& manifest_dir, const BenchItem& item) {
  const auto path = manifest_dir / scene_path_for(item.image_path);
  const auto bytes = read_file(path);
  return scene_from_json(std::string(bytes.begin(), bytes.end()));
}

// ---------------------------------------------------------------------------
// Builders

// Scene seeds carry a 4-bit domain tag in the top bits, so seeds drawn for
// different purposes never coincide.
enum class SeedDomain : std::uint64_t { benchmark = 1, ood = 2, train = 3 };

inline std::uint64_t scene_seed_for(SeedDomain domain, std::uint64_t global_seed, Subtask subtask,
                                    std::size_t index, int attempt) {
  constexpr std::uint64_t kLow = (std::uint64_t{1} << 60) - 1;
  const std::uint64_t mixed =
      derive_seed(global_seed, (static_cast<std::uint64_t>(subtask) << 32) | index,
                  static_cast<std::uint64_t>(attempt));
  return (static_cast<std::uint64_t>(domain) << 60) | (mixed & kLow);
}

inline SeedDomain seed_domain(std::uint64_t scene_seed) {
  return static_cast<SeedDomain>(scene_seed >> 60);
}

struct BuildConfig {
  std::string benchmark = "bench";
  SeedDomain domain = SeedDomain::benchmark;
  std::uint64_t global_seed = 0;
  std::vector<Subtask> subtasks = {kAllSubtasks.begin(), kAllSubtasks.end()};
  std::size_t per_subtask = 100;
  GenConfig scene;  // seed is overwritten per item
  QuestionOptions question;
  // true: template = index mod 4 (full coverage); false: drawn at random.
  bool cycle_templates = true;
  std::optional<std::filesystem::path> out_dir;
  bool render = true;
  unsigned jobs = 1;
  int max_scene_attempts = 200;
};

inline BuildConfig benchmark_config(std::uint64_t seed) {
  BuildConfig cfg;
  cfg.benchmark = "bench";
  cfg.domain = SeedDomain::benchmark;
  cfg.global_seed = seed;
  return cfg;
}

inline BuildConfig ood_config(std::uint64_t seed) {
  BuildConfig cfg;
  cfg.benchmark = "ood";
  cfg.domain = SeedDomain::ood;
  cfg.global_seed = seed;
  cfg.subtasks = {Subtask::length, Subtask::perimeter};
  cfg.scene.shape_pool = {ShapeKind::trapezoid, ShapeKind::pentagon};
  return cfg;
}

inline BuildConfig training_config(std::uint64_t seed, std::vector<Subtask> tasks, std::size_t n,
                                   bool normalized) {
  BuildConfig cfg;
  cfg.benchmark = normalized ? "train-normalized" : "train";
  cfg.domain = SeedDomain::train;
  cfg.global_seed = seed;
  cfg.subtasks = std::move(tasks);
  cfg.per_subtask = n;
  cfg.question.normalized = normalized;
  cfg.cycle_templates = false;
  cfg.render = false;
  return cfg;
}

namespace detail {

struct BuiltItem {
  BenchItem item;
  Scene scene;
};

inline BuiltItem build_item(const BuildConfig& cfg, Subtask subtask, std::size_t index) {
  std::string last_error;
  for (int attempt = 0; attempt < cfg.max_scene_attempts; ++attempt) {
    const std::uint64_t seed = scene_seed_for(cfg.domain, cfg.global_seed, subtask, index, attempt);
    GenConfig gen = cfg.scene;
    gen.seed = seed;
    try {
      Scene scene = generate_scene(gen);
      Rng rng(splitmix64(seed));
      const int tpl = cfg.cycle_templates
                          ? static_cast<int>(index % kTemplatesPerSubtask)
                          : static_cast<int>(rng.index(kTemplatesPerSubtask));
      BenchItem item = make_question(scene, subtask, tpl, rng, cfg.question);
      item.id = fmt::format("{}-{}-{:04d}", cfg.benchmark, subtask_name(subtask), index);
      item.image_path =
          fmt::format("{}/{}/{}.png", cfg.benchmark, subtask_name(subtask), item.id);
      return {std::move(item), std::move(scene)};
    } catch (const Error& e) {
      if (e.code() != Errc::incompatible_scene && e.code() != Errc::placement_exhausted) throw;
      last_error = e.what();
    }
  }
  throw Error(Errc::incompatible_scene,
              fmt::format("{} item {} ({}): no usable scene after {} attempts; last: {}",
                          cfg.benchmark, index, subtask_name(subtask), cfg.max_scene_attempts,
                          last_error));
}

}  // namespace detail

inline void write_manifest(const Manifest& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string lines = manifest_jsonl(m);
  write_file(dir / "manifest.jsonl", lines.data(), lines.size());
  const std::string meta = manifest_meta(m).dump(2) + "\n";
  write_file(dir / "manifest.meta.json", meta.data(), meta.size());
}

inline Manifest build_manifest(const BuildConfig& cfg) {
  struct Slot {
    Subtask subtask;
    std::size_t index;
  };
  std::vector<Slot> slots;
  for (auto s : cfg.subtasks) {
    for (std::size_t i = 0; i < cfg.per_subtask; ++i) slots.push_back({s, i});
  }
  std::vector<detail::BuiltItem> built(slots.size());
  if (cfg.out_dir) {
    for (auto s : cfg.subtasks) {
      std::filesystem::create_directories(*cfg.out_dir / cfg.benchmark / subtask_name(s));
    }
  }
  parallel_for(slots.size(), cfg.jobs, [&](std::size_t k) {
    built[k] = detail::build_item(cfg, slots[k].subtask, slots[k].index);
    if (!cfg.out_dir) return;
    const auto& b = built[k];
    try {
      const std::string scene_json = scene_to_json(b.scene) + "\n";
      write_file(*cfg.out_dir / scene_path_for(b.item.image_path), scene_json.data(), scene_json.size());
      if (cfg.render) write_png(rasterize(b.scene), *cfg.out_dir / b.item.image_path);
    } catch (const Error& e) {
      throw Error(e.code(), "item " + b.item.id + ": " + e.detail());
    }
  });

  Manifest m;
  m.benchmark = cfg.benchmark;
  m.global_seed = cfg.global_seed;
  m.normalized = cfg.question.normalized;
  for (auto& b : built) {
    m.items.push_back(std::move(b.item));
    m.scenes.push_back(std::move(b.scene));
  }
  if (cfg.out_dir) write_manifest(m, *cfg.out_dir);
  return m;
}

inline Manifest build_benchmark(std::uint64_t seed, std::optional<std::filesystem::path> out = {},
                                unsigned jobs = 1) {
  BuildConfig cfg = benchmark_config(seed);
  cfg.out_dir = std::move(out);
  cfg.jobs = jobs;
  return build_manifest(cfg);
}

inline Manifest build_ood(std::uint64_t seed, std::optional<std::filesystem::path> out = {},
                          unsigned jobs = 1) {
  BuildConfig cfg = ood_config(seed);
  cfg.out_dir = std::move(out);
  cfg.jobs = jobs;
  return build_manifest(cfg);
}

inline Manifest build_training_split(std::uint64_t seed, std::vector<Subtask> tasks, std::size_t n,
                                     bool normalized,
                                     std::optional<std::filesystem::path> out = {},
                                     unsigned jobs = 1) {
  BuildConfig cfg = training_config(seed, std::move(tasks), n, normalized);
  cfg.out_dir = std::move(out);
  cfg.jobs = jobs;
  return build_manifest(cfg);
}

}  // namespace pts
