#pragma once

// End-to-end runs: scene discovery, parallel per-scene generation, JSONL and
// manifest output, and evaluation reports.

#include "spatialqa/eval.hpp"
#include "spatialqa/qa.hpp"
#include "spatialqa/scene.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

#ifndef SPATIALQA_VERSION
#define SPATIALQA_VERSION "0.0.0"
#endif

namespace spatialqa {

namespace fs = std::filesystem;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::vector<std::string> input_dirs;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  std::string split = "train";
  GenerationConfig generation;
  fs::path base_dir;  // relative paths resolve against this; not echoed

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  }

  void validate() const {
    const auto& g = generation;
    const auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("config: ") + what);
    };
    require(g.environment == "indoor" || g.environment == "tabletop",
            "environment must be \"indoor\" or \"tabletop\"");
    require(std::isfinite(g.resolution) && g.resolution > 0, "resolution must be > 0");
    require(std::isfinite(g.region_depth) && g.region_depth > 0, "region_depth must be > 0");
    require(std::isfinite(g.relation_margin) && g.relation_margin > 0, "relation_margin must be > 0");
    require(std::isfinite(g.fit_margin) && g.fit_margin >= 0, "margin must be >= 0");
    require(g.k_points >= 1, "k_points must be >= 1");
    require(g.sample_budget >= 1, "sample_budget must be >= 1");
    require(g.balance_ratio > 0 && g.balance_ratio < 1, "balance_ratio must lie in (0, 1)");
    require(g.balance_tolerance >= 0 && g.balance_tolerance < 0.5,
            "balance_tolerance must lie in [0, 0.5)");
    require(g.rotation_steps >= 1, "rotation_steps must be >= 1");
    require(g.min_fraction > 0 && g.min_fraction <= 1, "min_fraction must lie in (0, 1]");
    require(g.fit_targets >= 0, "fit_targets must be >= 0");
    require(g.fit_subdivisions >= 1, "fit_subdivisions must be >= 1");
    require(!split.empty() && split.find('/') == std::string::npos, "split must be a plain name");
  }
};

inline const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys{
      "input_dirs",   "output_dir",      "seed",          "split",
      "environment",  "resolution",      "region_depth",  "relation_margin",
      "margin",       "k_points",        "sample_budget", "balance_ratio",
      "balance_tolerance", "rotation_steps", "min_fraction", "surface_allowlist",
      "omit_frame_clause", "max_pairs",  "fit_targets", "fit_subdivisions"};
  return keys;
}

/// Defaults, then the environment preset, then explicit keys. Unknown keys
/// are rejected.
inline RunConfig config_from_json(const nlohmann::json& j, fs::path base_dir = {}) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!config_keys().count(key)) throw ConfigError("config: unknown key '" + key + "'");

  RunConfig c;
  c.base_dir = std::move(base_dir);
  try {
    if (j.contains("environment"))
      c.generation = GenerationConfig::for_environment(j.at("environment").get<std::string>());
    auto& g = c.generation;
    if (j.contains("input_dirs")) c.input_dirs = j.at("input_dirs").get<std::vector<std::string>>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_unsigned()) throw ConfigError("config: seed must be a non-negative integer");
      c.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("split")) c.split = j.at("split").get<std::string>();
    if (j.contains("resolution")) g.resolution = j.at("resolution").get<double>();
    if (j.contains("region_depth")) g.region_depth = j.at("region_depth").get<double>();
    if (j.contains("relation_margin")) g.relation_margin = j.at("relation_margin").get<double>();
    if (j.contains("margin")) g.fit_margin = j.at("margin").get<double>();
    if (j.contains("k_points")) g.k_points = j.at("k_points").get<int>();
    if (j.contains("sample_budget")) g.sample_budget = j.at("sample_budget").get<int>();
    if (j.contains("balance_ratio")) g.balance_ratio = j.at("balance_ratio").get<double>();
    if (j.contains("balance_tolerance")) g.balance_tolerance = j.at("balance_tolerance").get<double>();
    if (j.contains("rotation_steps")) g.rotation_steps = j.at("rotation_steps").get<int>();
    if (j.contains("min_fraction")) g.min_fraction = j.at("min_fraction").get<double>();
    if (j.contains("surface_allowlist"))
      g.surface_allowlist = j.at("surface_allowlist").get<std::vector<std::string>>();
    if (j.contains("omit_frame_clause")) g.omit_frame_clause = j.at("omit_frame_clause").get<bool>();
    if (j.contains("max_pairs")) g.max_pairs = j.at("max_pairs").get<std::size_t>();
    if (j.contains("fit_targets")) g.fit_targets = j.at("fit_targets").get<int>();
    if (j.contains("fit_subdivisions")) g.fit_subdivisions = j.at("fit_subdivisions").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
  const auto& g = c.generation;
  return {{"input_dirs", c.input_dirs},
          {"output_dir", c.output_dir},
          {"seed", c.seed},
          {"split", c.split},
          {"environment", g.environment},
          {"resolution", g.resolution},
          {"region_depth", g.region_depth},
          {"relation_margin", g.relation_margin},
          {"margin", g.fit_margin},
          {"k_points", g.k_points},
          {"sample_budget", g.sample_budget},
          {"balance_ratio", g.balance_ratio},
          {"balance_tolerance", g.balance_tolerance},
          {"rotation_steps", g.rotation_steps},
          {"min_fraction", g.min_fraction},
          {"surface_allowlist", g.surface_allowlist},
          {"omit_frame_clause", g.omit_frame_clause},
          {"max_pairs", g.max_pairs},
          {"fit_targets", g.fit_targets},
          {"fit_subdivisions", g.fit_subdivisions}};
}

// ---------------------------------------------------------------------------
// Generation

struct SceneOutcome {
  fs::path source;
  bool ok = false;
  std::string error;
  std::string scene_id;
  std::size_t views = 0;
  std::vector<QAPair> pairs;
  std::vector<SkipRecord> skips;
  std::vector<std::string> warnings;
};

inline SceneOutcome generate_scene(const fs::path& source, const RunConfig& config) {
  SceneOutcome out;
  out.source = source;
  try {
    const Scene scene = load_scene(source);
    out.scene_id = scene.scene_id;
    out.views = scene.views.size();
    SceneWorkspace ws(scene, config.generation);
    for (const auto& view : scene.views) {
      auto r = assemble(ws, view, config.seed);
      std::move(r.pairs.begin(), r.pairs.end(), std::back_inserter(out.pairs));
      std::move(r.skips.begin(), r.skips.end(), std::back_inserter(out.skips));
      std::move(r.warnings.begin(), r.warnings.end(), std::back_inserter(out.warnings));
    }
    std::sort(out.pairs.begin(), out.pairs.end(),
              [](const QAPair& a, const QAPair& b) { return a.id < b.id; });
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
    out.pairs.clear();
  }
  return out;
}

inline std::vector<fs::path> discover_scenes(const RunConfig& config) {
  std::vector<fs::path> files;
  for (const auto& dir : config.input_dirs) {
    const fs::path p = config.resolve(dir);
    if (!fs::is_directory(p)) throw ConfigError("input directory not found: " + p.string());
    std::vector<fs::path> found;
    for (const auto& entry : fs::directory_iterator(p))
      if (entry.is_regular_file() && entry.path().extension() == ".json") found.push_back(entry.path());
    std::sort(found.begin(), found.end());
    files.insert(files.end(), found.begin(), found.end());
  }
  return files;
}

inline unsigned worker_count() {
  if (const char* env = std::getenv("SPATIALQA_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline std::string safe_file_stem(const std::string& id) {
  std::string s = id;
  for (auto& ch : s)
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')) ch = '_';
  return s.empty() ? "scene" : s;
}

struct GenerateResult {
  int exit_code = 0;
  nlohmann::ordered_json manifest;
  std::size_t pairs = 0;
};

inline nlohmann::ordered_json skip_to_json(const SkipRecord& s) {
  return {{"view_id", s.view_id}, {"category", s.category}, {"key", s.key}, {"reason", s.reason}};
}

/// Generates every scene under the configured input directories. Exit code is
/// 0 iff every scene succeeded; 1 if any failed or none were found.
inline GenerateResult run_generate(const RunConfig& config, std::ostream& log,
                                   unsigned workers = 0) {
  using nlohmann::ordered_json;
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  GenerateResult result;

  const auto files = discover_scenes(config);
  if (files.empty()) {
    log << "error: no scenes found\n";
    result.exit_code = 1;
    return result;
  }

  std::vector<SceneOutcome> outcomes(files.size());
  std::atomic<std::size_t> next{0};
  const unsigned pool = std::min<unsigned>(workers ? workers : worker_count(),
                                           static_cast<unsigned>(files.size()));
  {
    std::vector<std::jthread> threads;
    for (unsigned t = 0; t < pool; ++t)
      threads.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < files.size();)
          outcomes[i] = generate_scene(files[i], config);
      });
  }

  std::set<std::string> seen_ids;
  for (auto& o : outcomes) {
    if (o.ok && !seen_ids.insert(o.scene_id).second) {
      o.ok = false;
      o.error = "duplicate scene_id '" + o.scene_id + "'";
      o.pairs.clear();
    }
  }

  const fs::path out_dir = config.resolve(config.output_dir);
  fs::create_directories(out_dir / "scenes");

  std::vector<const SceneOutcome*> good;
  for (const auto& o : outcomes)
    if (o.ok) good.push_back(&o);
  std::sort(good.begin(), good.end(),
            [](const SceneOutcome* a, const SceneOutcome* b) { return a->scene_id < b->scene_id; });

  ordered_json scenes = ordered_json::array();
  ordered_json failures = ordered_json::array();
  std::map<std::string, std::size_t> by_category;
  std::map<std::string, std::pair<std::size_t, std::size_t>> binary_strata;  // n, true

  std::ofstream combined(out_dir / (config.split + ".jsonl"), std::ios::binary);
  for (const auto* o : good) {
    std::ofstream per_scene(out_dir / "scenes" / (safe_file_stem(o->scene_id) + ".jsonl"),
                            std::ios::binary);
    std::map<std::string, std::size_t> counts;
    for (auto c : kAllCategories) counts[std::string(to_string(c))] = 0;
    for (const auto& qa : o->pairs) {
      const std::string line = to_jsonl_line(qa) + '\n';
      per_scene << line;
      combined << line;
      ++counts[std::string(to_string(qa.category))];
      ++by_category[std::string(to_string(qa.category))];
      if (is_binary(qa.category)) {
        auto& s = binary_strata[stratum_name(qa.category, qa.frame)];
        ++s.first;
        s.second += std::get<bool>(qa.answer);
      }
    }
    ordered_json skips = ordered_json::array();
    for (const auto& s : o->skips) skips.push_back(skip_to_json(s));
    scenes.push_back({{"scene_id", o->scene_id},
                      {"source", o->source.filename().string()},
                      {"views", o->views},
                      {"pairs", o->pairs.size()},
                      {"counts", counts},
                      {"warnings", o->warnings},
                      {"skips", std::move(skips)}});
    result.pairs += o->pairs.size();
  }
  for (const auto& o : outcomes)
    if (!o.ok) failures.push_back({{"source", o.source.filename().string()}, {"error", o.error}});

  ordered_json strata = ordered_json::object();
  for (const auto& [name, s] : binary_strata)
    strata[name] = {{"n", s.first},
                    {"true", s.second},
                    {"true_fraction", s.first ? double(s.second) / double(s.first) : 0.0}};

  auto& m = result.manifest;
  m["tool"] = "spatialqa";
  m["version"] = SPATIALQA_VERSION;
  m["seed"] = config.seed;
  m["config"] = config_to_json(config);
  m["totals"] = {{"scenes_ok", good.size()},
                 {"scenes_failed", failures.size()},
                 {"pairs", result.pairs},
                 {"by_category", by_category},
                 {"binary_strata", strata}};
  m["scenes"] = std::move(scenes);
  m["failures"] = std::move(failures);
  m["wall_clock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  // Scene errors can quote raw bytes from a broken file.
  std::ofstream(out_dir / "manifest.json")
      << m.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';

  for (const auto& o : outcomes)
    if (!o.ok) log << "scene " << o.source.string() << " failed: " << o.error << '\n';
  log << "generated " << result.pairs << " QA pairs from " << good.size() << " scene(s) into "
      << out_dir.string() << '\n';
  result.exit_code = good.size() == outcomes.size() ? 0 : 1;
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Writes the JSON report to `report_path` and the text table next to it
/// (extension .txt). Returns 0 on success, 2 on unreadable input.
inline int run_eval(const fs::path& gold_path, const fs::path& pred_path,
                    const fs::path& report_path, std::ostream& out, std::ostream& err,
                    const EvalOptions& opts = {}) {
  EvalReport report;
  try {
    report = evaluate(gold_path, pred_path, opts);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const DuplicatePredictionId& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
  std::ofstream(report_path) << report_to_json(report).dump(2) << '\n';
  fs::path table_path = report_path;
  table_path.replace_extension(".txt");
  if (table_path == report_path) table_path += ".table.txt";
  const std::string table = report_table(report);
  std::ofstream(table_path) << table;
  out << table;
  char buf[96];
  std::snprintf(buf, sizeof buf, "overall: %zu/%zu = %.4f\n", report.overall.correct,
                report.overall.n, report.overall.accuracy());
  out << buf;
  return 0;
}

}  // namespace spatialqa
