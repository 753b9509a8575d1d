#pragma once

// Scoring of prediction files against generated QA files, stratified by
// (category, frame).

#include "spatialqa/geometry.hpp"
#include "spatialqa/qa.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace spatialqa {

class DuplicatePredictionId : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalOptions {
  bool any_point = false;         // one predicted point inside suffices
  double proximity_px = 10.0;     // fallback radius for degenerate gold regions
  double box_iou = 0.5;           // grounding predictions given as boxes
};

inline bool score_binary(bool pred, bool gold) { return pred == gold; }

/// Convex-hull containment (boundary inclusive). Degenerate gold regions fall
/// back to proximity: correct iff some predicted point is within
/// `proximity_px` of some gold point.
inline bool score_points(std::span<const Vec2> pred, std::span<const Vec2> gold_region,
                         bool any_point = false, double proximity_px = 10.0) {
  if (pred.empty() || gold_region.empty()) return false;
  Hull2D hull;
  try {
    hull = convex_hull(gold_region);
  } catch (const DegenerateInput&) {
    for (const auto& p : pred)
      for (const auto& g : gold_region)
        if ((p - g).norm() <= proximity_px) return true;
    return false;
  }
  const auto inside = [&](const Vec2& p) { return point_in_hull(p, hull); };
  return any_point ? std::any_of(pred.begin(), pred.end(), inside)
                   : std::all_of(pred.begin(), pred.end(), inside);
}

inline double box_iou(const PixelBox& a, const PixelBox& b) {
  const double iw = std::min(a.u_max, b.u_max) - std::max(a.u_min, b.u_min);
  const double ih = std::min(a.v_max, b.v_max) - std::max(a.v_min, b.v_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double area_a = (a.u_max - a.u_min) * (a.v_max - a.v_min);
  const double area_b = (b.u_max - b.u_min) * (b.v_max - b.v_min);
  return inter / (area_a + area_b - inter);
}

struct Stratum {
  std::string category;
  std::string frame;  // "-" for grounding
  std::size_t n = 0;
  std::size_t correct = 0;

  double accuracy() const { return n == 0 ? 0.0 : double(correct) / double(n); }
};

struct EvalReport {
  std::vector<Stratum> strata;
  Stratum overall{"all", "all"};
  std::map<std::string, Stratum> by_environment;
  std::vector<std::string> missing;    // gold ids with no prediction
  std::vector<std::string> malformed;  // predictions with an unusable value
  std::vector<std::string> unmatched;  // prediction ids absent from gold
};

struct PredictionRecord {
  std::string id;
  nlohmann::json value;
  std::size_t line = 0;
};

// ---------------------------------------------------------------------------
// File reading

namespace detail {

template <class Fn>
void for_each_jsonl_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    fn(line, n);
  }
}

}  // namespace detail

inline std::vector<QAPair> read_gold(const std::filesystem::path& path) {
  std::vector<QAPair> out;
  detail::for_each_jsonl_line(path, [&](const std::string& line, std::size_t n) {
    const std::string where = path.filename().string() + ":" + std::to_string(n);
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    out.push_back(qa_from_json(j, where));
  });
  return out;
}

/// Accepts {"id", "value"} records, or generated records whose answer.value
/// is taken as the prediction.
inline std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::vector<PredictionRecord> out;
  std::unordered_map<std::string, std::size_t> seen;
  detail::for_each_jsonl_line(path, [&](const std::string& line, std::size_t n) {
    const std::string where = path.filename().string() + ":" + std::to_string(n);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
    auto id = j.find("id");
    if (id == j.end() || !id->is_string()) throw ParseError(where + ": missing string field 'id'");
    PredictionRecord rec{id->get<std::string>(), nullptr, n};
    if (auto v = j.find("value"); v != j.end()) {
      rec.value = *v;
    } else if (auto a = j.find("answer"); a != j.end() && a->is_object() && a->contains("value")) {
      rec.value = (*a)["value"];
    } else {
      throw ParseError(where + ": missing field 'value'");
    }
    if (auto [it, fresh] = seen.emplace(rec.id, n); !fresh)
      throw DuplicatePredictionId("duplicate prediction id '" + rec.id + "' at line " +
                                  std::to_string(n) + " (first seen at line " +
                                  std::to_string(it->second) + ")");
    out.push_back(std::move(rec));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

namespace detail {

/// Non-negative finite [u, v] pairs, or nullopt.
inline std::optional<std::vector<Vec2>> prediction_points(const nlohmann::json& v) {
  if (!v.is_array()) return std::nullopt;
  std::vector<Vec2> out;
  for (const auto& p : v) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      return std::nullopt;
    const Vec2 q(p[0].get<double>(), p[1].get<double>());
    if (!q.allFinite() || q.x() < 0 || q.y() < 0) return std::nullopt;
    out.push_back(q);
  }
  return out;
}

inline std::optional<PixelBox> prediction_box(const nlohmann::json& v) {
  if (!v.is_array() || v.size() != 4) return std::nullopt;
  for (const auto& x : v)
    if (!x.is_number() || !std::isfinite(x.get<double>()) || x.get<double>() < 0)
      return std::nullopt;
  PixelBox b{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
  if (!(b.u_min < b.u_max && b.v_min < b.v_max)) return std::nullopt;
  return b;
}

enum class Verdict { correct, incorrect, malformed };

inline Verdict score_record(const QAPair& gold, const nlohmann::json& value,
                            const EvalOptions& opts) {
  const auto judge = [](bool ok) { return ok ? Verdict::correct : Verdict::incorrect; };
  switch (gold.category) {
    case Category::configuration:
    case Category::compatibility:
      if (!value.is_boolean()) return Verdict::malformed;
      return judge(score_binary(value.get<bool>(), std::get<bool>(gold.answer)));
    case Category::context: {
      auto pts = prediction_points(value);
      if (!pts) return Verdict::malformed;
      return judge(score_points(*pts, std::get<std::vector<Vec2>>(gold.answer), opts.any_point,
                                opts.proximity_px));
    }
    case Category::grounding: {
      const auto& g = std::get<PixelBox>(gold.answer);
      if (value.is_array() && value.size() == 4 && value[0].is_number()) {
        auto b = prediction_box(value);
        if (!b) return Verdict::malformed;
        return judge(box_iou(*b, g) >= opts.box_iou);
      }
      auto pts = prediction_points(value);
      if (!pts) return Verdict::malformed;
      const std::array<Vec2, 4> corners{Vec2(g.u_min, g.v_min), Vec2(g.u_max, g.v_min),
                                        Vec2(g.u_max, g.v_max), Vec2(g.u_min, g.v_max)};
      return judge(score_points(*pts, corners, opts.any_point, opts.proximity_px));
    }
  }
  return Verdict::malformed;
}

inline int frame_rank(const std::string& f) {
  if (auto k = parse_frame(f)) return static_cast<int>(*k);
  return 3;
}

}  // namespace detail

inline EvalReport evaluate(const std::vector<QAPair>& gold,
                           const std::vector<PredictionRecord>& predictions,
                           const EvalOptions& opts = {}) {
  EvalReport report;
  std::unordered_map<std::string, const PredictionRecord*> by_id;
  for (const auto& p : predictions) {
    if (!by_id.emplace(p.id, &p).second)
      throw DuplicatePredictionId("duplicate prediction id '" + p.id + "'");
  }
  std::unordered_set<std::string> gold_ids;
  std::map<std::pair<int, int>, Stratum> strata;

  for (const auto& g : gold) {
    gold_ids.insert(g.id);
    const std::string frame = g.frame ? std::string(to_string(*g.frame)) : "-";
    auto& s = strata[{static_cast<int>(g.category), detail::frame_rank(frame)}];
    s.category = to_string(g.category);
    s.frame = frame;
    std::string env = "unknown";
    if (auto it = g.provenance.find("environment"); it != g.provenance.end() && it->is_string())
      env = it->get<std::string>();
    auto& e = report.by_environment[env];
    e.category = "all";
    e.frame = env;

    bool correct = false;
    auto it = by_id.find(g.id);
    if (it == by_id.end()) {
      report.missing.push_back(g.id);
    } else {
      switch (detail::score_record(g, it->second->value, opts)) {
        case detail::Verdict::correct: correct = true; break;
        case detail::Verdict::incorrect: break;
        case detail::Verdict::malformed: report.malformed.push_back(g.id); break;
      }
    }
    for (Stratum* t : {&s, &e, &report.overall}) {
      ++t->n;
      t->correct += correct;
    }
  }
  for (const auto& p : predictions)
    if (!gold_ids.count(p.id)) report.unmatched.push_back(p.id);
  for (auto& [key, s] : strata) report.strata.push_back(std::move(s));
  return report;
}

inline EvalReport evaluate(const std::filesystem::path& gold_path,
                           const std::filesystem::path& pred_path, const EvalOptions& opts = {}) {
  return evaluate(read_gold(gold_path), read_predictions(pred_path), opts);
}

// ---------------------------------------------------------------------------
// Output

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  using nlohmann::ordered_json;
  const auto stratum = [](const Stratum& s) {
    return ordered_json{{"category", s.category},
                        {"frame", s.frame},
                        {"n", s.n},
                        {"correct", s.correct},
                        {"accuracy", s.accuracy()}};
  };
  ordered_json j;
  j["strata"] = ordered_json::array();
  for (const auto& s : r.strata) j["strata"].push_back(stratum(s));
  j["overall"] = stratum(r.overall);
  j["environments"] = ordered_json::object();
  for (const auto& [env, s] : r.by_environment)
    j["environments"][env] = {{"n", s.n}, {"correct", s.correct}, {"accuracy", s.accuracy()}};
  j["missing"] = r.missing;
  j["malformed"] = r.malformed;
  j["unmatched"] = r.unmatched;
  return j;
}

/// One header line plus one line per non-empty stratum.
inline std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-14s %-7s %8s %9s\n", "category", "frame", "n", "accuracy");
  os << buf;
  for (const auto& s : r.strata) {
    if (s.n == 0) continue;
    std::snprintf(buf, sizeof buf, "%-14s %-7s %8zu %9.4f\n", s.category.c_str(), s.frame.c_str(),
                  s.n, s.accuracy());
    os << buf;
  }
  return os.str();
}

}  // namespace spatialqa
