#pragma once

// QA pair generation: template rendering, grounding boxes, class balancing
// and per-view assembly of all question categories.

#include "spatialqa/fit.hpp"
#include "spatialqa/geometry.hpp"
#include "spatialqa/occupancy.hpp"
#include "spatialqa/question_templates.hpp"
#include "spatialqa/random.hpp"
#include "spatialqa/relations.hpp"
#include "spatialqa/scene.hpp"
#include "spatialqa/space_sampler.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

namespace spatialqa {

enum class Category { configuration, context, compatibility, grounding };

inline constexpr std::array<Category, 4> kAllCategories{
    Category::configuration, Category::context, Category::compatibility, Category::grounding};

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::configuration: return "configuration";
    case Category::context: return "context";
    case Category::compatibility: return "compatibility";
    case Category::grounding: return "grounding";
  }
  return "?";
}

inline std::optional<Category> parse_category(std::string_view s) {
  for (auto c : kAllCategories)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

inline bool is_binary(Category c) {
  return c == Category::configuration || c == Category::compatibility;
}

struct PixelBox {
  double u_min = 0, v_min = 0, u_max = 0, v_max = 0;
  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

using Answer = std::variant<bool, std::vector<Vec2>, PixelBox>;

struct QAPair {
  std::string id;
  std::string scene_id;
  std::string view_id;
  std::string image_ref;
  Category category = Category::configuration;
  std::optional<FrameKind> frame;
  std::string question;
  Answer answer;
  std::vector<Vec3> points_3d;  // context answers only
  nlohmann::ordered_json provenance;
};

/// Everything assemble() needs besides the scene, view and seed.
struct GenerationConfig {
  std::string environment = "indoor";
  double resolution = 0.05;      // m per grid cell
  double region_depth = 1.0;     // m
  double relation_margin = 0.05; // m
  double fit_margin = 0.10;      // m
  int k_points = 5;
  int sample_budget = 1000;
  double balance_ratio = 0.5;
  double balance_tolerance = 0.02;
  int rotation_steps = 16;
  double min_fraction = 0.5;
  std::vector<std::string> surface_allowlist = default_surface_allowlist();
  bool omit_frame_clause = false;
  std::size_t max_pairs = 0;
  int fit_targets = 2;  // compatibility targets per (anchor, relation, frame)
  int fit_subdivisions = 8;  // placement lattice step = resolution / fit_subdivisions

  static GenerationConfig for_environment(std::string_view env) {
    GenerationConfig c;
    c.environment = std::string(env);
    if (env == "tabletop") {
      c.resolution = 0.01;
      c.region_depth = 0.3;
    }
    return c;
  }
};

// ---------------------------------------------------------------------------
// Rendering

namespace detail {

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
}

}  // namespace detail

inline std::string render_question(Category category, std::string_view target_label,
                                   RelationKind relation, std::string_view anchor_label,
                                   FrameKind frame, bool omit_frame_clause = false) {
  std::string s;
  switch (category) {
    case Category::configuration: s = templates::kConfiguration; break;
    case Category::context: s = templates::kContext; break;
    case Category::compatibility: s = templates::kCompatibility; break;
    case Category::grounding: s = templates::kGrounding; break;
  }
  detail::replace_all(s, "{frame}",
                      omit_frame_clause ? std::string_view{}
                                        : templates::kFrameClauses[static_cast<int>(frame)]);
  detail::replace_all(s, "{relation}", templates::kPrepositions[static_cast<int>(relation)]);
  detail::replace_all(s, "{target}", target_label);
  detail::replace_all(s, "{anchor}", anchor_label);
  return s;
}

inline std::string provenance_id(const QAPair& qa) {
  std::string key = qa.scene_id + '/' + qa.view_id + '/' + std::string(to_string(qa.category)) +
                    '/' + qa.provenance.dump();
  return hex64(stable_hash(key));
}

// ---------------------------------------------------------------------------
// Grounding

inline constexpr double kNearPlane = 1e-3;  // m

/// Image-space bounding box of a projected 3D box, clipped to the image.
/// Box edges crossing the camera plane are cut at a near plane first.
inline std::optional<PixelBox> project_box(const OrientedBox& box, const CameraView& view) {
  const auto& k = view.intrinsics;
  std::array<Vec3, 8> ego;
  const auto corners = box.corners();
  for (int i = 0; i < 8; ++i) ego[i] = view.extrinsics.apply_inverse(corners[i]);

  std::vector<Vec2> uv;
  for (int i = 0; i < 8; ++i) {
    if (ego[i].z() >= kNearPlane) uv.push_back(*project_ego(ego[i], k));
    for (int bit : {1, 2, 4}) {
      if (i & bit) continue;
      const Vec3& a = ego[i];
      const Vec3& b = ego[i | bit];
      if ((a.z() >= kNearPlane) == (b.z() >= kNearPlane)) continue;
      const double t = (kNearPlane - a.z()) / (b.z() - a.z());
      uv.push_back(*project_ego(a + t * (b - a), k));
    }
  }
  if (uv.empty()) return std::nullopt;
  PixelBox pb{uv[0].x(), uv[0].y(), uv[0].x(), uv[0].y()};
  for (const auto& p : uv) {
    pb.u_min = std::min(pb.u_min, p.x());
    pb.v_min = std::min(pb.v_min, p.y());
    pb.u_max = std::max(pb.u_max, p.x());
    pb.v_max = std::max(pb.v_max, p.y());
  }
  pb.u_min = std::clamp(pb.u_min, 0.0, double(k.width));
  pb.u_max = std::clamp(pb.u_max, 0.0, double(k.width));
  pb.v_min = std::clamp(pb.v_min, 0.0, double(k.height));
  pb.v_max = std::clamp(pb.v_max, 0.0, double(k.height));
  if (!(pb.u_min < pb.u_max && pb.v_min < pb.v_max)) return std::nullopt;
  return pb;
}

inline std::vector<QAPair> make_grounding(const Scene& scene, const CameraView& view,
                                          double min_fraction = 0.5,
                                          const std::string& environment = "indoor") {
  std::vector<QAPair> out;
  for (const auto& obj : unique_label_objects(visible_objects(scene, view, min_fraction))) {
    auto box = project_box(obj.box, view);
    if (!box) continue;
    QAPair qa;
    qa.scene_id = scene.scene_id;
    qa.view_id = view.view_id;
    qa.image_ref = view.image_ref;
    qa.category = Category::grounding;
    qa.question = render_question(Category::grounding, obj.label, RelationKind::left, "",
                                  FrameKind::ego);
    qa.answer = *box;
    qa.provenance = {{"kind", "grounding"}, {"object_id", obj.id}, {"environment", environment}};
    qa.id = provenance_id(qa);
    out.push_back(std::move(qa));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Balancing

struct BalanceResult {
  std::vector<QAPair> pairs;
  std::vector<std::string> warnings;  // Unbalanceable strata
};

inline std::string stratum_name(Category c, const std::optional<FrameKind>& f) {
  return std::string(to_string(c)) + "/" + (f ? std::string(to_string(*f)) : "-");
}

/// Subsamples the majority answer in every binary (category, frame) stratum
/// whose true-fraction is off `target_ratio` by more than `tolerance`.
/// Non-binary pairs pass through. Input order is preserved.
inline BalanceResult balance_binary(std::vector<QAPair> pairs, double target_ratio,
                                    double tolerance, std::uint64_t seed) {
  if (!(target_ratio > 0.0 && target_ratio < 1.0))
    throw std::invalid_argument("balance ratio must lie in (0, 1)");
  BalanceResult result;
  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> strata;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!is_binary(pairs[i].category)) continue;
    auto& s = strata[stratum_name(pairs[i].category, pairs[i].frame)];
    (std::get<bool>(pairs[i].answer) ? s.first : s.second).push_back(i);
  }

  std::vector<bool> keep(pairs.size(), true);
  for (auto& [name, split] : strata) {
    auto& [trues, falses] = split;
    if (trues.empty() || falses.empty()) {
      result.warnings.push_back("Unbalanceable: stratum " + name + " has only " +
                                (trues.empty() ? "false" : "true") + " answers");
      continue;
    }
    const double n_true = double(trues.size()), n_false = double(falses.size());
    const double frac = n_true / (n_true + n_false);
    if (std::abs(frac - target_ratio) <= tolerance) continue;

    std::vector<std::size_t>* majority;
    std::size_t wanted;
    if (frac > target_ratio) {
      majority = &trues;
      wanted = static_cast<std::size_t>(std::llround(target_ratio * n_false / (1 - target_ratio)));
    } else {
      majority = &falses;
      wanted = static_cast<std::size_t>(std::llround((1 - target_ratio) * n_true / target_ratio));
    }
    wanted = std::clamp<std::size_t>(wanted, 1, majority->size());
    Rng rng(derive_seed(seed, name));
    shuffle(*majority, rng);
    for (std::size_t i = wanted; i < majority->size(); ++i) keep[(*majority)[i]] = false;
  }

  for (std::size_t i = 0; i < pairs.size(); ++i)
    if (keep[i]) result.pairs.push_back(std::move(pairs[i]));
  return result;
}

// ---------------------------------------------------------------------------
// Assembly

struct SkipRecord {
  std::string view_id;
  std::string category;
  std::string key;
  std::string reason;
};

/// Per-scene state shared by all views: support surfaces and their grids.
class SceneWorkspace {
 public:
  SceneWorkspace(const Scene& scene, GenerationConfig config)
      : scene_(scene), config_(std::move(config)),
        supports_(support_surfaces(scene, config_.surface_allowlist)) {}

  const Scene& scene() const { return scene_; }
  const GenerationConfig& config() const { return config_; }
  const std::vector<SupportSurface>& supports() const { return supports_; }

  const OccupancyGrid& grid_for(const SupportSurface& s) {
    auto it = grids_.find(s.object.id);
    if (it == grids_.end())
      it = grids_.emplace(s.object.id, build_support_grid(scene_, s, config_.resolution,
                                                          0.5 + config_.region_depth)).first;
    return it->second;
  }

  bool is_support_label(const std::string& label) const {
    const auto& a = config_.surface_allowlist;
    return std::find(a.begin(), a.end(), label) != a.end();
  }

 private:
  const Scene& scene_;
  GenerationConfig config_;
  std::vector<SupportSurface> supports_;
  std::map<std::string, OccupancyGrid> grids_;
};

struct AssemblyResult {
  std::vector<QAPair> pairs;
  std::vector<SkipRecord> skips;
  std::vector<std::string> warnings;
};

namespace detail {

inline QAPair base_pair(const Scene& scene, const CameraView& view, Category c, FrameKind f) {
  QAPair qa;
  qa.scene_id = scene.scene_id;
  qa.view_id = view.view_id;
  qa.image_ref = view.image_ref;
  qa.category = c;
  qa.frame = f;
  return qa;
}

inline std::string question_key(const Scene& scene, const CameraView& view, std::string_view what,
                                const std::string& anchor, RelationKind r, FrameKind f) {
  return scene.scene_id + '/' + view.view_id + '/' + std::string(what) + '/' + anchor + '/' +
         std::string(to_string(r)) + '/' + std::string(to_string(f));
}

}  // namespace detail

inline AssemblyResult assemble(SceneWorkspace& ws, const CameraView& view, std::uint64_t seed) {
  const Scene& scene = ws.scene();
  const auto& cfg = ws.config();
  AssemblyResult result;
  std::vector<QAPair> pairs;

  // Configuration.
  RelationConfig rcfg{cfg.relation_margin, cfg.min_fraction, cfg.max_pairs};
  for (const auto& rel : extract_configuration(scene, view, rcfg)) {
    const auto* anchor = scene.find_object(rel.anchor_id);
    const auto* target = scene.find_object(rel.target_id);
    auto qa = detail::base_pair(scene, view, Category::configuration, rel.frame);
    qa.question = render_question(qa.category, target->label, rel.relation, anchor->label,
                                  rel.frame, cfg.omit_frame_clause);
    qa.answer = rel.holds;
    qa.provenance = {{"kind", "relation"},
                     {"anchor_id", rel.anchor_id},
                     {"target_id", rel.target_id},
                     {"relation", to_string(rel.relation)},
                     {"frame", to_string(rel.frame)},
                     {"margin", cfg.relation_margin},
                     {"environment", cfg.environment}};
    pairs.push_back(std::move(qa));
  }

  // Context and compatibility, for anchors resting on a support surface.
  auto objects = unique_label_objects(visible_objects(scene, view, cfg.min_fraction));
  std::sort(objects.begin(), objects.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (const auto& anchor : objects) {
    const auto support = find_support(anchor, ws.supports());
    if (!support) {
      result.skips.push_back({view.view_id, "context", anchor.id, "no support surface"});
      continue;
    }
    const OccupancyGrid& grid = ws.grid_for(*support);
    std::vector<const ObjectInstance*> candidates;
    for (const auto& o : objects)
      if (o.id != anchor.id && !ws.is_support_label(o.label)) candidates.push_back(&o);

    for (auto relation : kHorizontalRelations) {
      for (auto frame : kAllFrames) {
        const std::string key =
            detail::question_key(scene, view, "context", anchor.id, relation, frame);
        const std::uint64_t qseed = derive_seed(seed, key);
        SamplerOptions sopt;
        sopt.budget = cfg.sample_budget;
        sopt.region_depth = cfg.region_depth;

        std::variant<ContextSample, NoFreeSpace> sampled;
        try {
          sampled = sample_context(scene, view, anchor, relation, frame, grid, cfg.k_points,
                                   qseed, sopt);
        } catch (const UnsupportedRelation& e) {
          result.skips.push_back({view.view_id, "context", key, e.what()});
          continue;
        }
        if (auto* s = std::get_if<ContextSample>(&sampled)) {
          auto qa = detail::base_pair(scene, view, Category::context, frame);
          qa.question = render_question(qa.category, "", relation, anchor.label, frame,
                                        cfg.omit_frame_clause);
          qa.answer = s->points_2d;
          qa.points_3d = s->points_3d;
          qa.provenance = {{"kind", "context"},
                           {"anchor_id", anchor.id},
                           {"relation", to_string(relation)},
                           {"frame", to_string(frame)},
                           {"support_id", support->object.id},
                           {"seed", qseed},
                           {"environment", cfg.environment}};
          pairs.push_back(std::move(qa));
        } else {
          result.skips.push_back(
              {view.view_id, "context", key, "NoFreeSpace: " + std::get<NoFreeSpace>(sampled).reason});
        }

        // Compatibility targets: a seeded subset of the other visible objects.
        auto chosen = candidates;
        Rng rng(derive_seed(seed, key + "/targets"));
        shuffle(chosen, rng);
        if (chosen.size() > static_cast<std::size_t>(std::max(cfg.fit_targets, 0)))
          chosen.resize(static_cast<std::size_t>(std::max(cfg.fit_targets, 0)));
        std::vector<FitQuery> queries;
        for (const auto* t : chosen)
          queries.push_back({anchor.id, t->id, relation, frame, cfg.fit_margin});
        FitOptions fopt{cfg.rotation_steps, grid.resolution / cfg.fit_subdivisions, cfg.region_depth};
        for (auto& outcome : emit_compatibility(scene, view, std::move(queries), grid, fopt)) {
          if (!outcome.fits) {
            result.skips.push_back({view.view_id, "compatibility",
                                    key + "/" + outcome.query.target_id, outcome.skip_reason});
            continue;
          }
          const auto* target = scene.find_object(outcome.query.target_id);
          auto qa = detail::base_pair(scene, view, Category::compatibility, frame);
          qa.question = render_question(qa.category, target->label, relation, anchor.label, frame,
                                        cfg.omit_frame_clause);
          qa.answer = *outcome.fits;
          qa.provenance = {{"kind", "fit"},
                           {"anchor_id", anchor.id},
                           {"target_id", target->id},
                           {"relation", to_string(relation)},
                           {"frame", to_string(frame)},
                           {"margin", cfg.fit_margin},
                           {"support_id", support->object.id},
                           {"environment", cfg.environment}};
          pairs.push_back(std::move(qa));
        }
      }
    }
  }

  auto grounding = make_grounding(scene, view, cfg.min_fraction, cfg.environment);
  pairs.insert(pairs.end(), std::make_move_iterator(grounding.begin()),
               std::make_move_iterator(grounding.end()));

  for (auto& qa : pairs) qa.id = provenance_id(qa);
  auto balanced = balance_binary(std::move(pairs), cfg.balance_ratio, cfg.balance_tolerance,
                                 derive_seed(seed, scene.scene_id + '/' + view.view_id + "/balance"));
  for (auto& w : balanced.warnings) result.warnings.push_back(view.view_id + ": " + w);
  result.pairs = std::move(balanced.pairs);
  std::sort(result.pairs.begin(), result.pairs.end(),
            [](const QAPair& a, const QAPair& b) { return a.id < b.id; });
  return result;
}

inline AssemblyResult assemble(const Scene& scene, const CameraView& view,
                               const GenerationConfig& config, std::uint64_t seed) {
  SceneWorkspace ws(scene, config);
  return assemble(ws, view, seed);
}

// ---------------------------------------------------------------------------
// JSONL

inline nlohmann::ordered_json to_json(const QAPair& qa) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["id"] = qa.id;
  j["scene_id"] = qa.scene_id;
  j["view_id"] = qa.view_id;
  j["image_ref"] = qa.image_ref;
  j["category"] = to_string(qa.category);
  j["frame"] = qa.frame ? ordered_json(to_string(*qa.frame)) : ordered_json(nullptr);
  j["question"] = qa.question;
  ordered_json answer;
  if (auto* b = std::get_if<bool>(&qa.answer)) {
    answer["type"] = "bool";
    answer["value"] = *b;
  } else if (auto* pts = std::get_if<std::vector<Vec2>>(&qa.answer)) {
    answer["type"] = "points";
    answer["value"] = ordered_json::array();
    for (const auto& p : *pts) answer["value"].push_back({p.x(), p.y()});
    answer["points_3d"] = ordered_json::array();
    for (const auto& p : qa.points_3d) answer["points_3d"].push_back({p.x(), p.y(), p.z()});
  } else {
    const auto& box = std::get<PixelBox>(qa.answer);
    answer["type"] = "box";
    answer["value"] = {box.u_min, box.v_min, box.u_max, box.v_max};
  }
  j["answer"] = std::move(answer);
  j["provenance"] = qa.provenance;
  return j;
}

inline std::string to_jsonl_line(const QAPair& qa) { return to_json(qa).dump(); }

namespace detail {

template <class J>
std::vector<Vec2> points_from_json(const J& v, const std::string& where) {
  if (!v.is_array()) parse_fail(where, "expected a list of [u, v] points");
  std::vector<Vec2> out;
  for (const auto& p : v) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      parse_fail(where, "expected [u, v] number pairs");
    out.emplace_back(p[0].template get<double>(), p[1].template get<double>());
  }
  return out;
}

}  // namespace detail

/// Parses one generated record, enforcing the category/answer-shape contract.
inline QAPair qa_from_json(const nlohmann::ordered_json& j, const std::string& where = "record") {
  using namespace detail;
  QAPair qa;
  qa.id = string(field(j, "id", where), where + ".id");
  qa.scene_id = string(field(j, "scene_id", where), where + ".scene_id");
  qa.view_id = string(field(j, "view_id", where), where + ".view_id");
  qa.image_ref = string(field(j, "image_ref", where), where + ".image_ref");
  const auto cat = parse_category(string(field(j, "category", where), where + ".category"));
  if (!cat) parse_fail(where, "unknown category");
  qa.category = *cat;
  const auto& frame = field(j, "frame", where);
  if (!frame.is_null()) {
    auto f = parse_frame(string(frame, where + ".frame"));
    if (!f) parse_fail(where, "unknown frame");
    qa.frame = *f;
  }
  if ((qa.category == Category::grounding) == qa.frame.has_value())
    parse_fail(where, "frame must be null exactly for grounding records");
  qa.question = string(field(j, "question", where), where + ".question");

  const auto& answer = field(j, "answer", where);
  const std::string type = string(field(answer, "type", where + ".answer"), where + ".answer.type");
  const auto& value = field(answer, "value", where + ".answer");
  const std::string expected = qa.category == Category::context     ? "points"
                               : qa.category == Category::grounding ? "box"
                                                                    : "bool";
  if (type != expected)
    parse_fail(where, "answer type '" + type + "' does not match category " +
                          std::string(to_string(qa.category)));
  if (type == "bool") {
    if (!value.is_boolean()) parse_fail(where, "answer type 'bool' needs a boolean value");
    qa.answer = value.get<bool>();
  } else if (type == "points") {
    auto pts = points_from_json(value, where + ".answer.value");
    if (pts.empty()) parse_fail(where, "context answer has no points");
    qa.answer = std::move(pts);
    if (auto it = answer.find("points_3d"); it != answer.end()) {
      if (!it->is_array()) parse_fail(where, "points_3d must be a list");
      for (const auto& p : *it) qa.points_3d.push_back(vec3(p, where + ".answer.points_3d"));
    }
  } else {
    if (!value.is_array() || value.size() != 4) parse_fail(where, "box answer needs 4 numbers");
    PixelBox b{number(value[0], where), number(value[1], where), number(value[2], where),
               number(value[3], where)};
    if (!(b.u_min < b.u_max && b.v_min < b.v_max)) parse_fail(where, "box answer is empty");
    qa.answer = b;
  }
  const auto& prov = field(j, "provenance", where);
  if (!prov.is_object()) parse_fail(where, "provenance must be an object");
  qa.provenance = prov;
  return qa;
}

}  // namespace spatialqa
