#pragma once

// Scene data model: labeled oriented boxes plus calibrated camera views,
// with JSON ingestion and invariant checking.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/LU>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace spatialqa {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> violations)
      : std::runtime_error(join(violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }
  std::vector<std::string> violations_;
};

enum class FrameKind { ego, world, object };
enum class RelationKind { left, right, above, below, front, behind };

inline constexpr std::array<FrameKind, 3> kAllFrames{FrameKind::ego, FrameKind::world,
                                                     FrameKind::object};
inline constexpr std::array<RelationKind, 6> kAllRelations{
    RelationKind::left,  RelationKind::right, RelationKind::above,
    RelationKind::below, RelationKind::front, RelationKind::behind};
/// Relations that have a ground-plane region (everything but above/below).
inline constexpr std::array<RelationKind, 4> kHorizontalRelations{
    RelationKind::left, RelationKind::right, RelationKind::front, RelationKind::behind};

inline std::string_view to_string(FrameKind f) {
  switch (f) {
    case FrameKind::ego: return "ego";
    case FrameKind::world: return "world";
    case FrameKind::object: return "object";
  }
  return "?";
}

inline std::string_view to_string(RelationKind r) {
  switch (r) {
    case RelationKind::left: return "left";
    case RelationKind::right: return "right";
    case RelationKind::above: return "above";
    case RelationKind::below: return "below";
    case RelationKind::front: return "front";
    case RelationKind::behind: return "behind";
  }
  return "?";
}

inline std::optional<FrameKind> parse_frame(std::string_view s) {
  for (auto f : kAllFrames)
    if (to_string(f) == s) return f;
  return std::nullopt;
}

inline std::optional<RelationKind> parse_relation(std::string_view s) {
  for (auto r : kAllRelations)
    if (to_string(r) == s) return r;
  return std::nullopt;
}

inline bool is_horizontal(RelationKind r) {
  return r != RelationKind::above && r != RelationKind::below;
}

/// Rigid transform, camera (or box) local -> world.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& local) const { return rotation * local + translation; }
  Vec3 apply_inverse(const Vec3& world) const {
    return rotation.transpose() * (world - translation);
  }
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;
};

/// Box with local +x as the object's front, local +z nominally up.
struct OrientedBox {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();
  Mat3 heading = Mat3::Identity();  // box -> world

  Vec3 front() const { return heading.col(0); }
  Vec3 to_local(const Vec3& world) const { return heading.transpose() * (world - center); }
  Vec3 to_world(const Vec3& local) const { return heading * local + center; }

  std::array<Vec3, 8> corners() const {
    std::array<Vec3, 8> out;
    for (int i = 0; i < 8; ++i) {
      const Vec3 sign((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0);
      out[i] = to_world(sign.cwiseProduct(half_extents));
    }
    return out;
  }

  bool contains(const Vec3& world) const {
    const Vec3 local = to_local(world);
    return (local.cwiseAbs().array() <= half_extents.array()).all();
  }

  double z_min() const {
    // Vertical half-size of the rotated box.
    return center.z() - heading.row(2).cwiseAbs().dot(half_extents);
  }
  double z_max() const { return center.z() + heading.row(2).cwiseAbs().dot(half_extents); }
};

struct ObjectInstance {
  std::string id;
  std::string label;
  OrientedBox box;
};

struct CameraView {
  std::string view_id;
  std::string image_ref;
  CameraIntrinsics intrinsics;
  Pose extrinsics;  // camera -> world; camera axes +x right, +y down, +z forward

  const Vec3& center() const { return extrinsics.translation; }
};

struct Scene {
  std::string scene_id;
  std::string up_axis = "z";
  std::vector<ObjectInstance> objects;
  std::vector<CameraView> views;

  const ObjectInstance* find_object(std::string_view id) const {
    for (const auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }
  const CameraView* find_view(std::string_view id) const {
    for (const auto& v : views)
      if (v.view_id == id) return &v;
    return nullptr;
  }
};

inline constexpr double kRotationTolerance = 1e-6;

namespace detail {

inline bool finite(const Vec3& v) { return v.allFinite(); }

inline std::string fmt_num(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

inline void check_rotation(const Mat3& r, const std::string& who, const std::string& field,
                           std::vector<std::string>& out) {
  if (!r.allFinite()) {
    out.push_back(who + ": " + field + " has non-finite entries");
    return;
  }
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho >= kRotationTolerance)
    out.push_back(who + ": " + field + " is not orthonormal (|R^T R - I| = " + fmt_num(ortho) +
                  ")");
  const double det = r.determinant();
  if (std::abs(det - 1.0) > kRotationTolerance)
    out.push_back(who + ": " + field + " is not a proper rotation (det = " + fmt_num(det) + ")");
}

}  // namespace detail

/// Returns one description per violated invariant; empty iff the scene is valid.
inline std::vector<std::string> validate_scene(const Scene& scene) {
  std::vector<std::string> out;
  static constexpr const char* kAxis = "xyz";

  if (scene.up_axis != "z") out.push_back("scene: up_axis must be \"z\" (got \"" + scene.up_axis + "\")");
  if (scene.objects.empty()) out.push_back("scene: needs at least one object");
  if (scene.views.empty()) out.push_back("scene: needs at least one view");

  std::unordered_set<std::string> ids;
  for (const auto& o : scene.objects) {
    const std::string who = "object '" + o.id + "'";
    if (o.id.empty()) out.push_back("object with empty id");
    if (!ids.insert(o.id).second) out.push_back(who + ": duplicate object id");
    if (o.label.empty()) out.push_back(who + ": label is empty");
    if (!detail::finite(o.box.center)) out.push_back(who + ": center has non-finite entries");
    for (int a = 0; a < 3; ++a) {
      const double h = o.box.half_extents[a];
      if (!std::isfinite(h))
        out.push_back(who + ": half_extents." + kAxis[a] + " is not finite");
      else if (h <= 0.0)
        out.push_back(who + ": half_extents." + std::string(1, kAxis[a]) + " must be > 0 (got " +
                      detail::fmt_num(h) + ")");
    }
    detail::check_rotation(o.box.heading, who, "heading", out);
  }

  std::unordered_set<std::string> view_ids;
  for (const auto& v : scene.views) {
    const std::string who = "view '" + v.view_id + "'";
    if (v.view_id.empty()) out.push_back("view with empty view_id");
    if (!view_ids.insert(v.view_id).second) out.push_back(who + ": duplicate view id");
    const auto& k = v.intrinsics;
    if (!(std::isfinite(k.fx) && k.fx > 0)) out.push_back(who + ": intrinsics.fx must be > 0");
    if (!(std::isfinite(k.fy) && k.fy > 0)) out.push_back(who + ": intrinsics.fy must be > 0");
    if (k.width <= 0) out.push_back(who + ": intrinsics.width must be positive");
    if (k.height <= 0) out.push_back(who + ": intrinsics.height must be positive");
    if (!(std::isfinite(k.cx) && k.cx >= 0 && k.cx <= k.width))
      out.push_back(who + ": intrinsics.cx must lie in [0, width]");
    if (!(std::isfinite(k.cy) && k.cy >= 0 && k.cy <= k.height))
      out.push_back(who + ": intrinsics.cy must lie in [0, height]");
    if (!detail::finite(v.extrinsics.translation))
      out.push_back(who + ": extrinsics.translation has non-finite entries");
    detail::check_rotation(v.extrinsics.rotation, who, "extrinsics.rotation", out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

using nlohmann::json;

[[noreturn]] inline void parse_fail(const std::string& where, const std::string& what) {
  throw ParseError(where + ": " + what);
}

template <class J>
const J& field(const J& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) parse_fail(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) parse_fail(where, std::string("missing field '") + key + "'");
  return *it;
}

template <class J>
double number(const J& j, const std::string& where) {
  if (!j.is_number()) parse_fail(where, "expected a number");
  return j.template get<double>();
}

template <class J>
int positive_int(const J& j, const std::string& where) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) parse_fail(where, "expected an integer");
  const auto v = j.template get<long long>();
  if (v <= 0 || v > 1'000'000) parse_fail(where, "expected a positive integer");
  return static_cast<int>(v);
}

template <class J>
std::string string(const J& j, const std::string& where) {
  if (!j.is_string()) parse_fail(where, "expected a string");
  return j.template get<std::string>();
}

template <class J>
Vec3 vec3(const J& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) parse_fail(where, "expected an array of 3 numbers");
  return {number(j[0], where), number(j[1], where), number(j[2], where)};
}

template <class J>
Mat3 mat3(const J& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) parse_fail(where, "expected a 3x3 array");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    const Vec3 row = vec3(j[r], where);
    m.row(r) = row.transpose();
  }
  return m;
}

inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline json to_json(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
  return rows;
}

}  // namespace detail

/// Builds a Scene from parsed JSON. Shape problems raise ParseError; invariant
/// violations raise ValidationError.
inline Scene scene_from_json(const nlohmann::json& j) {
  using namespace detail;
  Scene scene;
  scene.scene_id = string(field(j, "scene_id", "scene"), "scene.scene_id");
  scene.up_axis = string(field(j, "up_axis", "scene"), "scene.up_axis");

  const auto& objects = field(j, "objects", "scene");
  if (!objects.is_array()) parse_fail("scene.objects", "expected an array");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    std::string where = "objects[" + std::to_string(i) + "]";
    ObjectInstance obj;
    obj.id = string(field(o, "id", where), where + ".id");
    where += " ('" + obj.id + "')";
    obj.label = string(field(o, "label", where), where + ".label");
    obj.box.center = vec3(field(o, "center", where), where + ".center");
    obj.box.half_extents = vec3(field(o, "half_extents", where), where + ".half_extents");
    obj.box.heading = mat3(field(o, "heading", where), where + ".heading");
    scene.objects.push_back(std::move(obj));
  }

  const auto& views = field(j, "views", "scene");
  if (!views.is_array()) parse_fail("scene.views", "expected an array");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const auto& v = views[i];
    std::string where = "views[" + std::to_string(i) + "]";
    CameraView view;
    view.view_id = string(field(v, "view_id", where), where + ".view_id");
    where += " ('" + view.view_id + "')";
    view.image_ref = string(field(v, "image_ref", where), where + ".image_ref");
    const auto& k = field(v, "intrinsics", where);
    const std::string kw = where + ".intrinsics";
    view.intrinsics.fx = number(field(k, "fx", kw), kw + ".fx");
    view.intrinsics.fy = number(field(k, "fy", kw), kw + ".fy");
    view.intrinsics.cx = number(field(k, "cx", kw), kw + ".cx");
    view.intrinsics.cy = number(field(k, "cy", kw), kw + ".cy");
    view.intrinsics.width = positive_int(field(k, "width", kw), kw + ".width");
    view.intrinsics.height = positive_int(field(k, "height", kw), kw + ".height");
    const auto& e = field(v, "extrinsics", where);
    const std::string ew = where + ".extrinsics";
    view.extrinsics.rotation = mat3(field(e, "rotation", ew), ew + ".rotation");
    view.extrinsics.translation = vec3(field(e, "translation", ew), ew + ".translation");
    scene.views.push_back(std::move(view));
  }

  if (auto violations = validate_scene(scene); !violations.empty())
    throw ValidationError(std::move(violations));
  return scene;
}

inline nlohmann::ordered_json scene_to_json(const Scene& scene) {
  using detail::to_json;
  nlohmann::ordered_json j;
  j["scene_id"] = scene.scene_id;
  j["up_axis"] = scene.up_axis;
  j["objects"] = nlohmann::ordered_json::array();
  for (const auto& o : scene.objects) {
    nlohmann::ordered_json jo;
    jo["id"] = o.id;
    jo["label"] = o.label;
    jo["center"] = to_json(o.box.center);
    jo["half_extents"] = to_json(o.box.half_extents);
    jo["heading"] = to_json(o.box.heading);
    j["objects"].push_back(std::move(jo));
  }
  j["views"] = nlohmann::ordered_json::array();
  for (const auto& v : scene.views) {
    nlohmann::ordered_json jv;
    jv["view_id"] = v.view_id;
    jv["image_ref"] = v.image_ref;
    jv["intrinsics"] = {{"fx", v.intrinsics.fx},       {"fy", v.intrinsics.fy},
                        {"cx", v.intrinsics.cx},       {"cy", v.intrinsics.cy},
                        {"width", v.intrinsics.width}, {"height", v.intrinsics.height}};
    jv["extrinsics"] = {{"rotation", to_json(v.extrinsics.rotation)},
                        {"translation", to_json(v.extrinsics.translation)}};
    j["views"].push_back(std::move(jv));
  }
  return j;
}

inline Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return scene_from_json(j);
}

inline void save_scene(const Scene& scene, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out << scene_to_json(scene).dump(2) << '\n';
}

}  // namespace spatialqa
