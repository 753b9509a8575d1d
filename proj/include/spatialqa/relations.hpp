#pragma once

// Binary spatial-configuration relations between visible object pairs, in
// ego, world and object frames.

#include "spatialqa/geometry.hpp"
#include "spatialqa/scene.hpp"

#include <algorithm>
#include <map>
#include <string>
#include <tuple>
#include <vector>

namespace spatialqa {

struct SpatialRelation {
  std::string view_id;
  std::string anchor_id;
  std::string target_id;
  RelationKind relation = RelationKind::left;
  FrameKind frame = FrameKind::ego;
  bool holds = false;

  friend bool operator==(const SpatialRelation&, const SpatialRelation&) = default;
};

struct RelationConfig {
  double margin = 0.05;        // meters
  double min_fraction = 0.5;   // of box corners inside the image
  std::size_t max_pairs = 0;   // ordered pairs per view; 0 = unlimited
};

inline RelationKind mirror(RelationKind r) {
  switch (r) {
    case RelationKind::left: return RelationKind::right;
    case RelationKind::right: return RelationKind::left;
    case RelationKind::above: return RelationKind::below;
    case RelationKind::below: return RelationKind::above;
    case RelationKind::front: return RelationKind::behind;
    case RelationKind::behind: return RelationKind::front;
  }
  return r;
}

/// Fraction of the 8 box corners that land inside the image with positive depth.
inline double corner_visibility(const OrientedBox& box, const CameraView& view) {
  int inside = 0;
  for (const auto& c : box.corners()) {
    if (auto uv = project(c, view); uv && inside_image(*uv, view.intrinsics)) ++inside;
  }
  return inside / 8.0;
}

/// True when the camera ray to the object's center meets no other box before
/// it meets the object's own box.
inline bool center_unoccluded(const Scene& scene, const CameraView& view,
                              const ObjectInstance& obj) {
  const Vec3 to_center = obj.box.center - view.center();
  if (to_center.norm() == 0.0) return true;
  const Ray ray{view.center(), to_center.normalized()};
  const double own = ray_box_intersect(ray, obj.box).value_or(to_center.norm());
  for (const auto& other : scene.objects) {
    if (other.id == obj.id) continue;
    if (auto t = ray_box_intersect(ray, other.box); t && *t < own) return false;
  }
  return true;
}

inline std::vector<ObjectInstance> visible_objects(const Scene& scene, const CameraView& view,
                                                   double min_fraction = 0.5) {
  std::vector<ObjectInstance> out;
  for (const auto& obj : scene.objects) {
    if (corner_visibility(obj.box, view) < min_fraction) continue;
    if (!center_unoccluded(scene, view, obj)) continue;
    out.push_back(obj);
  }
  return out;
}

/// Keeps the objects whose label occurs exactly once.
inline std::vector<ObjectInstance> unique_label_objects(const std::vector<ObjectInstance>& objects) {
  std::map<std::string, int> counts;
  for (const auto& o : objects) ++counts[o.label];
  std::vector<ObjectInstance> out;
  for (const auto& o : objects)
    if (counts[o.label] == 1) out.push_back(o);
  return out;
}

/// Signed displacement of the target along the relation's axis, in meters.
/// Positive means the relation leans true.
///
/// ego:    left -x, right +x, above -y, below +y, front -z, behind +z (camera axes)
/// object: front +x, behind -x, left +y, right -y, above +z, below -z (anchor axes)
/// world:  above/below on global z; horizontal relations use the ego axes
inline double relation_displacement(const ObjectInstance& anchor, const ObjectInstance& target,
                                    RelationKind relation, FrameKind frame,
                                    const CameraView& view) {
  const Vec3 delta_world = target.box.center - anchor.box.center;
  Vec3 d;
  if (frame == FrameKind::object) {
    d = anchor.box.heading.transpose() * delta_world;
    switch (relation) {
      case RelationKind::front: return d.x();
      case RelationKind::behind: return -d.x();
      case RelationKind::left: return d.y();
      case RelationKind::right: return -d.y();
      case RelationKind::above: return d.z();
      case RelationKind::below: return -d.z();
    }
  }
  if (frame == FrameKind::world) {
    if (relation == RelationKind::above) return delta_world.z();
    if (relation == RelationKind::below) return -delta_world.z();
  }
  d = view.extrinsics.rotation.transpose() * delta_world;
  switch (relation) {
    case RelationKind::left: return -d.x();
    case RelationKind::right: return d.x();
    case RelationKind::above: return -d.y();
    case RelationKind::below: return d.y();
    case RelationKind::front: return -d.z();
    case RelationKind::behind: return d.z();
  }
  return 0.0;
}

inline bool evaluate_relation(const ObjectInstance& anchor, const ObjectInstance& target,
                              RelationKind relation, FrameKind frame, const CameraView& view,
                              double margin = 0.05) {
  return relation_displacement(anchor, target, relation, frame, view) > margin;
}

/// Ordered pairs (anchor, target) of visible unique-label objects, in id order.
/// max_pairs > 0 keeps the first max_pairs of them.
inline std::vector<std::pair<ObjectInstance, ObjectInstance>> configuration_pairs(
    const Scene& scene, const CameraView& view, const RelationConfig& config) {
  auto objects = unique_label_objects(visible_objects(scene, view, config.min_fraction));
  std::sort(objects.begin(), objects.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  std::vector<std::pair<ObjectInstance, ObjectInstance>> pairs;
  for (const auto& a : objects)
    for (const auto& t : objects)
      if (a.id != t.id) pairs.emplace_back(a, t);
  if (config.max_pairs > 0 && pairs.size() > config.max_pairs) pairs.resize(config.max_pairs);
  return pairs;
}

/// Every relation for every ordered pair in every frame, sorted by
/// (anchor_id, target_id, relation, frame).
inline std::vector<SpatialRelation> extract_configuration(const Scene& scene,
                                                          const CameraView& view,
                                                          const RelationConfig& config = {}) {
  std::vector<SpatialRelation> out;
  for (const auto& [anchor, target] : configuration_pairs(scene, view, config)) {
    for (auto r : kAllRelations)
      for (auto f : kAllFrames)
        out.push_back({view.view_id, anchor.id, target.id, r, f,
                       evaluate_relation(anchor, target, r, f, view, config.margin)});
  }
  std::sort(out.begin(), out.end(), [](const SpatialRelation& a, const SpatialRelation& b) {
    return std::tie(a.anchor_id, a.target_id, a.relation, a.frame) <
           std::tie(b.anchor_id, b.target_id, b.relation, b.frame);
  });
  return out;
}

inline nlohmann::ordered_json to_json(const SpatialRelation& r) {
  return {{"view_id", r.view_id},   {"anchor_id", r.anchor_id},
          {"target_id", r.target_id}, {"relation", to_string(r.relation)},
          {"frame", to_string(r.frame)}, {"holds", r.holds}};
}

}  // namespace spatialqa
