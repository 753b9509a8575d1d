#pragma once

// Question wording. Every generated question string comes from this table.
//
// Placeholders: {target} {anchor} {relation} {frame}. {frame} expands to the
// frame clause including its leading ", " (or nothing when frame clauses are
// omitted); a frame clause may itself contain {anchor}.

#include <array>
#include <string_view>

namespace spatialqa::templates {

inline constexpr std::string_view kConfiguration = "Is the {target} {relation} the {anchor}{frame}?";
inline constexpr std::string_view kContext =
    "Identify points in the empty space {relation} the {anchor}{frame}.";
inline constexpr std::string_view kCompatibility = "Can the {target} fit {relation} the {anchor}{frame}?";
inline constexpr std::string_view kGrounding = "Locate the {target}.";

// Indexed by RelationKind: left, right, above, below, front, behind.
inline constexpr std::array<std::string_view, 6> kPrepositions{
    "to the left of", "to the right of", "above", "below", "in front of", "behind"};

// Indexed by FrameKind: ego, world, object.
inline constexpr std::array<std::string_view, 3> kFrameClauses{
    ", from the camera's point of view", ", in the world frame", ", from the {anchor}'s perspective"};

}  // namespace spatialqa::templates
