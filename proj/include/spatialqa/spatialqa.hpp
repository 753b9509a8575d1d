#pragma once

#include "spatialqa/eval.hpp"
#include "spatialqa/fit.hpp"
#include "spatialqa/geometry.hpp"
#include "spatialqa/occupancy.hpp"
#include "spatialqa/pipeline.hpp"
#include "spatialqa/qa.hpp"
#include "spatialqa/random.hpp"
#include "spatialqa/relations.hpp"
#include "spatialqa/scene.hpp"
#include "spatialqa/space_sampler.hpp"
