#pragma once

#include "mvp/errors.hpp"
#include "mvp/eval.hpp"
#include "mvp/geometry.hpp"
#include "mvp/kdtree.hpp"
#include "mvp/pixel_index.hpp"
#include "mvp/rng.hpp"
#include "mvp/scene.hpp"
#include "mvp/simulator.hpp"
#include "mvp/version.hpp"
#include "mvp/virtual_points.hpp"
#include "mvp/voxelizer.hpp"
