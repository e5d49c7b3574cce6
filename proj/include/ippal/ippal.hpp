#pragma once

// Informative path planning for active learning in semantic terrain mapping:
// synthetic terrains, a probabilistic pixel classifier, acquisition scores,
// multi-layer grid mapping, budgeted planners, and the mission harness.

#include "ippal/acquire.hpp"
#include "ippal/cli.hpp"
#include "ippal/cmaes.hpp"
#include "ippal/config.hpp"
#include "ippal/core.hpp"
#include "ippal/io.hpp"
#include "ippal/kinematics.hpp"
#include "ippal/map.hpp"
#include "ippal/metrics.hpp"
#include "ippal/mission.hpp"
#include "ippal/model.hpp"
#include "ippal/planners.hpp"
#include "ippal/rng.hpp"
#include "ippal/snapshot.hpp"
#include "ippal/terrain.hpp"
