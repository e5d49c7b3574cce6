#pragma once

#include <cmath>
#include <span>

#include "ippal/core.hpp"

namespace ippal {

// Point-to-point flight model: constant acceleration/deceleration +-a capped
// at v_max.
struct KinematicModel {
    double v_max = 2.0;   // m/s
    double accel = 2.0;   // m/s^2
};

// Flight time between two measurement positions. Trapezoidal velocity profile
// when the distance allows reaching v_max, triangular otherwise.
inline double flight_time(const KinematicModel& km, const Waypoint& p, const Waypoint& q) {
    if (km.v_max <= 0.0 || km.accel <= 0.0) throw ConfigError("kinematics must be positive");
    const double d = distance3(p, q);
    const double ramp = km.v_max * km.v_max / km.accel;
    if (d >= ramp) return d / km.v_max + km.v_max / km.accel;
    return 2.0 * std::sqrt(d / km.accel);
}

// Total cost of executing a path; a single waypoint costs nothing.
inline double path_cost(const KinematicModel& km, std::span<const Waypoint> path) {
    double total = 0.0;
    for (size_t i = 1; i < path.size(); ++i) total += flight_time(km, path[i - 1], path[i]);
    return total;
}

}  // namespace ippal
