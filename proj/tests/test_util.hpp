#pragma once

#include <random>

#include "corrpose/geometry.hpp"

namespace corrpose::testutil {

inline Mat3 random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec3 axis{gauss(rng), gauss(rng), gauss(rng)};
    while (axis.norm() < 1e-9) axis = {gauss(rng), gauss(rng), gauss(rng)};
    std::uniform_real_distribution<double> angle(0.0, M_PI);
    return rotation_exp(axis.normalized() * angle(rng));
}

inline Pose random_pose(std::mt19937_64& rng, double trans_scale = 0.5, double z_offset = 2.0) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Pose p;
    p.rotation = random_rotation(rng);
    p.translation = {trans_scale * unif(rng), trans_scale * unif(rng),
                     z_offset + 0.5 * trans_scale * unif(rng)};
    return p;
}

inline double pose_rotation_error(const Pose& a, const Pose& b) {
    return rotation_geodesic_angle(a.rotation, b.rotation);
}

inline double pose_translation_error(const Pose& a, const Pose& b) {
    return (a.translation - b.translation).norm();
}

}  // namespace corrpose::testutil
