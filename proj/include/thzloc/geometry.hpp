// SPDX-License-Identifier: Apache-2.0
// Coordinate frames, Z-Y-X Euler rotations, direction vectors and angle conversions.
#pragma once

#include <Eigen/Core>
#include <cmath>

#include "thzloc/dual.hpp"

namespace thzloc {

template <class T>
using Vec3T = Eigen::Matrix<T, 3, 1>;
template <class T>
using Mat3T = Eigen::Matrix<T, 3, 3>;
using Vec3 = Vec3T<double>;
using Mat3 = Mat3T<double>;

inline constexpr double kSpeedOfLight = 299792458.0; // m/s

// Position in meters, orientation as Euler angles (alpha, beta, gamma) in radians.
struct Pose {
    Vec3 position = Vec3::Zero();
    Vec3 orientation = Vec3::Zero();
};

struct AnglePair {
    double azimuth = 0.0;   // (-pi, pi]
    double elevation = 0.0; // [-pi/2, pi/2]
};

// Wrap an angle into (-pi, pi].
double wrap_pi(double a);

// Throws DomainError when any Euler angle is outside its canonical range.
void check_euler(const Vec3 &o);

// Rotation matrix for Euler angles; no range check (used with perturbed values).
template <class T>
Mat3T<T> rotation_matrix(const Vec3T<T> &o) {
    using std::cos;
    using std::sin;
    const T ca = cos(o(0)), sa = sin(o(0));
    const T cb = cos(o(1)), sb = sin(o(1));
    const T cg = cos(o(2)), sg = sin(o(2));
    Mat3T<T> R;
    R(0, 0) = ca * cb;
    R(0, 1) = ca * sb * sg - cg * sa;
    R(0, 2) = sa * sg + ca * cg * sb;
    R(1, 0) = cb * sa;
    R(1, 1) = ca * cg + sa * sb * sg;
    R(1, 2) = cg * sa * sb - ca * sg;
    R(2, 0) = -sb;
    R(2, 1) = cb * sg;
    R(2, 2) = cb * cg;
    return R;
}

Mat3 rotation_from_euler(const Vec3 &o);
Vec3 euler_from_rotation(const Mat3 &R);

Vec3 global_to_local(const Vec3 &p, const Pose &pose);
Vec3 local_to_global(const Vec3 &p_local, const Pose &pose);

struct DirectionDistance {
    Vec3 direction;
    double distance = 0.0;
};
DirectionDistance direction_and_distance(const Vec3 &pA, const Vec3 &pB);

AnglePair angles_from_direction(const Vec3 &t);
Vec3 direction_from_angles(const AnglePair &a);

// Unchecked generic versions for the differentiable model.
template <class T>
Vec3T<T> direction_from_angles(const T &az, const T &el) {
    using std::cos;
    using std::sin;
    const T ce = cos(el);
    return Vec3T<T>(cos(az) * ce, sin(az) * ce, sin(el));
}

// Azimuth/elevation of a (not necessarily normalized) vector. Scale invariant.
template <class T>
void angles_of(const Vec3T<T> &t, T &az, T &el) {
    using std::atan2;
    using std::sqrt;
    const T h = sqrt(t(0) * t(0) + t(1) * t(1));
    az = value(h) > 0.0 ? T(atan2(t(1), t(0))) : T(0.0);
    el = atan2(t(2), h);
}

} // namespace thzloc
