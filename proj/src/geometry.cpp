// SPDX-License-Identifier: Apache-2.0
#include "thzloc/geometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <sstream>

#include "thzloc/errors.hpp"

namespace thzloc {

double wrap_pi(double a) {
    double w = std::remainder(a, 2.0 * M_PI);
    if (w <= -M_PI) w += 2.0 * M_PI;
    return w;
}

void check_euler(const Vec3 &o) {
    const double eps = 1e-12;
    auto fail = [&](const char *name, double v, const char *range) {
        std::ostringstream os;
        os << "Euler angle " << name << " = " << v << " outside " << range;
        throw DomainError(os.str());
    };
    if (!(o(0) > -M_PI - eps && o(0) <= M_PI + eps)) fail("alpha", o(0), "(-pi, pi]");
    if (!(o(1) >= -M_PI_2 - eps && o(1) <= M_PI_2 + eps)) fail("beta", o(1), "[-pi/2, pi/2]");
    if (!(o(2) > -M_PI - eps && o(2) <= M_PI + eps)) fail("gamma", o(2), "(-pi, pi]");
}

Mat3 rotation_from_euler(const Vec3 &o) {
    check_euler(o);
    return rotation_matrix<double>(o);
}

Vec3 euler_from_rotation(const Mat3 &R) {
    if (!R.allFinite() || (R.transpose() * R - Mat3::Identity()).norm() > 1e-9 || R.determinant() <= 0.0)
        throw DomainError("euler_from_rotation: matrix is not a proper rotation");
    const double s = std::clamp(-R(2, 0), -1.0, 1.0);
    double alpha, beta, gamma;
    if (std::abs(s) > 1.0 - 1e-14) {
        // gimbal lock: beta = +-pi/2, gamma := 0
        beta = s > 0 ? M_PI_2 : -M_PI_2;
        gamma = 0.0;
        alpha = std::atan2(-R(0, 1), R(1, 1));
    } else {
        beta = std::asin(s);
        alpha = std::atan2(R(1, 0), R(0, 0));
        gamma = std::atan2(R(2, 1), R(2, 2));
    }
    return Vec3(wrap_pi(alpha), beta, wrap_pi(gamma));
}

Vec3 global_to_local(const Vec3 &p, const Pose &pose) {
    return rotation_from_euler(pose.orientation).transpose() * (p - pose.position);
}

Vec3 local_to_global(const Vec3 &p_local, const Pose &pose) {
    return rotation_from_euler(pose.orientation) * p_local + pose.position;
}

DirectionDistance direction_and_distance(const Vec3 &pA, const Vec3 &pB) {
    Vec3 diff = pB - pA;
    double d = diff.norm();
    if (!(d > 0.0)) throw DegenerateGeometry("direction_and_distance: coincident points");
    return {diff / d, d};
}

AnglePair angles_from_direction(const Vec3 &t) {
    if (std::abs(t.norm() - 1.0) > 1e-9) throw DomainError("angles_from_direction: input is not a unit vector");
    AnglePair a;
    double h = std::hypot(t(0), t(1));
    a.azimuth = h > 1e-12 ? wrap_pi(std::atan2(t(1), t(0))) : 0.0;
    a.elevation = std::asin(std::clamp(t(2), -1.0, 1.0));
    return a;
}

Vec3 direction_from_angles(const AnglePair &a) {
    return direction_from_angles<double>(a.azimuth, a.elevation);
}

} // namespace thzloc
