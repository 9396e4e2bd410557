// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "thzloc/errors.hpp"
#include "thzloc/geometry.hpp"
#include "thzloc/rng.hpp"

using namespace thzloc;

TEST(Rotation, IdentityAtZero) { EXPECT_LT((rotation_from_euler(Vec3::Zero()) - Mat3::Identity()).norm(), 1e-15); }

TEST(Rotation, QuarterTurnYaw) {
    Mat3 want;
    want << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    EXPECT_LT((rotation_from_euler(Vec3(M_PI / 2, 0, 0)) - want).norm(), 1e-15);
}

TEST(Rotation, DefaultUeOrientationEntry) {
    EXPECT_NEAR(rotation_from_euler(Vec3(5 * M_PI / 6, 0, 0))(0, 0), -std::sqrt(3.0) / 2, 1e-15);
}

TEST(Rotation, OutOfRangeThrows) {
    EXPECT_THROW(rotation_from_euler(Vec3(4.0, 0, 0)), DomainError);
    EXPECT_THROW(rotation_from_euler(Vec3(0, 1.7, 0)), DomainError);
    EXPECT_THROW(rotation_from_euler(Vec3(0, 0, -3.2)), DomainError);
    EXPECT_NO_THROW(rotation_from_euler(Vec3(M_PI, M_PI / 2, M_PI)));
}

TEST(Rotation, OrthogonalForRandomAngles) {
    Rng rng(3, "rot");
    for (int i = 0; i < 200; ++i) {
        const Vec3 o(rng.uniform(-M_PI, M_PI), rng.uniform(-M_PI / 2, M_PI / 2), rng.uniform(-M_PI, M_PI));
        const Mat3 R = rotation_from_euler(o);
        EXPECT_LT((R.transpose() * R - Mat3::Identity()).norm(), 1e-12);
        EXPECT_NEAR(R.determinant(), 1.0, 1e-12);
    }
}

TEST(Euler, RoundTrip) {
    EXPECT_LT(euler_from_rotation(Mat3::Identity()).norm(), 1e-15);
    const Vec3 o(0.3, -0.2, 1.1);
    EXPECT_LT((euler_from_rotation(rotation_from_euler(o)) - o).norm(), 1e-12);
    Rng rng(4, "euler");
    for (int i = 0; i < 200; ++i) {
        const Vec3 e(rng.uniform(-M_PI, M_PI), rng.uniform(-1.5, 1.5), rng.uniform(-M_PI, M_PI));
        EXPECT_LT((rotation_from_euler(euler_from_rotation(rotation_from_euler(e))) - rotation_from_euler(e)).norm(), 1e-10);
    }
}

TEST(Euler, GimbalLockSetsGammaZero) {
    // beta = pi/2 with alpha 0.4 and gamma 0.7: only alpha - gamma is observable
    const Mat3 R = rotation_from_euler(Vec3(0.4, M_PI / 2, 0.7));
    const Vec3 e = euler_from_rotation(R);
    EXPECT_NEAR(e(1), M_PI / 2, 1e-12);
    EXPECT_EQ(e(2), 0.0);
    EXPECT_LT((rotation_from_euler(e) - R).norm(), 1e-10);
}

TEST(Euler, NonOrthogonalThrows) {
    Mat3 R = Mat3::Identity();
    R(0, 1) = 0.1;
    EXPECT_THROW(euler_from_rotation(R), DomainError);
}

TEST(Frames, LocalGlobal) {
    Pose pose;
    pose.position = Vec3(1, 2, 3);
    EXPECT_LT(global_to_local(pose.position, pose).norm(), 1e-15);
    EXPECT_LT((global_to_local(Vec3(1, 2, 3), Pose{}) - Vec3(1, 2, 3)).norm(), 1e-15);
    Pose yaw;
    yaw.orientation = Vec3(M_PI / 2, 0, 0);
    EXPECT_LT((global_to_local(Vec3(0, 1, 0), yaw) - Vec3(1, 0, 0)).norm(), 1e-15);
    Pose q{Vec3(0.5, -1, 2), Vec3(0.2, 0.3, -0.4)};
    const Vec3 p(3, 4, -5);
    EXPECT_LT((local_to_global(global_to_local(p, q), q) - p).norm(), 1e-12);
}

TEST(Frames, DirectionAndDistance) {
    auto dd = direction_and_distance(Vec3::Zero(), Vec3(10, 0, 0));
    EXPECT_LT((dd.direction - Vec3(1, 0, 0)).norm(), 1e-15);
    EXPECT_DOUBLE_EQ(dd.distance, 10.0);
    auto ris = direction_and_distance(Vec3::Zero(), Vec3(5, 5, 0));
    EXPECT_NEAR(ris.distance, 5 * std::sqrt(2.0), 1e-14);
    auto back = direction_and_distance(Vec3(5, 5, 0), Vec3::Zero());
    EXPECT_LT((back.direction + ris.direction).norm(), 1e-15);
    EXPECT_DOUBLE_EQ(back.distance, ris.distance);
    EXPECT_THROW(direction_and_distance(Vec3(1, 1, 1), Vec3(1, 1, 1)), DegenerateGeometry);
}

TEST(Angles, Conversions) {
    auto a = angles_from_direction(Vec3(1, 0, 0));
    EXPECT_EQ(a.azimuth, 0.0);
    EXPECT_EQ(a.elevation, 0.0);
    a = angles_from_direction(Vec3(0, 0, 1));
    EXPECT_EQ(a.azimuth, 0.0);
    EXPECT_NEAR(a.elevation, M_PI / 2, 1e-15);
    a = angles_from_direction(Vec3(0, 1, 0));
    EXPECT_NEAR(a.azimuth, M_PI / 2, 1e-15);
    EXPECT_THROW(angles_from_direction(Vec3(2, 0, 0)), DomainError);

    EXPECT_LT((direction_from_angles(AnglePair{0, 0}) - Vec3(1, 0, 0)).norm(), 1e-15);
    EXPECT_LT((direction_from_angles(AnglePair{M_PI / 2, 0}) - Vec3(0, 1, 0)).norm(), 1e-15);
    EXPECT_LT((direction_from_angles(AnglePair{M_PI / 4, M_PI / 4}) - Vec3(0.5, 0.5, std::sqrt(2.0) / 2)).norm(), 1e-15);
}

TEST(Angles, RoundTripOnSphere) {
    Rng rng(5, "sphere");
    for (int i = 0; i < 500; ++i) {
        Vec3 t(rng.normal(), rng.normal(), rng.normal());
        t.normalize();
        if (std::abs(t(2)) > 1 - 1e-9) continue;
        EXPECT_LT((direction_from_angles(angles_from_direction(t)) - t).norm(), 1e-12);
    }
}

TEST(Angles, WrapPi) {
    EXPECT_DOUBLE_EQ(wrap_pi(M_PI), M_PI);
    EXPECT_DOUBLE_EQ(wrap_pi(-M_PI), M_PI);
    EXPECT_NEAR(wrap_pi(3 * M_PI / 2), -M_PI / 2, 1e-15);
}
