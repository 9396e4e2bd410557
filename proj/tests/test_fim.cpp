// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "thzloc/errors.hpp"
#include "thzloc/fim.hpp"
#include "thzloc/scenarios.hpp"

using namespace thzloc;

namespace {

// Single-element BS and UE, one transmission with x = 1 on every subcarrier.
ForwardModel siso_model(double P_mW = 10.0) {
    ModelConfig c;
    c.bs.role = Role::BS;
    c.ue.role = Role::UE;
    c.ue.pose.position = Vec3(10, 0, 0);
    c.wf.G = 1;
    c.wf.P_mW = P_mW;
    c.wave_model = WaveModel::PWM;
    PilotSchedule s;
    s.G = 1;
    s.K = c.wf.K;
    s.bs_beams = {{Vec3(1, 0, 0)}};
    s.ue_beams = {{Vec3(1, 0, 0)}};
    s.x.assign(c.wf.K, Eigen::VectorXcd::Ones(1));
    return ForwardModel(c, s);
}

Scenario pwm_scenario() {
    return load_scenario("", {"channel.wave_model=pwm", "waveform.transmissions=4"});
}

} // namespace

TEST(MeasurementFim, SingleLinkClosedForm) {
    const ForwardModel m = siso_model();
    const auto &lay = m.measurement_layout();
    ASSERT_EQ(lay.labels(), (std::vector<std::string>{"rho.L", "xi.L", "tau.L"}));
    const Eigen::VectorXd g = lay.values;
    const double rho = g(0), P = 10.0, s2 = m.sigma2();
    const Waveform &wf = m.config().wf;
    double a = 0, b = 0, c = 0;
    for (int k = 0; k < wf.K; ++k) {
        const double w = 2 * M_PI * wf.df(k), ck2 = wf.ck(k) * wf.ck(k);
        a += ck2;
        b += ck2 * w;
        c += ck2 * w * w;
    }
    Eigen::Matrix3d want;
    want << a, 0, 0, 0, rho * rho * a, rho * rho * b, 0, rho * rho * b, rho * rho * c;
    want *= 2 * P / s2;
    const FimResult F = fim_measurement(m, g);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            EXPECT_NEAR(F.matrix(i, j), want(i, j), 1e-9 * std::sqrt(want(i, i) * want(j, j)));
}

TEST(MeasurementFim, DualMatchesCentralDifferences) {
    const Scenario s = pwm_scenario();
    const Realization r = realize(s, 3);
    const ForwardModel m(r.cfg, r.sched);
    const auto g = m.measurement_layout().values;
    const FimResult a = fim_measurement(m, g, DiffMode::Dual), b = fim_measurement(m, g, DiffMode::Central);
    const Eigen::VectorXd d = a.matrix.diagonal().cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd na = d.asDiagonal() * a.matrix * d.asDiagonal(), nb = d.asDiagonal() * b.matrix * d.asDiagonal();
    EXPECT_LT((na - nb).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(StateFim, ChainRuleMatchesDirect) {
    const Scenario s = pwm_scenario();
    const Realization r = realize(s, 3);
    const ForwardModel m(r.cfg, r.sched);
    const auto st = m.state_layout().values;
    const FimResult direct = fim_state_direct(m, st);
    const FimResult Ig = fim_measurement(m, m.gamma_of_state(st));
    const FimResult chain = crb_state(Ig.matrix, m.gamma_jacobian(st), m.state_layout());
    EXPECT_NEAR(chain.peb / direct.peb, 1.0, 1e-6);
    EXPECT_NEAR(chain.oeb / direct.oeb, 1.0, 1e-6);
}

TEST(StateFim, ScalesWithPowerAndTransmissions) {
    const Scenario s = load_scenario("", {"ue.subarrays=[1, 1]", "ue.elements=[1, 1]", "bs.beams=prior"});
    Realization r = realize(s, 1);
    r.cfg.dims = 2;
    const ScalingReport rep = closed_form_scaling_check(r.cfg, r.sched);
    EXPECT_NEAR(rep.ratio_power_4x, 0.5, 1e-6);
    EXPECT_NEAR(rep.ratio_power_2x, 1.0 / std::sqrt(2.0), 1e-6);
    EXPECT_NEAR(rep.ratio_tx_4x, 0.5, 1e-6);
    EXPECT_GT(rep.ratio_distance_2x, 1.0);
    EXPECT_TRUE(rep.pass);
}

TEST(StateFim, EfimOfUserBlockGivesSamePeb) {
    const Realization r = realize(pwm_scenario(), 2);
    const ForwardModel m(r.cfg, r.sched);
    const FimResult F = fim_state_direct(m, m.state_layout().values);
    FimResult E = efim_user(F);
    finalize_bounds(E);
    EXPECT_NEAR(E.peb / F.peb, 1.0, 1e-8);
    EXPECT_NEAR(E.oeb / F.oeb, 1.0, 1e-8);
}

TEST(StateFim, NlosAddsReflectorBound) {
    const Scenario s = load_scenario("", {"scatterers=[{position: [5, -5, 0]}]", "sync.known=false"});
    const BoundSummary b = compute_bounds(realize(s, 1));
    ASSERT_EQ(b.rpeb_names, (std::vector<std::string>{"N1"}));
    EXPECT_GT(b.rpeb[0], 0.0);
    EXPECT_TRUE(std::isfinite(b.peb));
}

TEST(RobustInverse, KnownMatrixAndSingular) {
    Eigen::Matrix3d A;
    A << 4, 1, 0, 1, 3, 1, 0, 1, 2;
    const auto inv = robust_inverse(A, {"a", "b", "c"}, false);
    EXPECT_TRUE(inv.full_rank);
    EXPECT_LT((inv.inverse * A - Eigen::Matrix3d::Identity()).norm(), 1e-13);

    // wildly different scales
    Eigen::Matrix2d S;
    S << 1e20, 1e8, 1e8, 1e-2; // correlation 0.1
    const auto si = robust_inverse(S, {"x", "y"}, false);
    const double det = 1e20 * 1e-2 - 1e16;
    EXPECT_NEAR(si.inverse(0, 0) / (1e-2 / det), 1.0, 1e-12);
    EXPECT_NEAR(si.inverse(1, 1) / (1e20 / det), 1.0, 1e-12);
    EXPECT_NEAR(si.inverse(0, 1) / (-1e8 / det), 1.0, 1e-12);

    Eigen::Matrix3d Z = Eigen::Matrix3d::Zero();
    Z(0, 0) = 1;
    Z(1, 1) = 2;
    try {
        robust_inverse(Z, {"a", "b", "c"}, false);
        FAIL() << "expected Unidentifiable";
    } catch (const Unidentifiable &e) {
        ASSERT_FALSE(e.null_directions.empty());
        EXPECT_EQ(e.null_directions[0], "c");
    }
    const auto p = robust_inverse(Z, {"a", "b", "c"}, true);
    EXPECT_EQ(p.rank, 2);
    EXPECT_FALSE(p.full_rank);
    EXPECT_NEAR(p.inverse(1, 1), 0.5, 1e-14);
}

TEST(Efim, SchurComplement) {
    FimResult F;
    F.matrix.resize(3, 3);
    F.matrix << 5, 2, 1, 2, 4, 1, 1, 1, 3;
    F.labels = {"p_U.x", "p_U.y", "B"};
    F.user = {true, true, false};
    const FimResult E = efim_user(F);
    Eigen::Matrix2d want;
    want << 5 - 1.0 / 3, 2 - 1.0 / 3, 2 - 1.0 / 3, 4 - 1.0 / 3;
    EXPECT_LT((E.matrix - want).norm(), 1e-14);
    // CRB of the kept block equals the corresponding block of the full inverse
    EXPECT_LT((E.matrix.inverse() - F.matrix.inverse().topLeftCorner(2, 2)).norm(), 1e-14);
    EXPECT_THROW(efim(F, {true}), ConfigError);
}

TEST(ConstrainedOrientation, TangentBasisAndBound) {
    const Mat3 R = rotation_from_euler(Vec3(0.4, -0.3, 1.1));
    const Eigen::MatrixXd M = tangent_basis(R);
    EXPECT_LT((M.transpose() * M - Eigen::Matrix3d::Identity()).norm(), 1e-14);
    // vec(R S) for a skew S lies in the span of M
    Mat3 S;
    S << 0, -0.3, 0.2, 0.3, 0, -0.7, -0.2, 0.7, 0;
    const Mat3 T = R * S;
    const Eigen::Map<const Eigen::VectorXd> v(T.data(), 9);
    EXPECT_LT((v - M * (M.transpose() * v)).norm(), 1e-13);

    const std::vector<Vec3> dirs = {Vec3(1, 0.2, 0.1).normalized(), Vec3(0.1, 1, -0.3).normalized(),
                                    Vec3(-0.5, 0.3, 1).normalized()};
    const Eigen::MatrixXd I1 = Eigen::MatrixXd::Identity(6, 6) * 1e4;
    const auto c1 = constrained_crb_orientation(I1, R, dirs);
    const auto c4 = constrained_crb_orientation(4.0 * I1, R, dirs);
    EXPECT_GT(c1.oeb, 0.0);
    EXPECT_NEAR(c4.oeb / c1.oeb, 0.5, 1e-10);
    EXPECT_THROW(constrained_crb_orientation(Eigen::MatrixXd::Identity(2, 2), R, {dirs[0]}), Unidentifiable);
    EXPECT_THROW(constrained_crb_orientation(I1, 2.0 * R, dirs), DomainError);
}

TEST(TileSchedule, RepeatsEverything) {
    const Realization r = realize(pwm_scenario(), 1);
    const PilotSchedule t = tile_schedule(r.sched, 3);
    EXPECT_EQ(t.G, 3 * r.sched.G);
    EXPECT_EQ(t.x.size(), 3 * r.sched.x.size());
    EXPECT_EQ((t.pilot(r.sched.G, 2) - r.sched.pilot(0, 2)).norm(), 0.0);
}
