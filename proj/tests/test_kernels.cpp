// SPDX-License-Identifier: Apache-2.0
// OpenMP kernels against their serial references.
#include <gtest/gtest.h>

#include <omp.h>

#include "thzloc/errors.hpp"
#include "thzloc/estimators.hpp"
#include "thzloc/fim.hpp"
#include "thzloc/scenarios.hpp"

using namespace thzloc;

namespace {

std::vector<Eigen::MatrixXcd> random_jacobians(int n, int rows, int cols, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Eigen::MatrixXcd> J(n, Eigen::MatrixXcd(rows, cols));
    for (auto &M : J)
        for (Eigen::Index i = 0; i < M.size(); ++i) M(i) = rng.cnormal(1.0);
    return J;
}

class ThreadGuard {
public:
    ThreadGuard() : n_(omp_get_max_threads()) {}
    ~ThreadGuard() { omp_set_num_threads(n_); }

private:
    int n_;
};

} // namespace

TEST(FimKernel, ParallelMatchesSerial) {
    for (int n : {1, 2, 7, 100, 1001}) {
        const auto J = random_jacobians(n, 5, 4, 17 + n);
        const Eigen::MatrixXd a = fim_accumulate(J, 0.3, KernelPolicy::Parallel);
        const Eigen::MatrixXd b = fim_accumulate(J, 0.3, KernelPolicy::Serial);
        EXPECT_LT((a - b).norm(), 1e-12 * b.norm()) << n;
        EXPECT_EQ((a - a.transpose()).norm(), 0.0);
    }
}

TEST(FimKernel, SerialIsTheDefinition) {
    const auto J = random_jacobians(3, 2, 2, 5);
    Eigen::MatrixXd want = Eigen::MatrixXd::Zero(2, 2);
    for (const auto &M : J) want += (M.adjoint() * M).real();
    want *= 2.0 / 0.5;
    EXPECT_LT((fim_accumulate(J, 0.5, KernelPolicy::Serial) - want).norm(), 1e-13 * want.norm());
}

TEST(FimKernel, EmptyInput) {
    EXPECT_THROW(fim_accumulate({}, 1.0, KernelPolicy::Parallel), ConfigError);
    EXPECT_THROW(fim_accumulate({}, 1.0, KernelPolicy::Serial), ConfigError);
    EXPECT_THROW(fim_accumulate(random_jacobians(2, 2, 2, 1), 0.0, KernelPolicy::Serial), ConfigError);
}

TEST(FimKernel, BitwiseIndependentOfThreadCount) {
    ThreadGuard guard;
    const auto J = random_jacobians(333, 6, 5, 99);
    omp_set_num_threads(1);
    const Eigen::MatrixXd a = fim_accumulate(J, 1.0, KernelPolicy::Parallel);
    omp_set_num_threads(4);
    const Eigen::MatrixXd b = fim_accumulate(J, 1.0, KernelPolicy::Parallel);
    omp_set_num_threads(3);
    const Eigen::MatrixXd c = fim_accumulate(J, 1.0, KernelPolicy::Parallel);
    EXPECT_EQ((a - b).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((a - c).cwiseAbs().maxCoeff(), 0.0);
}

TEST(FimKernel, ModelJacobiansParallelMatchesSerial) {
    const Scenario s = load_scenario("", {"waveform.transmissions=3"});
    const Realization r = realize(s, 1);
    const ForwardModel m(r.cfg, r.sched);
    const auto J = m.jacobian_state(m.state_layout().values);
    const Eigen::MatrixXd a = fim_accumulate(J, m.sigma2(), KernelPolicy::Parallel);
    const Eigen::MatrixXd b = fim_accumulate(J, m.sigma2(), KernelPolicy::Serial);
    const Eigen::VectorXd d = b.diagonal().cwiseSqrt().cwiseInverse();
    EXPECT_LT((d.asDiagonal() * (a - b) * d.asDiagonal()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(EstimatorTrials, DeterministicAcrossThreadCounts) {
    ThreadGuard guard;
    const Scenario s = load_scenario("", {"channel.wave_model=pwm", "ue.subarrays=[1, 1]", "ue.elements=[1, 1]",
                                          "bs.elements=[1, 1]", "waveform.P_dBm=30"});
    omp_set_num_threads(1);
    const TrialSummary a = run_estimator_trials(s, EstimatorKind::Multistage, 4, 7);
    omp_set_num_threads(3);
    const TrialSummary b = run_estimator_trials(s, EstimatorKind::Multistage, 4, 7);
    ASSERT_EQ(a.records.size(), b.records.size());
    for (size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(a.records[i].error, b.records[i].error);
    EXPECT_EQ(a.rmse, b.rmse);
}
