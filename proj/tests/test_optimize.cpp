// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "thzloc/errors.hpp"
#include "thzloc/optimize.hpp"

using namespace thzloc;

namespace {

Scenario small_ris() {
    return load_scenario("", {"ris.enabled=true", "ris.position=[0.5, 0.5, 0.1]", "ris.elements=[6, 6]",
                              "ue.position=[0.5, 0.4, 0.05]", "bs.beams=prior", "ue.beams=prior", "bs.ris_beams=4",
                              "waveform.transmissions=2", "sync.known=false", "sync.offset_s=1e-5"});
}

double sinc(double x) { return std::sin(x) / x; }

} // namespace

TEST(RisProfile, SnrMaxAchievesFullAggregateGain) {
    // UE off the specular direction so the flat profile defocuses
    const Scenario s = load_scenario("", {"ris.enabled=true", "ris.elements=[40, 40]", "ue.position=[7, 2, 0]"});
    const ArraySpec bs = bs_spec(s), ris = *ris_spec(s);
    for (WaveModel wm : {WaveModel::PWM, WaveModel::SWM}) {
        const RisProfile p = ris_snr_max(bs, ris, s.ue.position, s.wf.fc, wm);
        EXPECT_NEAR(ris_aggregate_gain(bs, ris, s.ue.position, s.wf.fc, wm, p), 1600.0, 1e-8);
        EXPECT_LT(ris_aggregate_gain(bs, ris, s.ue.position, s.wf.fc, wm, RisProfile::unit(1600)), 1600.0 * 0.5);
    }
}

TEST(RisProfile, QuantizationLossFollowsUniformErrorModel) {
    // phase error uniform over one quantization step: mean gain sinc(pi / 2^b)
    const Scenario s = load_scenario("", {"ris.enabled=true", "ris.elements=[60, 60]", "ue.position=[7, 2, 0]"});
    const ArraySpec bs = bs_spec(s), ris = *ris_spec(s);
    const RisProfile p = ris_snr_max(bs, ris, s.ue.position, s.wf.fc, WaveModel::SWM);
    double prev = 0.0;
    for (int b = 1; b <= 3; ++b) {
        const RisProfile q = quantize_profile(p, b);
        for (int i = 0; i < q.size(); ++i)
            EXPECT_NEAR(std::remainder(q.omega(i), 2 * M_PI / std::ldexp(1.0, b)), 0.0, 1e-12);
        const double g = ris_aggregate_gain(bs, ris, s.ue.position, s.wf.fc, WaveModel::SWM, q) / 3600.0;
        EXPECT_NEAR(g, sinc(M_PI / std::ldexp(1.0, b)), 0.03) << b;
        EXPECT_GT(g, prev);
        prev = g;
    }
    EXPECT_THROW(quantize_profile(p, 0), ConfigError);
}

TEST(BeamAssignment, SpreadAndCounts) {
    EXPECT_EQ(spread_indices(3, 9), (std::vector<int>{1, 4, 7}));
    EXPECT_EQ(spread_indices(0, 4), std::vector<int>{});
    EXPECT_EQ(spread_indices(4, 4), (std::vector<int>{0, 1, 2, 3}));
    EXPECT_THROW(spread_indices(5, 4), ConfigError);
    const BeamAssignment a = beam_assignment(4, 16, 4);
    EXPECT_EQ(a.b_R_bs, 4);
    EXPECT_EQ(a.b_U_bs, 12);
    EXPECT_EQ(a.b_R_ue, 1);
    EXPECT_EQ(std::count(a.bs_to_ris.begin(), a.bs_to_ris.end(), true), 4);
    EXPECT_EQ(std::count(a.ue_to_ris.begin(), a.ue_to_ris.end(), true), 1);
    EXPECT_THROW(beam_assignment(17, 16, 4), ConfigError);
}

TEST(BeamAssignment, SearchReturnsArgmin) {
    const BeamSearchResult r = beam_assignment_search(small_ris(), {0, 2, 4, 8}, 1);
    ASSERT_EQ(r.peb.size(), 4u);
    double best = std::numeric_limits<double>::infinity();
    int arg = -1;
    for (size_t i = 0; i < r.peb.size(); ++i)
        if (std::isfinite(r.peb[i]) && r.peb[i] < best) {
            best = r.peb[i];
            arg = r.candidates[i];
        }
    EXPECT_EQ(r.best_b_R, arg);
    EXPECT_EQ(r.best_peb, best);
    EXPECT_THROW(beam_assignment_search(small_ris(), {}, 1), ConfigError);
}

TEST(Placement, CoverageCounting) {
    const std::vector<std::vector<double>> peb = {{0.1, 0.5, NAN, 0.2}, {0.3, 0.05, 0.01, 0.02}, {1, 1, 1, 1}};
    const CoverageReport r = coverage_from_peb(peb, 0.2);
    EXPECT_EQ(r.counts, (std::vector<long>{2, 3, 0}));
    EXPECT_EQ(r.best, 1);
    const auto c = placement_candidates({Vec3(1, 2, 0), Vec3(3, 4, 0)}, {0.0, 1.0, -1.0});
    ASSERT_EQ(c.size(), 6u);
    EXPECT_EQ(c[4].position, Vec3(3, 4, 0));
    EXPECT_EQ(c[4].orientation(0), 1.0);
}

TEST(MinMax, GradientMatchesFiniteDifference) {
    const Scenario s = small_ris();
    const RisRegionObjective obj(s, {Vec3(0.5, 0.4, 0.05), Vec3(0.55, 0.35, 0.05)}, 1);
    Rng rng(4);
    std::vector<Eigen::VectorXcd> w(obj.G()), dw(obj.G());
    for (int g = 0; g < obj.G(); ++g) {
        w[g].resize(obj.num_elements());
        dw[g].resize(obj.num_elements());
        for (int r = 0; r < obj.num_elements(); ++r) {
            w[g](r) = rng.unit_phasor();
            dw[g](r) = rng.cnormal(1.0);
        }
    }
    for (int point = 0; point < 2; ++point) {
        const auto z = obj.peb2_gradient(w, point);
        double lin = 0.0;
        for (int g = 0; g < obj.G(); ++g) lin += (z[g].transpose() * dw[g]).real()(0);
        const double h = 1e-4;
        auto shifted = [&](double t) {
            std::vector<Eigen::VectorXcd> v = w;
            for (int g = 0; g < obj.G(); ++g) v[g] += t * dw[g];
            const double p = obj.peb(v)[point];
            return p * p;
        };
        // five-point stencil
        const double fd = (8 * (shifted(h) - shifted(-h)) - (shifted(2 * h) - shifted(-2 * h))) / (12 * h);
        EXPECT_NEAR(lin / fd, 1.0, 1e-4) << point;
    }
}

TEST(MinMax, NeverWorsensTheWorstCase) {
    const Scenario s = small_ris();
    const std::vector<Vec3> region = {Vec3(0.45, 0.4, 0.05), Vec3(0.55, 0.4, 0.05), Vec3(0.5, 0.3, 0.05)};
    const MinMaxResult r = ris_minmax_peb(s, region, {}, 1, 20);
    ASSERT_EQ(r.peb.size(), region.size());
    EXPECT_LE(r.worst_peb, r.initial_worst_peb);
    EXPECT_EQ(r.worst_peb, *std::max_element(r.peb.begin(), r.peb.end()));
    for (const auto &p : r.profiles) EXPECT_LT((p.cwiseAbs().array() - 1.0).abs().maxCoeff(), 1e-12);
}
