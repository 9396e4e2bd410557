// SPDX-License-Identifier: Apache-2.0
// RIS coefficient design (SNR-max, quantized, min-max PEB), subarray beam assignment
// and offline RIS placement search.
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "thzloc/scenarios.hpp"

namespace thzloc {

// Phase of the BS -> RIS element -> UE cascade per RIS element at f_c, measured between
// the BS and UE array centers.
Eigen::VectorXd ris_cascade_phases(const ArraySpec &bs, const ArraySpec &ris, const Vec3 &ue_position, double fc,
                                   WaveModel wm);
// omega_n cancels the cascade phase, beta_n = 1.
RisProfile ris_snr_max(const ArraySpec &bs, const ArraySpec &ris, const Vec3 &ue_position, double fc, WaveModel wm);
// |sum_n beta_n exp(j omega_n) exp(j cascade_n)|, equal to N_R for the SNR-max profile.
double ris_aggregate_gain(const ArraySpec &bs, const ArraySpec &ris, const Vec3 &ue_position, double fc, WaveModel wm,
                          const RisProfile &p);
RisProfile quantize_profile(const RisProfile &p, int bits);

// count indices spread evenly over 0..n-1
std::vector<int> spread_indices(int count, int n);

struct BeamAssignment {
    int b_R_bs = 0, b_U_bs = 0; // BS subarrays aimed at the RIS / at the UE
    int b_R_ue = 0, b_U_ue = 0; // UE subarrays aimed at the RIS / at the BS
    std::vector<bool> bs_to_ris, ue_to_ris;
};
BeamAssignment beam_assignment(int b_R, int n_bs, int n_ue);

struct BeamSearchResult {
    std::vector<int> candidates;
    std::vector<double> peb; // NaN where the bound is singular
    int best_b_R = 0;
    double best_peb = 0.0;
};
// Prior-aimed beams with b_R BS subarrays on the RIS; argmin over the candidates.
BeamSearchResult beam_assignment_search(const Scenario &s, const std::vector<int> &candidates, std::uint64_t seed,
                                        int trial = 0);

struct CoverageReport {
    std::vector<long> counts;             // per candidate: UE grid points with PEB <= eps
    std::vector<std::vector<double>> peb; // [candidate][grid point]
    int best = -1;
};
// Candidate RIS poses; yaw-only orientation grids are built with placement_candidates.
CoverageReport ris_placement_coverage(const Scenario &s, const std::vector<Pose> &candidates,
                                      const std::vector<Vec3> &ue_grid, double eps, std::uint64_t seed);
CoverageReport coverage_from_peb(const std::vector<std::vector<double>> &peb, double eps);
std::vector<Pose> placement_candidates(const std::vector<Vec3> &positions, const std::vector<double> &yaws);

struct MinMaxResult {
    std::vector<Eigen::VectorXcd> profiles; // per transmission, unit modulus
    std::vector<double> peb;                // per region point at the returned profiles
    double worst_peb = 0.0;
    double initial_worst_peb = 0.0;
    int iterations = 0;
    bool improved = false;
};

// Worst-case PEB over the region as a function of the RIS coefficients (the beams and
// pilots stay those realized for the region centroid).
class RisRegionObjective {
public:
    RisRegionObjective(const Scenario &s, const std::vector<Vec3> &region, std::uint64_t seed, int trial = 0);
    int G() const { return G_; }
    int num_elements() const { return nR_; }
    const PilotSchedule &schedule() const { return sched_; }
    std::vector<double> peb(const std::vector<Eigen::VectorXcd> &w) const;
    // PEB^2 gradient w.r.t. conj-linear form: d PEB^2 = Re(sum z^T dw), returned as z per g.
    std::vector<Eigen::VectorXcd> peb2_gradient(const std::vector<Eigen::VectorXcd> &w, int point) const;

private:
    struct Point {
        std::vector<std::vector<Eigen::MatrixXcd>> B; // per gk: [0] = J0, [1 + r] = B_r
        std::vector<int> pos;
        double sigma2 = 1.0;
    };
    Eigen::MatrixXd fim(const Point &p, const std::vector<Eigen::VectorXcd> &w) const;
    std::vector<Eigen::MatrixXcd> jac(const Point &p, const std::vector<Eigen::VectorXcd> &w) const;
    std::vector<Point> pts_;
    PilotSchedule sched_;
    int G_ = 0, K_ = 0, nR_ = 0;
};

// Relax |w| = 1 to |w| <= 1, take projected gradient steps on the worst point, project
// back to unit modulus and accept only strict worst-case improvements. Starts from `init`
// (per transmission) or from the SNR-max profile aimed at the region centroid when empty.
MinMaxResult ris_minmax_peb(const Scenario &s, const std::vector<Vec3> &region,
                            const std::vector<Eigen::VectorXcd> &init, std::uint64_t seed, int max_iter = 200,
                            double rel_tol = 1e-6);

} // namespace thzloc
