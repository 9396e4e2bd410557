// SPDX-License-Identifier: Apache-2.0
// Fisher information, Cramer-Rao bounds, PEB/OEB, EFIM and the constrained orientation bound.
#pragma once

#include <Eigen/Core>
#include <limits>
#include <string>
#include <vector>

#include "thzloc/model.hpp"

namespace thzloc {

enum class KernelPolicy { Parallel, Serial };

// (2/sigma^2) sum_t Re(J_t^H J_t). Parallel: per-term products in parallel and a fixed
// pairwise-tree reduction, so the result does not depend on the thread count.
// Serial: straightforward running sum, kept as the reference implementation.
Eigen::MatrixXd fim_accumulate(const std::vector<Eigen::MatrixXcd> &J, double sigma2, KernelPolicy policy);

struct InverseResult {
    Eigen::MatrixXd inverse;
    int rank = 0;
    bool full_rank = false;
    std::vector<std::string> null_directions; // dominant labels of near-null eigenvectors
};

// Inverse of a symmetric PSD matrix via Jacobi equilibration and a symmetric
// eigendecomposition. Eigenvalues below 1e-12 of the largest count as zero. When
// allow_pseudo is false a rank deficiency throws Unidentifiable.
InverseResult robust_inverse(const Eigen::MatrixXd &F, const std::vector<std::string> &labels, bool allow_pseudo);

struct FimResult {
    Eigen::MatrixXd matrix;          // information matrix
    std::vector<std::string> labels;
    std::vector<bool> user;          // s_U membership
    Eigen::MatrixXd crb;             // inverse (or pseudo-inverse), empty if not computed
    int rank = 0;
    bool full_rank = false;
    double peb = std::numeric_limits<double>::quiet_NaN();      // meters
    double oeb = std::numeric_limits<double>::quiet_NaN();      // radians, Euler convention
    std::vector<double> rpeb;        // per scatterer position block, meters
    std::vector<std::string> rpeb_names; // "N1", "N2", ...

    int index(const std::string &label) const;
};

// Fill crb/peb/oeb/rpeb from matrix. Throws Unidentifiable when singular and !allow_pseudo.
void finalize_bounds(FimResult &r, bool allow_pseudo = false);

FimResult fim_measurement(const ForwardModel &m, const Eigen::VectorXd &gamma, DiffMode mode = DiffMode::Dual);
FimResult fim_state_direct(const ForwardModel &m, const Eigen::VectorXd &s, DiffMode mode = DiffMode::Dual,
                           bool allow_pseudo = false);
Eigen::MatrixXd jacobian_state(const ForwardModel &m, const Eigen::VectorXd &s, DiffMode mode = DiffMode::Dual);
FimResult crb_state(const Eigen::MatrixXd &I_gamma, const Eigen::MatrixXd &J_S, const ParamVectors &s_layout,
                    bool allow_pseudo = false);

// Equivalent FIM of the entries flagged in `keep` (Schur complement of the rest).
FimResult efim(const FimResult &F, const std::vector<bool> &keep);
FimResult efim_user(const FimResult &F); // keep = s_U

// AOD-based orientation bound on the rotation manifold. I_theta is the FIM of m AOD
// pairs ordered (az_1, el_1, ..., az_m, el_m); dirs are the global unit directions from
// the UE toward each anchor. Returns sqrt(trace) of the constrained CRB of vec(R).
struct ConstrainedOrientation {
    Eigen::MatrixXd M;     // 9 x 3 orthonormal basis of the tangent space
    Eigen::MatrixXd crb_r; // 9 x 9 constrained CRB of vec(R)
    double oeb = 0.0;
};
Eigen::MatrixXd tangent_basis(const Mat3 &R);
ConstrainedOrientation constrained_crb_orientation(const Eigen::MatrixXd &I_theta, const Mat3 &R,
                                                   const std::vector<Vec3> &dirs);

struct ScalingReport {
    double peb = 0.0;
    double ratio_power_4x = 0.0; // PEB(4P)/PEB(P)
    double ratio_power_2x = 0.0; // PEB(2P)/PEB(P)
    double ratio_tx_4x = 0.0;    // PEB(4G)/PEB(G)
    double ratio_distance_2x = 0.0; // PEB(2d)/PEB(d), distance measured from the BS
    bool pass = false;           // both 4x ratios equal 0.5 within 1e-6 and PEB grows with d
};

// Repeats the schedule n times (identical pilots/beams per repetition).
PilotSchedule tile_schedule(const PilotSchedule &s, int n);

ScalingReport closed_form_scaling_check(const ModelConfig &cfg, const PilotSchedule &sched);

} // namespace thzloc
