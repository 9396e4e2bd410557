// SPDX-License-Identifier: Apache-2.0
// Localization estimators: direct maximum likelihood over the state, two-stage
// (channel parameters, then geometry), orientation from AODs, and the classic
// TOA / TDOA / AOA / ADOD position solvers.
#pragma once

#include <Eigen/Core>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "thzloc/model.hpp"
#include "thzloc/scenarios.hpp"
#include "thzloc/signal.hpp"

namespace thzloc {

// ---------------------------------------------------------------- nonlinear least squares

struct LsqOptions {
    int max_iter = 200;
    double rel_cost_tol = 1e-14; // stop when an accepted step improves the cost by less than this fraction
    double step_tol = 1e-14;     // stop when the scaled step is below this
    double lambda0 = 1e-3;
};

struct LsqResult {
    Eigen::VectorXd x;
    double cost = 0.0; // ||r||^2
    int iterations = 0;
    bool converged = false;
    Eigen::MatrixXd JtJ; // at the solution
};

// fn(x, r, J) fills the residual r and its Jacobian J = dr/dx.
using ResidualFn = std::function<void(const Eigen::VectorXd &, Eigen::VectorXd &, Eigen::MatrixXd &)>;
// Levenberg-Marquardt with Marquardt (diagonal) scaling.
LsqResult levenberg_marquardt(const ResidualFn &fn, const Eigen::VectorXd &x0, const LsqOptions &opt = {});

// ---------------------------------------------------------------- results

struct EstimationResult {
    Eigen::VectorXd state;
    std::vector<std::string> labels;
    double cost = 0.0; // whitened squared residual
    int iterations = 0;
    bool converged = false;
    Eigen::MatrixXd covariance; // inverse Fisher information at the estimate; empty if singular
    bool identity_weighting = false;

    Vec3 position(int dims) const; // p_U entries, zero-padded
    double value(const std::string &label) const;
};

// ---------------------------------------------------------------- direct MLE

struct DirectMleConfig {
    std::optional<Vec3> box_lo, box_hi; // prior box; default: scenario extent
    int grid_points = 21;               // per position axis
    int orientation_points = 24;        // yaw grid when the UE orientation is estimated
    int starts = 3;                     // best grid points refined by LM
    std::optional<Eigen::VectorXd> nuisance_init; // full state; only scatterer and clock entries are used
    LsqOptions lsq;
};

// Negative log-likelihood up to constants: sum_gk ||whiten(y - mu(s))||^2.
double direct_cost(const ForwardModel &m, const ObservationSet &obs, const Eigen::VectorXd &s);
// Concentrated cost with the complex path gains solved by linear least squares.
double concentrated_cost(const ForwardModel &m, const ObservationSet &obs, const Eigen::VectorXd &s,
                         std::vector<std::complex<double>> *gains = nullptr);

EstimationResult direct_mle(const ForwardModel &m, const ObservationSet &obs, const DirectMleConfig &cfg = {});

// ---------------------------------------------------------------- multi-stage

struct ChannelEstimate {
    Eigen::VectorXd gamma;          // in the model's measurement layout
    std::vector<std::string> labels;
    Eigen::MatrixXd covariance;     // inverse measurement FIM at gamma; empty if singular
    double cost = 0.0;
    int iterations = 0;
    bool converged = false;
    bool unresolved = false;        // two paths closer than one delay bin and 5 degrees
};

struct ChannelEstimatorConfig {
    double tau_min = 0.0;          // start of the delay search window [s]; the window spans K/W
    double delay_oversampling = 8; // grid step 1/(oversampling K W)
    double coarse_deg = 1.0;
    int refine_levels = 3;
    LsqOptions lsq;
};

// Plane-wave model, single-element UE, LOS/NLOS paths. path_count must be 0 or the
// number of model paths; paths are labeled in the order of their prior delays.
ChannelEstimate estimate_channel_params(const ForwardModel &m, const ObservationSet &obs, int path_count,
                                        const ChannelEstimatorConfig &cfg = {});

// Weighted least squares (gamma_hat - gamma(s))^T Sigma^{-1} (gamma_hat - gamma(s)) with
// wrapped angle and phase residuals. Starts from a closed-form LOS/NLOS initialization
// unless init is given.
EstimationResult multistage_solve(const ForwardModel &m, const ChannelEstimate &ce,
                                  const std::optional<Eigen::VectorXd> &init = std::nullopt,
                                  const LsqOptions &opt = {});

// ---------------------------------------------------------------- orientation

// R minimizing sum ||g_i - R l_i||^2 over rotations (det +1). Throws DegenerateGeometry
// for fewer than two non-collinear directions.
Mat3 procrustes_rotation(const std::vector<Vec3> &local_dirs, const std::vector<Vec3> &global_dirs);
// AODs are local angles at the UE toward each anchor.
Mat3 orientation_from_aods(const std::vector<AnglePair> &aods, const Vec3 &ue_position,
                           const std::vector<Vec3> &anchors);

// ---------------------------------------------------------------- classic solvers

struct ClassicResult {
    Vec3 position = Vec3::Zero();
    double cost = 0.0;
    int iterations = 0;
    bool converged = false;
};

// ranges[i] = |p - anchors[i]|
ClassicResult solve_toa(const std::vector<Vec3> &anchors, const std::vector<double> &ranges, int dims);
// range_diffs[i-1] = |p - anchors[i]| - |p - anchors[0]|, i = 1..m-1
ClassicResult solve_tdoa(const std::vector<Vec3> &anchors, const std::vector<double> &range_diffs, int dims);
// global angles of the direction from each anchor toward the UE
ClassicResult solve_aoa(const std::vector<Vec3> &anchors, const std::vector<AnglePair> &bearings, int dims);

// Angle between the UE-to-anchor directions of anchors i and j. In 2D this is the
// signed azimuth difference az_j - az_i, in 3D the unsigned angle.
struct AdodMeasurement {
    int i = 0, j = 1;
    double angle = 0.0;
};
ClassicResult solve_adod(const std::vector<Vec3> &anchors, const std::vector<AdodMeasurement> &meas, int dims);
double adod_angle(const Vec3 &p, const Vec3 &ai, const Vec3 &aj, int dims);

// ---------------------------------------------------------------- Monte-Carlo

enum class EstimatorKind { Direct, Multistage };

struct TrialRecord {
    int trial = 0;
    double error = 0.0; // position error [m], NaN when the solver failed
    bool converged = false;
};

struct TrialSummary {
    std::vector<TrialRecord> records;
    double rmse = 0.0;
    double peb = 0.0;
    int failures = 0;
};

// Noise-only Monte-Carlo: fixed realization (beams, pilots) from (seed, trial 0),
// noise stream per trial.
TrialSummary run_estimator_trials(const Scenario &s, EstimatorKind kind, int trials, std::uint64_t seed,
                                  const DirectMleConfig &dcfg = {}, const ChannelEstimatorConfig &ccfg = {});

} // namespace thzloc
