// SPDX-License-Identifier: Apache-2.0
// Differentiable forward model mu(s) and mu(gamma) over subarray-level observations.
//
// Observations are uplink: the UE transmits pilots x[g][k] through its analog subarrays,
// the BS receives one sample per subarray (or per combiner output in hybrid mode).
// The same code path evaluates the model for double and for Dual scalars, so the
// Jacobians are exact to rounding; central differences are kept as a cross-check.
#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "thzloc/channel.hpp"
#include "thzloc/signal.hpp"

namespace thzloc {

enum class GainKnowledge { Unknown, Partial };
enum class ParamKind { Position, Angle, Phase, Delay, Amplitude };
enum class DiffMode { Dual, Central };

struct ParamEntry {
    std::string label;
    ParamKind kind = ParamKind::Position;
    bool user = false; // part of s_U (UE position or orientation)
};

// Labeled parameter vector with an explicit index layout.
struct ParamVectors {
    std::vector<ParamEntry> entries;
    Eigen::VectorXd values;

    int size() const { return static_cast<int>(entries.size()); }
    int find(const std::string &label) const; // -1 when absent
    int index(const std::string &label) const; // throws ConfigError when absent
    std::vector<int> with_prefix(const std::string &prefix) const;
    std::vector<int> user_indices() const;
    std::vector<int> nuisance_indices() const;
    std::vector<std::string> labels() const;
    void add(std::string label, ParamKind kind, double value, bool user = false);
};

// Central-difference step for one parameter.
double diff_step(ParamKind kind, double x);

struct ModelConfig {
    ArraySpec bs, ue;
    std::optional<ArraySpec> ris;
    std::vector<Scatterer> scatterers;
    Waveform wf;
    AbsorptionModel absorb;
    WaveModel wave_model = WaveModel::SWM;
    bool bse = false;
    bool include_los = true;
    double clock_offset = 0.0;
    bool clock_known = true;
    GainKnowledge gains = GainKnowledge::Unknown;
    int dims = 2;                 // 2: planar position + yaw; 3: full position and Euler angles
    int ps_quant_bits = 0;        // analog phase-shifter resolution
    bool estimate_scatterers = true; // scatterer positions are unknown nuisance parameters
};

struct PathInfo {
    PathKind kind = PathKind::LOS;
    int index = 0;       // scatterer index for NLOS
    std::string name;    // "L", "R", "N1", ...
    double sector = 1.0; // product of sector amplitude gains at the array centers
};

class ForwardModel {
public:
    ForwardModel(ModelConfig cfg, PilotSchedule schedule);

    const ModelConfig &config() const;
    const PilotSchedule &schedule() const;
    const std::vector<PathInfo> &paths() const;
    int G() const;
    int K() const;
    int rx_dim() const;  // samples per (g, k)
    int num_bs() const;  // BS subarrays (or elements)
    int num_ue() const;
    double sigma2() const;

    // s = [p_U; o_U; rho; xi; p_N; B] with nominal values at the configured truth.
    const ParamVectors &state_layout() const;
    // gamma = [rho; xi; tau; BS-side angle pairs; UE-side angle pairs] (plane-wave model only).
    const ParamVectors &measurement_layout() const;
    bool has_measurement_layout() const;

    // Noise-free observations, one vector per (g, k) at index g*K + k.
    std::vector<Eigen::VectorXcd> mean_state(const Eigen::VectorXd &s) const;
    std::vector<Eigen::VectorXcd> mean_measurement(const Eigen::VectorXd &gamma) const;

    // Noise-whitened Jacobians d mu / d theta, one N_rx x n matrix per (g, k).
    std::vector<Eigen::MatrixXcd> jacobian_state(const Eigen::VectorXd &s, DiffMode mode = DiffMode::Dual,
                                                 double step_scale = 1.0) const;
    std::vector<Eigen::MatrixXcd> jacobian_measurement(const Eigen::VectorXd &gamma, DiffMode mode = DiffMode::Dual,
                                                       double step_scale = 1.0) const;

    Eigen::VectorXd gamma_of_state(const Eigen::VectorXd &s) const;
    Eigen::MatrixXd gamma_jacobian(const Eigen::VectorXd &s, DiffMode mode = DiffMode::Dual,
                                   double step_scale = 1.0) const;

    // Unit-gain response of every path (rho = 1, xi = 0): [path][g*K + k].
    std::vector<std::vector<Eigen::VectorXcd>> path_responses_state(const Eigen::VectorXd &s) const;
    std::vector<std::vector<Eigen::VectorXcd>> path_responses_measurement(const Eigen::VectorXd &gamma) const;

    // Whitening operator per transmission (identity when no combiner is used).
    Eigen::VectorXcd whiten(const Eigen::VectorXcd &v, int g) const;

    // Effective channel (N_B x N_U, before any combiner) at (g, k) for state s.
    Eigen::MatrixXcd channel(const Eigen::VectorXd &s, int g, int k) const;

    // RIS linearization: mu = J0 + sum_r omega[g][r] * B_r, for Jacobians w.r.t. s.
    // Returns per (g, k): [0] = Jacobian without the RIS path, [1 + r] = per-element Jacobian.
    std::vector<std::vector<Eigen::MatrixXcd>> ris_element_jacobians(const Eigen::VectorXd &s) const;

    struct Impl;

private:
    std::shared_ptr<const Impl> impl_;
};

// Convenience: (2/sigma^2) sum Re(J^H J) with the deterministic parallel kernel.
Eigen::MatrixXd fim_from_jacobians(const std::vector<Eigen::MatrixXcd> &J, double sigma2);

} // namespace thzloc
