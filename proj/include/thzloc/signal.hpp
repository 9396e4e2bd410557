// SPDX-License-Identifier: Apache-2.0
// Pilots and receive-chain observation models.
#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "thzloc/channel.hpp"
#include "thzloc/rng.hpp"

namespace thzloc {

enum class EnergyNorm { PerSymbol, Total };

// Per transmission g: analog beams per SA (local unit vectors), optional receive
// combiner; per (g, k): transmit vector x. Index (g, k) as g * K + k.
struct PilotSchedule {
    int G = 0, K = 0;
    std::vector<std::vector<Vec3>> bs_beams; // [g][sa]
    std::vector<std::vector<Vec3>> ue_beams; // [g][sa]
    std::vector<Eigen::VectorXcd> x;         // [g*K + k]
    std::vector<Eigen::MatrixXcd> combiner;  // [g], M_B x N_B (= W_B^T); empty when absent
    std::vector<Eigen::VectorXcd> ris;       // [g], RIS coefficients; empty when no RIS

    const Eigen::VectorXcd &pilot(int g, int k) const { return x[static_cast<size_t>(g) * K + k]; }
};

struct ObservationSet {
    int G = 0, K = 0;
    std::vector<Eigen::VectorXcd> y;  // [g*K + k]
    std::vector<Eigen::VectorXcd> mu; // noise-free
    double sigma2 = 0.0;              // mW
    std::vector<Eigen::MatrixXcd> noise_cov; // [g] relative covariance when colored (sigma2 * C)

    Eigen::Index rx_dim() const { return y.empty() ? 0 : y.front().size(); }
};

double noise_variance(const Waveform &wf);

// Uniform random phases per RF chain, normalized to ||x||^2 = 1 (PerSymbol) or 1/(K G) (Total).
std::vector<Eigen::VectorXcd> random_pilots(int n_tx, int G, int K, EnergyNorm norm, Rng &rng);

// Phase-only combiner/precoder with entries of modulus 1/sqrt(n).
Eigen::MatrixXcd random_phase_matrix(int n, int m, Rng &rng);

// y = sqrt(P) H[k] x + n; H indexed by subcarrier only.
ObservationSet observe_digital(const std::vector<Eigen::MatrixXcd> &H, const std::vector<Eigen::VectorXcd> &x, int G,
                               double P_mW, double sigma2, Rng &rng);

// y = sqrt(P) W_B^T H W_U x0 + W_B^T n.
ObservationSet observe_hybrid(const std::vector<Eigen::MatrixXcd> &H, const Eigen::MatrixXcd &W_B,
                              const Eigen::MatrixXcd &W_U, const std::vector<Eigen::VectorXcd> &x0, int G,
                              double P_mW, double sigma2, Rng &rng);

// y = sqrt(P) Heff[g][k] x + n with the effective channel already containing the beams.
ObservationSet observe_aosa(const std::vector<std::vector<Eigen::MatrixXcd>> &Heff, const std::vector<Eigen::VectorXcd> &x,
                            double P_mW, double sigma2, Rng &rng);

// Add white noise to a clean mean (used by the estimator trials).
ObservationSet add_noise(const std::vector<Eigen::VectorXcd> &mu, int G, int K, double sigma2,
                         const std::vector<Eigen::MatrixXcd> &combiners, Rng &rng);

} // namespace thzloc
