// SPDX-License-Identifier: Apache-2.0
#include "thzloc/signal.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "thzloc/errors.hpp"

namespace thzloc {

double noise_variance(const Waveform &wf) {
    if (!(wf.W > 0.0)) throw ConfigError("noise_variance: bandwidth must be > 0");
    return std::pow(10.0, (wf.noise_psd_dBm_Hz + wf.noise_figure_dB) / 10.0) * wf.W;
}

std::vector<Eigen::VectorXcd> random_pilots(int n_tx, int G, int K, EnergyNorm norm, Rng &rng) {
    std::vector<Eigen::VectorXcd> out;
    out.reserve(static_cast<size_t>(G) * K);
    const double scale = norm == EnergyNorm::Total ? 1.0 / std::sqrt(static_cast<double>(G) * K) : 1.0;
    for (int i = 0; i < G * K; ++i) {
        Eigen::VectorXcd x(n_tx);
        for (int j = 0; j < n_tx; ++j) x(j) = rng.unit_phasor();
        out.push_back(x * (scale / std::sqrt(static_cast<double>(n_tx))));
    }
    return out;
}

Eigen::MatrixXcd random_phase_matrix(int n, int m, Rng &rng) {
    Eigen::MatrixXcd W(n, m);
    const double s = 1.0 / std::sqrt(static_cast<double>(n));
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < n; ++i) W(i, j) = s * rng.unit_phasor();
    return W;
}

namespace {
Eigen::VectorXcd white(Eigen::Index n, double sigma2, Rng &rng) {
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.cnormal(sigma2);
    return v;
}
} // namespace

ObservationSet observe_digital(const std::vector<Eigen::MatrixXcd> &H, const std::vector<Eigen::VectorXcd> &x, int G,
                               double P_mW, double sigma2, Rng &rng) {
    const int K = static_cast<int>(H.size());
    if (static_cast<int>(x.size()) != G * K) throw ConfigError("observe_digital: pilot count != G*K");
    ObservationSet obs;
    obs.G = G;
    obs.K = K;
    obs.sigma2 = sigma2;
    const double sp = std::sqrt(P_mW);
    for (int g = 0; g < G; ++g)
        for (int k = 0; k < K; ++k) {
            const auto &xv = x[static_cast<size_t>(g) * K + k];
            if (H[k].cols() != xv.size()) throw ConfigError("observe_digital: dimension mismatch");
            Eigen::VectorXcd mu = sp * (H[k] * xv);
            obs.y.push_back(mu + white(mu.size(), sigma2, rng));
            obs.mu.push_back(std::move(mu));
        }
    return obs;
}

ObservationSet observe_hybrid(const std::vector<Eigen::MatrixXcd> &H, const Eigen::MatrixXcd &W_B,
                              const Eigen::MatrixXcd &W_U, const std::vector<Eigen::VectorXcd> &x0, int G,
                              double P_mW, double sigma2, Rng &rng) {
    const int K = static_cast<int>(H.size());
    if (static_cast<int>(x0.size()) != G * K) throw ConfigError("observe_hybrid: pilot count != G*K");
    ObservationSet obs;
    obs.G = G;
    obs.K = K;
    obs.sigma2 = sigma2;
    const double sp = std::sqrt(P_mW);
    const Eigen::MatrixXcd WBt = W_B.transpose();
    for (int g = 0; g < G; ++g) {
        obs.noise_cov.push_back(WBt * WBt.adjoint()); // W_B^T W_B^*
        for (int k = 0; k < K; ++k) {
            const auto &xv = x0[static_cast<size_t>(g) * K + k];
            if (H[k].rows() != W_B.rows() || H[k].cols() != W_U.rows() || W_U.cols() != xv.size())
                throw ConfigError("observe_hybrid: dimension mismatch");
            Eigen::VectorXcd mu = sp * (WBt * (H[k] * (W_U * xv)));
            obs.y.push_back(mu + WBt * white(H[k].rows(), sigma2, rng));
            obs.mu.push_back(std::move(mu));
        }
    }
    return obs;
}

ObservationSet observe_aosa(const std::vector<std::vector<Eigen::MatrixXcd>> &Heff,
                            const std::vector<Eigen::VectorXcd> &x, double P_mW, double sigma2, Rng &rng) {
    const int G = static_cast<int>(Heff.size());
    const int K = G > 0 ? static_cast<int>(Heff[0].size()) : 0;
    if (static_cast<int>(x.size()) != G * K) throw ConfigError("observe_aosa: pilot count != G*K");
    ObservationSet obs;
    obs.G = G;
    obs.K = K;
    obs.sigma2 = sigma2;
    const double sp = std::sqrt(P_mW);
    for (int g = 0; g < G; ++g)
        for (int k = 0; k < K; ++k) {
            const auto &xv = x[static_cast<size_t>(g) * K + k];
            if (Heff[g][k].cols() != xv.size()) throw ConfigError("observe_aosa: dimension mismatch");
            Eigen::VectorXcd mu = sp * (Heff[g][k] * xv);
            obs.y.push_back(mu + white(mu.size(), sigma2, rng));
            obs.mu.push_back(std::move(mu));
        }
    return obs;
}

ObservationSet add_noise(const std::vector<Eigen::VectorXcd> &mu, int G, int K, double sigma2,
                         const std::vector<Eigen::MatrixXcd> &combiners, Rng &rng) {
    ObservationSet obs;
    obs.G = G;
    obs.K = K;
    obs.sigma2 = sigma2;
    obs.mu = mu;
    for (int g = 0; g < G; ++g) {
        if (!combiners.empty()) obs.noise_cov.push_back(combiners[g] * combiners[g].adjoint());
        for (int k = 0; k < K; ++k) {
            const auto &m = mu[static_cast<size_t>(g) * K + k];
            if (combiners.empty()) {
                obs.y.push_back(m + white(m.size(), sigma2, rng));
            } else {
                obs.y.push_back(m + combiners[g] * white(combiners[g].cols(), sigma2, rng));
            }
        }
    }
    return obs;
}

} // namespace thzloc
