// SPDX-License-Identifier: Apache-2.0
// Per-subcarrier channel synthesis for LOS, RIS and NLOS paths (uplink: UE transmits,
// BS receives, H is N_B x N_U). These are direct element-level evaluations; the
// differentiable forward model in model.hpp is checked against them.
#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "thzloc/arrays.hpp"
#include "thzloc/rng.hpp"

namespace thzloc {

struct Waveform {
    double fc = 0.3e12;             // Hz
    double W = 100e6;               // Hz
    int K = 10;                     // subcarriers
    int G = 10;                     // transmissions
    double P_mW = 10.0;             // transmit power
    double noise_psd_dBm_Hz = -173.86;
    double noise_figure_dB = 13.0;

    // k is zero based: f_k = fc + (2(k+1) - 1 - K) W / (2K)
    double f(int k) const { return fc + (2.0 * (k + 1) - 1.0 - K) * W / (2.0 * K); }
    double df(int k) const { return f(k) - fc; }
    double ck(int k) const { return fc / f(k); }
    double lambda() const { return kSpeedOfLight / fc; }
    void validate() const;
};

enum class WaveModel { PWM, SWM };
enum class PathKind { LOS, RIS, NLOS };

struct AbsorptionModel {
    double k_abs = 0.0; // 1/m; zero means no absorption
};

double attenuation(const AbsorptionModel &m, double f, double d);

struct Scatterer {
    Vec3 position = Vec3::Zero();
    double coefficient = 1.0; // reflection coefficient K_N in [0, 1]
};

struct PathDescriptor {
    PathKind kind = PathKind::LOS;
    int index = 0; // scatterer index for NLOS
    double rho = 0.0;
    double xi = 0.0;  // 2*pi*fc*tau wrapped to [0, 2pi)
    double tau = 0.0; // includes the clock offset
    AnglePair aoa_global, aoa_local; // at the BS (toward UE, RIS or scatterer)
    AnglePair aod_global, aod_local; // at the UE
    AnglePair ris_bs_local, ris_ue_local; // RIS only: at the RIS toward BS and toward UE
    double reflection_coeff = 0.0;
    Vec3 scatter_position = Vec3::Zero();
    bool out_of_sector = false;
};

struct RisProfile {
    Eigen::VectorXd beta;  // amplitudes in [0, 1]
    Eigen::VectorXd omega; // phases in [0, 2pi)

    static RisProfile unit(int n, double phase = 0.0);
    int size() const { return static_cast<int>(omega.size()); }
    Eigen::VectorXcd coefficients() const;
    void validate(int n_elements) const;
};

struct ImpairmentConfig {
    double kappa_t = 0.0;         // transmit-side distortion level
    double kappa_r = 0.0;         // receive-side distortion level
    double phase_noise_std = 0.0; // radians
    int ps_quant_bits = 0;        // analog phase-shifter resolution, 0 = continuous
    int ris_quant_bits = 0;       // RIS phase resolution, 0 = continuous
    int adc_bits = 0;             // phase quantization of received samples, 0 = off

    bool any() const;
    void validate() const;
};

// Nearest point of the 2^bits uniform phase grid, ties to the lower phase. Output in [0, 2pi).
double quantize_phase(double phase, int bits);

struct PathChannel {
    PathDescriptor desc;
    std::vector<Eigen::MatrixXcd> H; // one N_B x N_U matrix per subcarrier
};

PathChannel los_path(const ArraySpec &bs, const ArraySpec &ue, const Waveform &wf, double B,
                     const AbsorptionModel &absorb, WaveModel wm = WaveModel::PWM);

PathChannel ris_channel(const ArraySpec &bs, const ArraySpec &ris, const ArraySpec &ue, const RisProfile &profile,
                        const Waveform &wf, double B, const AbsorptionModel &absorb,
                        WaveModel wm = WaveModel::PWM);

std::vector<PathChannel> nlos_paths(const ArraySpec &bs, const ArraySpec &ue, const std::vector<Scatterer> &scatterers,
                                    const Waveform &wf, double B, const AbsorptionModel &absorb,
                                    WaveModel wm = WaveModel::PWM);

// Full element-level environment.
struct Environment {
    ArraySpec bs, ue;
    std::optional<ArraySpec> ris;
    RisProfile ris_profile;
    std::vector<Scatterer> scatterers;
    Waveform wf;
    double clock_offset = 0.0;
    AbsorptionModel absorb;
    bool include_los = true;
};

// Sum of all paths under the spherical-wave model, element by element.
std::vector<Eigen::MatrixXcd> swm_channel(const Environment &env);
// Same sum under a chosen wave model.
std::vector<Eigen::MatrixXcd> total_channel(const Environment &env, WaveModel wm);

// Per-SA analog beams for one transmission.
struct SubarrayBeams {
    std::vector<AnglePair> bs; // one per BS subarray (local frame)
    std::vector<AnglePair> ue; // one per UE subarray (local frame)
};

// Effective N_B x N_U channel over subarrays for every subcarrier: SA-level channel
// multiplied entrywise by the BS and UE array factors of each SA pair.
std::vector<Eigen::MatrixXcd> aosa_effective_channel(const Environment &env, const SubarrayBeams &beams,
                                                     WaveModel wm, bool bse);

// Distorts a clean observation mu = sqrt(P) H x with transmit/receive RF-chain
// distortion, receiver phase noise and receive phase quantization.
Eigen::VectorXcd apply_impairments(const Eigen::VectorXcd &mu, const Eigen::MatrixXcd &H, const Eigen::VectorXcd &x,
                                   double P_mW, const ImpairmentConfig &cfg, Rng &rng);

} // namespace thzloc
