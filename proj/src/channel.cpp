// SPDX-License-Identifier: Apache-2.0
#include "thzloc/channel.hpp"

#include <cmath>

#include "thzloc/errors.hpp"

namespace thzloc {

void Waveform::validate() const {
    if (!(W > 0.0)) throw ConfigError("waveform.bandwidth_Hz must be > 0");
    if (!(fc > W / 2.0)) throw ConfigError("waveform.fc_Hz must exceed half the bandwidth");
    if (K < 1) throw ConfigError("waveform.subcarriers must be >= 1");
    if (G < 1) throw ConfigError("waveform.transmissions must be >= 1");
    if (!(P_mW > 0.0) || !std::isfinite(P_mW)) throw ConfigError("waveform.P_dBm must be finite");
    if (!std::isfinite(noise_psd_dBm_Hz)) throw ConfigError("waveform.noise_psd_dBm_Hz must be finite");
    if (!std::isfinite(noise_figure_dB)) throw ConfigError("waveform.noise_figure_dB must be finite");
}

double attenuation(const AbsorptionModel &m, double /*f*/, double d) {
    if (d < 0.0) throw DomainError("attenuation: negative distance");
    if (m.k_abs < 0.0) throw DomainError("attenuation: negative absorption coefficient");
    return m.k_abs == 0.0 ? 1.0 : std::exp(-0.5 * m.k_abs * d);
}

RisProfile RisProfile::unit(int n, double phase) {
    RisProfile p;
    p.beta = Eigen::VectorXd::Ones(n);
    p.omega = Eigen::VectorXd::Constant(n, phase);
    return p;
}

Eigen::VectorXcd RisProfile::coefficients() const {
    Eigen::VectorXcd c(omega.size());
    for (Eigen::Index i = 0; i < omega.size(); ++i) c(i) = beta(i) * expj(omega(i));
    return c;
}

void RisProfile::validate(int n_elements) const {
    if (omega.size() == 0) throw ConfigError("RIS profile is empty");
    if (omega.size() != n_elements || beta.size() != n_elements)
        throw ConfigError("RIS profile length does not match the RIS element count");
    for (Eigen::Index i = 0; i < beta.size(); ++i)
        if (!(beta(i) >= 0.0 && beta(i) <= 1.0)) throw ConfigError("RIS amplitude outside [0, 1]");
}

bool ImpairmentConfig::any() const {
    return kappa_t > 0 || kappa_r > 0 || phase_noise_std > 0 || ps_quant_bits > 0 || ris_quant_bits > 0 ||
           adc_bits > 0;
}

void ImpairmentConfig::validate() const {
    if (kappa_t < 0 || kappa_r < 0 || phase_noise_std < 0) throw ConfigError("impairments must be non-negative");
    if (ps_quant_bits < 0 || ris_quant_bits < 0 || adc_bits < 0)
        throw ConfigError("impairment bit counts must be non-negative");
}

double quantize_phase(double phase, int bits) {
    if (bits < 1) throw DomainError("quantize_phase: bits must be >= 1");
    const double two_pi = 2.0 * M_PI;
    double w = std::fmod(phase, two_pi);
    if (w < 0) w += two_pi;
    const double n = std::ldexp(1.0, bits);
    const double step = two_pi / n;
    double q = std::ceil(w / step - 0.5); // ties go down
    double out = std::fmod(q, n) * step;
    return out;
}

namespace {

struct Elements {
    Vec3 center;             // array position (global)
    Mat3 R;                  // array rotation
    std::vector<Vec3> local; // element positions, array frame
    std::vector<Vec3> global;
};

Elements make_elements(const ArraySpec &spec, bool sa_level) {
    Elements e;
    e.center = spec.pose.position;
    e.R = rotation_from_euler(spec.pose.orientation);
    if (sa_level) {
        for (const auto &sa : element_positions(spec)) e.local.push_back(sa.center);
    } else {
        e.local = flat_element_positions(spec);
    }
    for (const Vec3 &p : e.local) e.global.push_back(e.R * p + e.center);
    return e;
}

// e^{-j 2 pi f dtau} for every element pair of a single hop between arrays A and B.
// PWM uses the linearized excess delay, SWM the exact one.
Eigen::MatrixXcd hop_phases(const Elements &A, const Elements &B, double f, WaveModel wm) {
    Eigen::MatrixXcd M(A.local.size(), B.local.size());
    const double k = 2.0 * M_PI * f / kSpeedOfLight;
    const double d0 = (B.center - A.center).norm();
    if (wm == WaveModel::PWM) {
        const Vec3 t = (B.center - A.center) / d0;
        const Vec3 ta = A.R.transpose() * t;
        const Vec3 tb = B.R.transpose() * (-t);
        for (size_t a = 0; a < A.local.size(); ++a)
            for (size_t b = 0; b < B.local.size(); ++b)
                M(a, b) = expj(k * (A.local[a].dot(ta) + B.local[b].dot(tb)));
    } else {
        for (size_t a = 0; a < A.local.size(); ++a)
            for (size_t b = 0; b < B.local.size(); ++b)
                M(a, b) = expj(-k * ((B.global[b] - A.global[a]).norm() - d0));
    }
    return M;
}

// Phases for an array talking to a point (scatterer): vector over elements.
Eigen::VectorXcd point_phases(const Elements &A, const Vec3 &p, double f, WaveModel wm) {
    Eigen::VectorXcd v(A.local.size());
    const double k = 2.0 * M_PI * f / kSpeedOfLight;
    const double d0 = (p - A.center).norm();
    const Vec3 ta = A.R.transpose() * ((p - A.center) / d0);
    for (size_t a = 0; a < A.local.size(); ++a) {
        if (wm == WaveModel::PWM)
            v(a) = expj(k * A.local[a].dot(ta));
        else
            v(a) = expj(-k * ((p - A.global[a]).norm() - d0));
    }
    return v;
}

AnglePair local_angles(const Mat3 &R, const Vec3 &t_global) {
    Vec3 t = R.transpose() * t_global;
    return angles_from_direction(t / t.norm());
}

double wrapped_xi(double fc, double tau) {
    double xi = std::fmod(2.0 * M_PI * fc * tau, 2.0 * M_PI);
    return xi < 0 ? xi + 2.0 * M_PI : xi;
}

cplx path_coef(const Waveform &wf, int k, int ck_pow, double rho, double xi, double tau) {
    return std::pow(wf.ck(k), ck_pow) * rho * expj(-xi) * expj(-2.0 * M_PI * wf.df(k) * tau);
}

PathDescriptor los_descriptor(const ArraySpec &bs, const ArraySpec &ue, const Waveform &wf, double B,
                              const AbsorptionModel &absorb) {
    auto dd = direction_and_distance(bs.pose.position, ue.pose.position);
    PathDescriptor p;
    p.kind = PathKind::LOS;
    const Mat3 RB = rotation_from_euler(bs.pose.orientation);
    const Mat3 RU = rotation_from_euler(ue.pose.orientation);
    p.aoa_global = angles_from_direction(dd.direction);
    p.aod_global = angles_from_direction(-dd.direction);
    p.aoa_local = local_angles(RB, dd.direction);
    p.aod_local = local_angles(RU, -dd.direction);
    const double gB = sector_gain(bs.gain, p.aoa_local), gU = sector_gain(ue.gain, p.aod_local);
    p.out_of_sector = gB == 0.0 || gU == 0.0;
    p.rho = wf.lambda() / (4.0 * M_PI * dd.distance) * attenuation(absorb, wf.fc, dd.distance) * gB * gU;
    p.tau = dd.distance / kSpeedOfLight + B;
    p.xi = wrapped_xi(wf.fc, p.tau);
    return p;
}

PathDescriptor ris_descriptor(const ArraySpec &bs, const ArraySpec &ris, const ArraySpec &ue, const Waveform &wf,
                              double B, const AbsorptionModel &absorb) {
    auto br = direction_and_distance(bs.pose.position, ris.pose.position);
    auto ur = direction_and_distance(ue.pose.position, ris.pose.position);
    PathDescriptor p;
    p.kind = PathKind::RIS;
    const Mat3 RB = rotation_from_euler(bs.pose.orientation);
    const Mat3 RR = rotation_from_euler(ris.pose.orientation);
    const Mat3 RU = rotation_from_euler(ue.pose.orientation);
    p.aoa_global = angles_from_direction(br.direction);
    p.aoa_local = local_angles(RB, br.direction);
    p.aod_global = angles_from_direction(ur.direction);
    p.aod_local = local_angles(RU, ur.direction);
    p.ris_bs_local = local_angles(RR, -br.direction);
    p.ris_ue_local = local_angles(RR, -ur.direction);
    const double gB = sector_gain(bs.gain, p.aoa_local), gU = sector_gain(ue.gain, p.aod_local);
    p.out_of_sector = gB == 0.0 || gU == 0.0;
    const double lam = wf.lambda();
    p.rho = lam * lam / (16.0 * M_PI * M_PI * br.distance * ur.distance) * attenuation(absorb, wf.fc, br.distance) *
            attenuation(absorb, wf.fc, ur.distance) * gB * gU;
    p.tau = (br.distance + ur.distance) / kSpeedOfLight + B;
    p.xi = wrapped_xi(wf.fc, p.tau);
    return p;
}

PathDescriptor nlos_descriptor(const ArraySpec &bs, const ArraySpec &ue, const Scatterer &s, int index,
                               const Waveform &wf, double B, const AbsorptionModel &absorb) {
    if (!(s.coefficient >= 0.0 && s.coefficient <= 1.0)) throw ConfigError("scatterer coefficient outside [0, 1]");
    auto bn = direction_and_distance(bs.pose.position, s.position);
    auto un = direction_and_distance(ue.pose.position, s.position);
    PathDescriptor p;
    p.kind = PathKind::NLOS;
    p.index = index;
    const Mat3 RB = rotation_from_euler(bs.pose.orientation);
    const Mat3 RU = rotation_from_euler(ue.pose.orientation);
    p.aoa_global = angles_from_direction(bn.direction);
    p.aoa_local = local_angles(RB, bn.direction);
    p.aod_global = angles_from_direction(un.direction);
    p.aod_local = local_angles(RU, un.direction);
    const double gB = sector_gain(bs.gain, p.aoa_local), gU = sector_gain(ue.gain, p.aod_local);
    p.out_of_sector = gB == 0.0 || gU == 0.0;
    const double dn = bn.distance + un.distance;
    p.rho = wf.lambda() / (4.0 * M_PI * dn) * s.coefficient * attenuation(absorb, wf.fc, dn) * gB * gU;
    p.tau = dn / kSpeedOfLight + B;
    p.xi = wrapped_xi(wf.fc, p.tau);
    p.reflection_coeff = s.coefficient;
    p.scatter_position = s.position;
    return p;
}

// Element-level (or SA-level) matrices for each path kind. `bse`/`beams` only matter
// for the AOSA variant, which multiplies array factors per element pair.
struct AfContext {
    const SubarrayBeams *beams = nullptr;
    std::vector<Vec3> bs_offsets, ue_offsets;
    bool bse = false;
};

cplx af_at(const std::vector<Vec3> &offsets, const Mat3 &R, const Vec3 &t_global, const AnglePair &beam, double fk,
           double fc, bool bse) {
    Vec3 t = R.transpose() * t_global;
    return array_factor(offsets, fk, fc, angles_from_direction(t / t.norm()), beam, bse);
}

std::vector<Eigen::MatrixXcd> los_matrices(const Elements &EB, const Elements &EU, const PathDescriptor &p,
                                           const Waveform &wf, WaveModel wm, const AfContext *af) {
    std::vector<Eigen::MatrixXcd> H(wf.K);
    for (int k = 0; k < wf.K; ++k) {
        const double fk = wf.f(k);
        Eigen::MatrixXcd M = hop_phases(EB, EU, fk, wm) * path_coef(wf, k, 1, p.rho, p.xi, p.tau);
        if (af) {
            for (Eigen::Index b = 0; b < M.rows(); ++b)
                for (Eigen::Index u = 0; u < M.cols(); ++u) {
                    Vec3 t = wm == WaveModel::PWM ? Vec3((EU.center - EB.center).normalized())
                                                  : Vec3((EU.global[u] - EB.global[b]).normalized());
                    M(b, u) *= af_at(af->bs_offsets, EB.R, t, af->beams->bs[b], fk, wf.fc, af->bse) *
                               af_at(af->ue_offsets, EU.R, -t, af->beams->ue[u], fk, wf.fc, af->bse);
                }
        }
        H[k] = std::move(M);
    }
    return H;
}

std::vector<Eigen::MatrixXcd> nlos_matrices(const Elements &EB, const Elements &EU, const PathDescriptor &p,
                                            const Waveform &wf, WaveModel wm, const AfContext *af) {
    std::vector<Eigen::MatrixXcd> H(wf.K);
    const Vec3 &pn = p.scatter_position;
    for (int k = 0; k < wf.K; ++k) {
        const double fk = wf.f(k);
        Eigen::VectorXcd vb = point_phases(EB, pn, fk, wm);
        Eigen::VectorXcd vu = point_phases(EU, pn, fk, wm);
        Eigen::MatrixXcd M = vb * vu.transpose() * path_coef(wf, k, 1, p.rho, p.xi, p.tau);
        if (af) {
            for (Eigen::Index b = 0; b < M.rows(); ++b)
                for (Eigen::Index u = 0; u < M.cols(); ++u) {
                    Vec3 tb = wm == WaveModel::PWM ? Vec3((pn - EB.center).normalized())
                                                   : Vec3((pn - EB.global[b]).normalized());
                    Vec3 tu = wm == WaveModel::PWM ? Vec3((pn - EU.center).normalized())
                                                   : Vec3((pn - EU.global[u]).normalized());
                    M(b, u) *= af_at(af->bs_offsets, EB.R, tb, af->beams->bs[b], fk, wf.fc, af->bse) *
                               af_at(af->ue_offsets, EU.R, tu, af->beams->ue[u], fk, wf.fc, af->bse);
                }
        }
        H[k] = std::move(M);
    }
    return H;
}

std::vector<Eigen::MatrixXcd> ris_matrices(const Elements &EB, const Elements &ER, const Elements &EU,
                                           const RisProfile &profile, const PathDescriptor &p, const Waveform &wf,
                                           WaveModel wm, const AfContext *af) {
    std::vector<Eigen::MatrixXcd> H(wf.K);
    const Eigen::VectorXcd omega = profile.coefficients();
    for (int k = 0; k < wf.K; ++k) {
        const double fk = wf.f(k);
        Eigen::MatrixXcd X = hop_phases(EB, ER, fk, wm); // N_B x N_R
        Eigen::MatrixXcd Y = hop_phases(ER, EU, fk, wm); // N_R x N_U
        if (af) {
            for (Eigen::Index b = 0; b < X.rows(); ++b)
                for (Eigen::Index r = 0; r < X.cols(); ++r) {
                    Vec3 t = wm == WaveModel::PWM ? Vec3((ER.center - EB.center).normalized())
                                                  : Vec3((ER.global[r] - EB.global[b]).normalized());
                    X(b, r) *= af_at(af->bs_offsets, EB.R, t, af->beams->bs[b], fk, wf.fc, af->bse);
                }
            for (Eigen::Index r = 0; r < Y.rows(); ++r)
                for (Eigen::Index u = 0; u < Y.cols(); ++u) {
                    Vec3 t = wm == WaveModel::PWM ? Vec3((ER.center - EU.center).normalized())
                                                  : Vec3((ER.global[r] - EU.global[u]).normalized());
                    Y(r, u) *= af_at(af->ue_offsets, EU.R, t, af->beams->ue[u], fk, wf.fc, af->bse);
                }
        }
        H[k] = (X * omega.asDiagonal() * Y) * path_coef(wf, k, 2, p.rho, p.xi, p.tau);
    }
    return H;
}

void zero_if_out_of_sector(PathChannel &pc) {
    if (!pc.desc.out_of_sector) return;
    for (auto &m : pc.H) m.setZero();
}

} // namespace

PathChannel los_path(const ArraySpec &bs, const ArraySpec &ue, const Waveform &wf, double B,
                     const AbsorptionModel &absorb, WaveModel wm) {
    wf.validate();
    PathChannel pc;
    pc.desc = los_descriptor(bs, ue, wf, B, absorb);
    pc.H = los_matrices(make_elements(bs, false), make_elements(ue, false), pc.desc, wf, wm, nullptr);
    zero_if_out_of_sector(pc);
    return pc;
}

PathChannel ris_channel(const ArraySpec &bs, const ArraySpec &ris, const ArraySpec &ue, const RisProfile &profile,
                        const Waveform &wf, double B, const AbsorptionModel &absorb, WaveModel wm) {
    wf.validate();
    profile.validate(ris.num_sa());
    PathChannel pc;
    pc.desc = ris_descriptor(bs, ris, ue, wf, B, absorb);
    pc.H = ris_matrices(make_elements(bs, false), make_elements(ris, true), make_elements(ue, false), profile,
                        pc.desc, wf, wm, nullptr);
    zero_if_out_of_sector(pc);
    return pc;
}

std::vector<PathChannel> nlos_paths(const ArraySpec &bs, const ArraySpec &ue, const std::vector<Scatterer> &scatterers,
                                    const Waveform &wf, double B, const AbsorptionModel &absorb, WaveModel wm) {
    wf.validate();
    std::vector<PathChannel> out;
    const Elements EB = make_elements(bs, false), EU = make_elements(ue, false);
    for (size_t l = 0; l < scatterers.size(); ++l) {
        PathChannel pc;
        pc.desc = nlos_descriptor(bs, ue, scatterers[l], static_cast<int>(l), wf, B, absorb);
        pc.H = nlos_matrices(EB, EU, pc.desc, wf, wm, nullptr);
        zero_if_out_of_sector(pc);
        out.push_back(std::move(pc));
    }
    return out;
}

std::vector<Eigen::MatrixXcd> total_channel(const Environment &env, WaveModel wm) {
    const int nB = static_cast<int>(flat_element_positions(env.bs).size());
    const int nU = static_cast<int>(flat_element_positions(env.ue).size());
    std::vector<Eigen::MatrixXcd> H(env.wf.K, Eigen::MatrixXcd::Zero(nB, nU));
    auto add = [&](const PathChannel &pc) {
        for (int k = 0; k < env.wf.K; ++k) H[k] += pc.H[k];
    };
    if (env.include_los) add(los_path(env.bs, env.ue, env.wf, env.clock_offset, env.absorb, wm));
    if (env.ris)
        add(ris_channel(env.bs, *env.ris, env.ue, env.ris_profile, env.wf, env.clock_offset, env.absorb, wm));
    for (const auto &pc : nlos_paths(env.bs, env.ue, env.scatterers, env.wf, env.clock_offset, env.absorb, wm))
        add(pc);
    return H;
}

std::vector<Eigen::MatrixXcd> swm_channel(const Environment &env) { return total_channel(env, WaveModel::SWM); }

std::vector<Eigen::MatrixXcd> aosa_effective_channel(const Environment &env, const SubarrayBeams &beams,
                                                     WaveModel wm, bool bse) {
    env.wf.validate();
    if (static_cast<int>(beams.bs.size()) != env.bs.num_sa() || static_cast<int>(beams.ue.size()) != env.ue.num_sa())
        throw ConfigError("aosa_effective_channel: beam list length does not match subarray count");
    const Elements EB = make_elements(env.bs, true), EU = make_elements(env.ue, true);
    AfContext af;
    af.beams = &beams;
    af.bse = bse;
    af.bs_offsets = centered_grid(env.bs.ae_rows, env.bs.ae_cols, env.bs.ae_spacing);
    af.ue_offsets = centered_grid(env.ue.ae_rows, env.ue.ae_cols, env.ue.ae_spacing);
    std::vector<Eigen::MatrixXcd> H(env.wf.K, Eigen::MatrixXcd::Zero(EB.local.size(), EU.local.size()));
    auto add = [&](const PathDescriptor &d, const std::vector<Eigen::MatrixXcd> &m) {
        if (d.out_of_sector) return;
        for (int k = 0; k < env.wf.K; ++k) H[k] += m[k];
    };
    const double B = env.clock_offset;
    if (env.include_los) {
        auto d = los_descriptor(env.bs, env.ue, env.wf, B, env.absorb);
        add(d, los_matrices(EB, EU, d, env.wf, wm, &af));
    }
    if (env.ris) {
        env.ris_profile.validate(env.ris->num_sa());
        auto d = ris_descriptor(env.bs, *env.ris, env.ue, env.wf, B, env.absorb);
        add(d, ris_matrices(EB, make_elements(*env.ris, true), EU, env.ris_profile, d, env.wf, wm, &af));
    }
    for (size_t l = 0; l < env.scatterers.size(); ++l) {
        auto d = nlos_descriptor(env.bs, env.ue, env.scatterers[l], static_cast<int>(l), env.wf, B, env.absorb);
        add(d, nlos_matrices(EB, EU, d, env.wf, wm, &af));
    }
    return H;
}

Eigen::VectorXcd apply_impairments(const Eigen::VectorXcd &mu, const Eigen::MatrixXcd &H, const Eigen::VectorXcd &x,
                                   double P_mW, const ImpairmentConfig &cfg, Rng &rng) {
    cfg.validate();
    if (H.rows() != mu.size() || H.cols() != x.size()) throw ConfigError("apply_impairments: dimension mismatch");
    Eigen::VectorXcd y = mu;
    const double sp = std::sqrt(P_mW);
    if (cfg.kappa_t > 0) {
        Eigen::VectorXcd nt(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) nt(i) = rng.cnormal(cfg.kappa_t * cfg.kappa_t * std::norm(x(i)));
        y += sp * (H * nt);
    }
    if (cfg.kappa_r > 0) {
        for (Eigen::Index b = 0; b < y.size(); ++b) y(b) += rng.cnormal(cfg.kappa_r * cfg.kappa_r * std::norm(mu(b)));
    }
    if (cfg.phase_noise_std > 0) {
        for (Eigen::Index b = 0; b < y.size(); ++b) y(b) *= expj(cfg.phase_noise_std * rng.normal());
    }
    if (cfg.adc_bits > 0) {
        for (Eigen::Index b = 0; b < y.size(); ++b)
            y(b) = std::abs(y(b)) * expj(quantize_phase(std::arg(y(b)), cfg.adc_bits));
    }
    return y;
}

} // namespace thzloc
