// SPDX-License-Identifier: Apache-2.0
#include "thzloc/optimize.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "thzloc/errors.hpp"

namespace thzloc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Eigen::VectorXd ris_cascade_phases(const ArraySpec &bs, const ArraySpec &ris, const Vec3 &ue_position, double fc,
                                   WaveModel wm) {
    const std::vector<Vec3> loc = flat_element_positions(ris);
    const Mat3 R = rotation_from_euler(ris.pose.orientation);
    const Vec3 pR = ris.pose.position, pB = bs.pose.position;
    Eigen::VectorXd ph(loc.size());
    const double k = 2.0 * M_PI * fc / kSpeedOfLight;
    if (wm == WaveModel::SWM) {
        const double dB0 = (pR - pB).norm(), dU0 = (ue_position - pR).norm();
        for (size_t r = 0; r < loc.size(); ++r) {
            const Vec3 g = pR + R * loc[r];
            ph(r) = -k * (((g - pB).norm() - dB0) + ((ue_position - g).norm() - dU0));
        }
        return ph;
    }
    const Vec3 tB = R.transpose() * (pB - pR).normalized();
    const Vec3 tU = R.transpose() * (ue_position - pR).normalized();
    for (size_t r = 0; r < loc.size(); ++r) ph(r) = k * (loc[r].dot(tB) + loc[r].dot(tU));
    return ph;
}

RisProfile ris_snr_max(const ArraySpec &bs, const ArraySpec &ris, const Vec3 &ue_position, double fc, WaveModel wm) {
    const Eigen::VectorXd ph = ris_cascade_phases(bs, ris, ue_position, fc, wm);
    RisProfile p = RisProfile::unit(static_cast<int>(ph.size()));
    for (Eigen::Index r = 0; r < ph.size(); ++r) {
        double w = std::fmod(-ph(r), 2.0 * M_PI);
        p.omega(r) = w < 0 ? w + 2.0 * M_PI : w;
    }
    return p;
}

double ris_aggregate_gain(const ArraySpec &bs, const ArraySpec &ris, const Vec3 &ue_position, double fc, WaveModel wm,
                          const RisProfile &p) {
    const Eigen::VectorXd ph = ris_cascade_phases(bs, ris, ue_position, fc, wm);
    if (ph.size() != p.size()) throw ConfigError("ris_aggregate_gain: profile length mismatch");
    std::complex<double> acc(0.0, 0.0);
    for (Eigen::Index r = 0; r < ph.size(); ++r) acc += p.beta(r) * std::polar(1.0, p.omega(r) + ph(r));
    return std::abs(acc);
}

RisProfile quantize_profile(const RisProfile &p, int bits) {
    if (bits < 1) throw ConfigError("quantize_profile: bits must be >= 1");
    RisProfile q = p;
    for (Eigen::Index i = 0; i < q.omega.size(); ++i) q.omega(i) = quantize_phase(p.omega(i), bits);
    return q;
}

std::vector<int> spread_indices(int count, int n) {
    if (count < 0 || count > n) throw ConfigError("spread_indices: count out of range");
    std::vector<int> out;
    for (int j = 0; j < count; ++j) out.push_back(static_cast<int>(std::floor((j + 0.5) * n / count)));
    return out;
}

BeamAssignment beam_assignment(int b_R, int n_bs, int n_ue) {
    if (b_R < 0 || b_R > n_bs) throw ConfigError("beam assignment: b_R must be within 0..N_B");
    BeamAssignment a;
    a.b_R_bs = b_R;
    a.b_U_bs = n_bs - b_R;
    a.b_R_ue = static_cast<int>(std::lround(static_cast<double>(b_R) * n_ue / n_bs));
    a.b_U_ue = n_ue - a.b_R_ue;
    a.bs_to_ris.assign(n_bs, false);
    a.ue_to_ris.assign(n_ue, false);
    for (int i : spread_indices(a.b_R_bs, n_bs)) a.bs_to_ris[i] = true;
    for (int i : spread_indices(a.b_R_ue, n_ue)) a.ue_to_ris[i] = true;
    return a;
}

BeamSearchResult beam_assignment_search(const Scenario &s, const std::vector<int> &candidates, std::uint64_t seed,
                                        int trial) {
    if (candidates.empty()) throw ConfigError("beam_assignment_search: no candidates");
    BeamSearchResult r;
    r.candidates = candidates;
    r.peb.assign(candidates.size(), std::numeric_limits<double>::quiet_NaN());
    for (size_t i = 0; i < candidates.size(); ++i) {
        Scenario c = s;
        c.bs_beams = c.ue_beams = BeamPolicy::Prior;
        c.b_R = c.ris.enabled ? candidates[i] : 0;
        try {
            r.peb[i] = compute_bounds(realize(c, seed, trial)).peb;
        } catch (const Unidentifiable &) {
        }
    }
    r.best_peb = kInf;
    for (size_t i = 0; i < candidates.size(); ++i)
        if (r.peb[i] < r.best_peb) {
            r.best_peb = r.peb[i];
            r.best_b_R = candidates[i];
        }
    if (!std::isfinite(r.best_peb)) throw Unidentifiable("beam_assignment_search: every candidate is unidentifiable");
    return r;
}

CoverageReport coverage_from_peb(const std::vector<std::vector<double>> &peb, double eps) {
    if (peb.empty()) throw ConfigError("coverage: no candidates");
    CoverageReport r;
    r.peb = peb;
    for (const auto &row : peb) {
        if (row.empty()) throw ConfigError("coverage: empty UE grid");
        long c = 0;
        for (double v : row) c += (std::isnan(v) ? kInf : v) <= eps ? 1 : 0;
        r.counts.push_back(c);
    }
    r.best = static_cast<int>(std::max_element(r.counts.begin(), r.counts.end()) - r.counts.begin());
    return r;
}

CoverageReport ris_placement_coverage(const Scenario &s, const std::vector<Pose> &candidates,
                                      const std::vector<Vec3> &ue_grid, double eps, std::uint64_t seed) {
    if (candidates.empty()) throw ConfigError("ris_placement_coverage: empty candidate set");
    if (ue_grid.empty()) throw ConfigError("ris_placement_coverage: empty UE grid");
    const int nc = static_cast<int>(candidates.size()), np = static_cast<int>(ue_grid.size());
    std::vector<std::vector<double>> peb(nc, std::vector<double>(np, kInf));
    std::string config_error;
#pragma omp parallel for schedule(dynamic, 1)
    for (int t = 0; t < nc * np; ++t) {
        const int c = t / np, p = t % np;
        Scenario v = s;
        v.ris.enabled = true;
        v.ris.position = candidates[c].position;
        v.ris.orientation = candidates[c].orientation;
        v.ue.position = ue_grid[p];
        try {
            peb[c][p] = compute_bounds(realize(v, seed, 0)).peb;
        } catch (const ConfigError &e) {
#pragma omp critical(coverage_config_error)
            if (config_error.empty()) config_error = e.what();
        } catch (const Error &) {
            // singular or degenerate point: not covered
        }
    }
    if (!config_error.empty()) throw ConfigError(config_error);
    return coverage_from_peb(peb, eps);
}

std::vector<Pose> placement_candidates(const std::vector<Vec3> &positions, const std::vector<double> &yaws) {
    std::vector<Pose> out;
    for (const auto &p : positions)
        for (double y : yaws) {
            Pose q;
            q.position = p;
            q.orientation = Vec3(wrap_pi(y), 0.0, 0.0);
            out.push_back(q);
        }
    return out;
}

// ---------------------------------------------------------------- min-max

RisRegionObjective::RisRegionObjective(const Scenario &s, const std::vector<Vec3> &region, std::uint64_t seed,
                                       int trial) {
    if (region.empty()) throw ConfigError("ris_minmax_peb: empty uncertainty region");
    if (!s.ris.enabled) throw ConfigError("ris_minmax_peb: scenario has no RIS");
    Vec3 centroid = Vec3::Zero();
    for (const auto &q : region) centroid += q;
    centroid /= static_cast<double>(region.size());
    Scenario sc = s;
    sc.ue.position = centroid;
    sched_ = realize(sc, seed, trial).sched;
    G_ = sched_.G;
    K_ = sched_.K;
    for (const auto &q : region) {
        Scenario v = s;
        v.ue.position = q;
        ForwardModel m(realize(v, seed, trial).cfg, sched_);
        Point p;
        p.B = m.ris_element_jacobians(m.state_layout().values);
        p.pos = m.state_layout().with_prefix("p_U.");
        p.sigma2 = m.sigma2();
        nR_ = static_cast<int>(p.B.front().size()) - 1;
        pts_.push_back(std::move(p));
    }
}

std::vector<Eigen::MatrixXcd> RisRegionObjective::jac(const Point &p, const std::vector<Eigen::VectorXcd> &w) const {
    std::vector<Eigen::MatrixXcd> J(static_cast<size_t>(G_) * K_);
    for (int gk = 0; gk < G_ * K_; ++gk) {
        const auto &B = p.B[gk];
        const Eigen::VectorXcd &wg = w[gk / K_];
        Eigen::MatrixXcd Jg = B[0];
        for (int r = 0; r < nR_; ++r) Jg += wg(r) * B[1 + r];
        J[gk] = std::move(Jg);
    }
    return J;
}

Eigen::MatrixXd RisRegionObjective::fim(const Point &p, const std::vector<Eigen::VectorXcd> &w) const {
    return fim_accumulate(jac(p, w), p.sigma2, KernelPolicy::Parallel);
}

std::vector<double> RisRegionObjective::peb(const std::vector<Eigen::VectorXcd> &w) const {
    if (static_cast<int>(w.size()) != G_) throw ConfigError("RIS profiles must be given per transmission");
    std::vector<double> out;
    for (const auto &p : pts_) {
        try {
            const auto inv = robust_inverse(fim(p, w), {}, false);
            double t = 0.0;
            for (int i : p.pos) t += inv.inverse(i, i);
            out.push_back(std::sqrt(std::max(t, 0.0)));
        } catch (const Unidentifiable &) {
            out.push_back(kInf);
        }
    }
    return out;
}

std::vector<Eigen::VectorXcd> RisRegionObjective::peb2_gradient(const std::vector<Eigen::VectorXcd> &w,
                                                                int point) const {
    const Point &p = pts_.at(point);
    const auto J = jac(p, w);
    const Eigen::MatrixXd C = robust_inverse(fim_accumulate(J, p.sigma2, KernelPolicy::Parallel), {}, false).inverse;
    const Eigen::Index n = C.rows();
    Eigen::MatrixXd Cp(n, static_cast<Eigen::Index>(p.pos.size()));
    for (size_t i = 0; i < p.pos.size(); ++i) Cp.col(i) = C.col(p.pos[i]);
    const Eigen::MatrixXd W = Cp * Cp.transpose();
    std::vector<Eigen::VectorXcd> grad(G_, Eigen::VectorXcd::Zero(nR_));
    for (int gk = 0; gk < G_ * K_; ++gk) {
        const Eigen::MatrixXcd JWc = (J[gk] * W).conjugate();
        Eigen::VectorXcd &gg = grad[gk / K_];
        for (int r = 0; r < nR_; ++r) gg(r) += p.B[gk][1 + r].cwiseProduct(JWc).sum();
    }
    for (auto &gg : grad) gg *= -4.0 / p.sigma2;
    return grad;
}

namespace {
double worst_of(const std::vector<double> &v) { return *std::max_element(v.begin(), v.end()); }

std::vector<Eigen::VectorXcd> to_unit(const std::vector<Eigen::VectorXcd> &u) {
    std::vector<Eigen::VectorXcd> out = u;
    for (auto &v : out)
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            const double a = std::abs(v(i));
            v(i) = a > 0.0 ? v(i) / a : std::complex<double>(1.0, 0.0);
        }
    return out;
}
} // namespace

MinMaxResult ris_minmax_peb(const Scenario &s, const std::vector<Vec3> &region,
                            const std::vector<Eigen::VectorXcd> &init, std::uint64_t seed, int max_iter,
                            double rel_tol) {
    RisRegionObjective obj(s, region, seed);
    const int G = obj.G(), nR = obj.num_elements();
    std::vector<Eigen::VectorXcd> w = init;
    if (w.empty()) {
        Vec3 centroid = Vec3::Zero();
        for (const auto &q : region) centroid += q;
        centroid /= static_cast<double>(region.size());
        const RisProfile p = ris_snr_max(bs_spec(s), *ris_spec(s), centroid, s.wf.fc, s.wave_model);
        w.assign(G, p.coefficients());
    }
    if (static_cast<int>(w.size()) != G) throw ConfigError("ris_minmax_peb: init must hold one profile per transmission");
    for (const auto &v : w)
        if (v.size() != nR) throw ConfigError("ris_minmax_peb: init profile length mismatch");
    w = to_unit(w);

    MinMaxResult res;
    res.peb = obj.peb(w);
    res.initial_worst_peb = res.worst_peb = worst_of(res.peb);
    if (!std::isfinite(res.worst_peb)) throw Unidentifiable("ris_minmax_peb: initial profile gives an unidentifiable point");
    std::vector<Eigen::VectorXcd> u = w; // relaxed iterate, |u| <= 1
    double step = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        res.iterations = it + 1;
        const int worst = static_cast<int>(std::max_element(res.peb.begin(), res.peb.end()) - res.peb.begin());
        const auto grad = obj.peb2_gradient(w, worst);
        double gmax = 0.0;
        for (const auto &g : grad) gmax = std::max(gmax, g.cwiseAbs().maxCoeff());
        if (!(gmax > 0.0)) break;
        if (step == 0.0) step = 0.5 / gmax;
        bool accepted = false;
        for (int tries = 0; tries < 30 && !accepted; ++tries) {
            std::vector<Eigen::VectorXcd> cand = u;
            for (int g = 0; g < G; ++g) {
                cand[g] -= (step) * grad[g].conjugate();
                for (Eigen::Index i = 0; i < cand[g].size(); ++i) {
                    const double a = std::abs(cand[g](i));
                    if (a > 1.0) cand[g](i) /= a; // projection onto the unit disk
                }
            }
            const auto proj = to_unit(cand);
            const auto pe = obj.peb(proj);
            const double wc = worst_of(pe);
            if (wc < res.worst_peb) {
                const double rel = (res.worst_peb - wc) / res.worst_peb;
                u = cand;
                w = proj;
                res.peb = pe;
                res.worst_peb = wc;
                res.improved = true;
                accepted = true;
                step *= 1.5;
                if (rel < rel_tol) it = max_iter;
            } else {
                step *= 0.5;
            }
        }
        if (!accepted) break;
    }
    res.profiles = w;
    return res;
}

} // namespace thzloc
