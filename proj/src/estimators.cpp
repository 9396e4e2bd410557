// SPDX-License-Identifier: Apache-2.0
#include "thzloc/estimators.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "thzloc/errors.hpp"
#include "thzloc/fim.hpp"
#include "thzloc/rng.hpp"

namespace thzloc {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kTwoPi = 2.0 * M_PI;

double wrap_2pi(double a) {
    double w = std::fmod(a, kTwoPi);
    return w < 0 ? w + kTwoPi : w;
}
} // namespace

// ---------------------------------------------------------------- LM

LsqResult levenberg_marquardt(const ResidualFn &fn, const Eigen::VectorXd &x0, const LsqOptions &opt) {
    LsqResult res;
    Eigen::VectorXd x = x0, r;
    Eigen::MatrixXd J;
    fn(x, r, J);
    if (!r.allFinite() || !J.allFinite()) throw NumericalFailure("least squares: non-finite residual at the start");
    double cost = r.squaredNorm();
    double lambda = opt.lambda0;
    for (int it = 0; it < opt.max_iter; ++it) {
        res.iterations = it + 1;
        const Eigen::MatrixXd A = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        Eigen::VectorXd d = A.diagonal().cwiseMax(1e-300);
        bool accepted = false;
        while (lambda < 1e16) {
            Eigen::MatrixXd M = A;
            M.diagonal() += lambda * d;
            const Eigen::VectorXd step = M.ldlt().solve(-g);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd xn = x + step;
            Eigen::VectorXd rn;
            Eigen::MatrixXd Jn;
            fn(xn, rn, Jn);
            const double cn = rn.allFinite() ? rn.squaredNorm() : std::numeric_limits<double>::infinity();
            if (cn < cost) {
                const double gain = (cost - cn) / std::max(cost, 1e-300);
                const double scaled = (step.cwiseProduct(d.cwiseSqrt())).norm() /
                                      std::max((x.cwiseProduct(d.cwiseSqrt())).norm(), 1e-300);
                x = xn;
                r = rn;
                J = Jn;
                cost = cn;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                if (gain < opt.rel_cost_tol || scaled < opt.step_tol) res.converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            // no decrease possible at any damping: stationary to working precision
            res.converged = true;
            break;
        }
        if (res.converged) break;
    }
    res.x = x;
    res.cost = cost;
    res.JtJ = J.transpose() * J;
    return res;
}

// ---------------------------------------------------------------- results

Vec3 EstimationResult::position(int dims) const {
    Vec3 p = Vec3::Zero();
    const char *axes[3] = {"x", "y", "z"};
    for (int i = 0; i < dims; ++i) p(i) = value(std::string("p_U.") + axes[i]);
    return p;
}

double EstimationResult::value(const std::string &label) const {
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return state(static_cast<Eigen::Index>(i));
    throw ConfigError("estimate has no entry '" + label + "'");
}

// ---------------------------------------------------------------- direct MLE

namespace {

Eigen::VectorXcd white_resid(const ForwardModel &m, const Eigen::VectorXcd &v, int g) { return m.whiten(v, g); }

void stack(const std::vector<Eigen::VectorXcd> &v, Eigen::VectorXd &r) {
    Eigen::Index n = 0;
    for (const auto &x : v) n += x.size();
    r.resize(2 * n);
    Eigen::Index o = 0;
    for (const auto &x : v) {
        r.segment(o, x.size()) = x.real();
        r.segment(n + o, x.size()) = x.imag();
        o += x.size();
    }
}

void stack_jac(const std::vector<Eigen::MatrixXcd> &J, Eigen::MatrixXd &out, double sign) {
    Eigen::Index n = 0;
    for (const auto &x : J) n += x.rows();
    const Eigen::Index c = J.empty() ? 0 : J.front().cols();
    out.resize(2 * n, c);
    Eigen::Index o = 0;
    for (const auto &x : J) {
        out.block(o, 0, x.rows(), c) = sign * x.real();
        out.block(n + o, 0, x.rows(), c) = sign * x.imag();
        o += x.rows();
    }
}

void check_obs(const ForwardModel &m, const ObservationSet &obs) {
    if (obs.G != m.G() || obs.K != m.K() || static_cast<int>(obs.y.size()) != m.G() * m.K())
        throw ConfigError("observation set does not match the model's G and K");
    for (const auto &y : obs.y)
        if (y.size() != m.rx_dim()) throw ConfigError("observation length does not match the receiver dimension");
}

std::vector<Eigen::VectorXcd> whitened_obs(const ForwardModel &m, const ObservationSet &obs) {
    std::vector<Eigen::VectorXcd> w(obs.y.size());
    for (size_t i = 0; i < obs.y.size(); ++i) w[i] = white_resid(m, obs.y[i], static_cast<int>(i) / m.K());
    return w;
}

// Linear LS for complex gains given whitened responses; returns the residual cost.
double solve_gains(const std::vector<std::vector<Eigen::VectorXcd>> &R, const std::vector<Eigen::VectorXcd> &Y,
                   std::vector<std::complex<double>> &alpha) {
    const size_t P = R.size();
    Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(P, P);
    Eigen::VectorXcd b = Eigen::VectorXcd::Zero(P);
    for (size_t t = 0; t < Y.size(); ++t) {
        for (size_t p = 0; p < P; ++p) {
            b(p) += R[p][t].dot(Y[t]);
            for (size_t q = 0; q < P; ++q) A(p, q) += R[p][t].dot(R[q][t]);
        }
    }
    const Eigen::VectorXcd a = A.completeOrthogonalDecomposition().solve(b);
    alpha.assign(a.data(), a.data() + a.size());
    double cost = 0.0;
    for (size_t t = 0; t < Y.size(); ++t) {
        Eigen::VectorXcd e = Y[t];
        for (size_t p = 0; p < P; ++p) e -= a(p) * R[p][t];
        cost += e.squaredNorm();
    }
    return cost;
}

std::vector<std::vector<Eigen::VectorXcd>> whitened_responses(const ForwardModel &m,
                                                             std::vector<std::vector<Eigen::VectorXcd>> R) {
    for (auto &path : R)
        for (size_t t = 0; t < path.size(); ++t) path[t] = m.whiten(path[t], static_cast<int>(t) / m.K());
    return R;
}

// Fill rho/xi entries of s from complex gains alpha = rho exp(-j xi).
void set_gains(const ForwardModel &m, Eigen::VectorXd &s, const std::vector<std::complex<double>> &alpha) {
    const ParamVectors &L = m.state_layout();
    for (size_t p = 0; p < m.paths().size(); ++p) {
        const std::string &name = m.paths()[p].name;
        const int ir = L.find("rho." + name), ix = L.find("xi." + name);
        if (ir >= 0) s(ir) = std::abs(alpha[p]);
        if (ix >= 0) s(ix) = wrap_2pi(-std::arg(alpha[p]));
    }
}

void tidy_state(const ForwardModel &m, Eigen::VectorXd &s) {
    const ParamVectors &L = m.state_layout();
    for (int i = 0; i < L.size(); ++i) {
        if (L.entries[i].kind == ParamKind::Phase) s(i) = wrap_2pi(s(i));
        if (L.entries[i].kind == ParamKind::Amplitude && s(i) < 0.0) {
            // a negative amplitude is the same path with a phase shift of pi
            s(i) = -s(i);
            const std::string name = L.entries[i].label.substr(4);
            const int ix = L.find("xi." + name);
            if (ix >= 0) s(ix) = wrap_2pi(s(ix) + M_PI);
        }
    }
}

Eigen::MatrixXd covariance_from_fim(const Eigen::MatrixXd &F) {
    try {
        return robust_inverse(F, {}, false).inverse;
    } catch (const Unidentifiable &) {
        return Eigen::MatrixXd();
    }
}

} // namespace

double direct_cost(const ForwardModel &m, const ObservationSet &obs, const Eigen::VectorXd &s) {
    check_obs(m, obs);
    const auto mu = m.mean_state(s);
    double c = 0.0;
    for (size_t i = 0; i < mu.size(); ++i)
        c += white_resid(m, obs.y[i] - mu[i], static_cast<int>(i) / m.K()).squaredNorm();
    return c;
}

double concentrated_cost(const ForwardModel &m, const ObservationSet &obs, const Eigen::VectorXd &s,
                         std::vector<std::complex<double>> *gains) {
    check_obs(m, obs);
    const auto R = whitened_responses(m, m.path_responses_state(s));
    std::vector<std::complex<double>> a;
    const double c = solve_gains(R, whitened_obs(m, obs), a);
    if (gains) *gains = a;
    return c;
}

EstimationResult direct_mle(const ForwardModel &m, const ObservationSet &obs, const DirectMleConfig &cfg) {
    check_obs(m, obs);
    const ParamVectors &L = m.state_layout();
    const ModelConfig &mc = m.config();
    const int dims = mc.dims;
    if (cfg.grid_points < 1) throw ConfigError("direct_mle: grid_points must be >= 1");

    // starting state: nuisance entries from the caller or the scenario's nominal map
    Eigen::VectorXd s0 = L.values;
    if (cfg.nuisance_init) {
        if (cfg.nuisance_init->size() != L.size()) throw ConfigError("direct_mle: nuisance_init has wrong length");
        for (int i = 0; i < L.size(); ++i)
            if (L.entries[i].label == "B" || L.entries[i].label.rfind("p_N", 0) == 0) s0(i) = (*cfg.nuisance_init)(i);
    }
    // prior box: given, or the anchors' extent
    Vec3 lo, hi;
    if (cfg.box_lo && cfg.box_hi) {
        lo = *cfg.box_lo;
        hi = *cfg.box_hi;
    } else {
        const Vec3 pB = mc.bs.pose.position;
        double reach = 10.0;
        if (mc.ris) reach = std::max(reach, 1.5 * (mc.ris->pose.position - pB).norm());
        for (const auto &sc : mc.scatterers) reach = std::max(reach, 1.5 * (sc.position - pB).norm());
        lo = pB - Vec3::Constant(reach);
        hi = pB + Vec3::Constant(reach);
    }
    for (int i = 0; i < dims; ++i)
        if (!(hi(i) >= lo(i))) throw ConfigError("direct_mle: prior box upper corner below lower corner");

    std::vector<int> ip;
    for (int i = 0; i < dims; ++i) ip.push_back(L.index(std::string("p_U.") + "xyz"[i]));
    const int ia = L.find("o_U.alpha");
    const int n_or = ia >= 0 ? std::max(1, cfg.orientation_points) : 1;

    auto axis = [&](int i, int k) {
        const int n = cfg.grid_points;
        return n == 1 ? 0.5 * (lo(i) + hi(i)) : lo(i) + (hi(i) - lo(i)) * k / (n - 1);
    };
    const int nz = dims == 3 ? cfg.grid_points : 1;
    const long total = static_cast<long>(cfg.grid_points) * cfg.grid_points * nz * n_or;
    std::vector<double> costs(static_cast<size_t>(total), std::numeric_limits<double>::infinity());
    const auto Y = whitened_obs(m, obs);

    auto grid_state = [&](long t) {
        Eigen::VectorXd s = s0;
        long r = t;
        const int io = static_cast<int>(r % n_or);
        r /= n_or;
        const int kx = static_cast<int>(r % cfg.grid_points);
        r /= cfg.grid_points;
        const int ky = static_cast<int>(r % cfg.grid_points);
        r /= cfg.grid_points;
        s(ip[0]) = axis(0, kx);
        s(ip[1]) = axis(1, ky);
        if (dims == 3) s(ip[2]) = axis(2, static_cast<int>(r));
        if (ia >= 0) s(ia) = wrap_pi(-M_PI + kTwoPi * (io + 0.5) / n_or);
        return s;
    };
#pragma omp parallel for schedule(dynamic, 16)
    for (long t = 0; t < total; ++t) {
        const Eigen::VectorXd s = grid_state(t);
        std::vector<std::complex<double>> a;
        try {
            costs[t] = solve_gains(whitened_responses(m, m.path_responses_state(s)), Y, a);
        } catch (const Error &) {
            // grid point on a degenerate geometry (e.g. at the BS)
        }
    }
    std::vector<long> order(static_cast<size_t>(total));
    std::iota(order.begin(), order.end(), 0L);
    const int starts = static_cast<int>(std::min<long>(std::max(1, cfg.starts), total));
    std::partial_sort(order.begin(), order.begin() + starts, order.end(),
                      [&](long a, long b) { return costs[a] < costs[b] || (costs[a] == costs[b] && a < b); });
    if (!std::isfinite(costs[order[0]])) throw NumericalFailure("direct_mle: no valid grid point");

    const ResidualFn fn = [&](const Eigen::VectorXd &s, Eigen::VectorXd &r, Eigen::MatrixXd &J) {
        const auto mu = m.mean_state(s);
        std::vector<Eigen::VectorXcd> e(mu.size());
        for (size_t i = 0; i < mu.size(); ++i) e[i] = white_resid(m, obs.y[i] - mu[i], static_cast<int>(i) / m.K());
        stack(e, r);
        stack_jac(m.jacobian_state(s), J, -1.0);
    };

    EstimationResult best;
    best.cost = std::numeric_limits<double>::infinity();
    for (int st = 0; st < starts; ++st) {
        Eigen::VectorXd s = grid_state(order[st]);
        std::vector<std::complex<double>> a;
        solve_gains(whitened_responses(m, m.path_responses_state(s)), Y, a);
        set_gains(m, s, a);
        LsqResult lr;
        try {
            lr = levenberg_marquardt(fn, s, cfg.lsq);
        } catch (const Error &) {
            continue;
        }
        if (lr.cost < best.cost) {
            best.state = lr.x;
            best.cost = lr.cost;
            best.iterations = lr.iterations;
            best.converged = lr.converged;
        }
    }
    if (!std::isfinite(best.cost)) throw NumericalFailure("direct_mle: refinement failed from every start");
    tidy_state(m, best.state);
    best.labels = L.labels();
    try {
        best.covariance = covariance_from_fim(fim_accumulate(m.jacobian_state(best.state), m.sigma2(), KernelPolicy::Parallel));
    } catch (const Error &) {
    }
    return best;
}

// ---------------------------------------------------------------- stage 1

namespace {

struct ScanContext {
    const ForwardModel &m;
    std::vector<Vec3> sa_centers; // BS subarray centers, local frame
    SubarrayGrid grid;
    bool has_af = false;
};

// BS-side narrowband response for a local direction at frequency f, per g.
Eigen::VectorXcd bs_response(const ScanContext &c, const Vec3 &t, int g, double f, double fb) {
    const int n = static_cast<int>(c.sa_centers.size());
    Eigen::VectorXcd v(n);
    const double k = kTwoPi * f / kSpeedOfLight;
    for (int b = 0; b < n; ++b) {
        std::complex<double> e = std::polar(1.0, k * c.sa_centers[b].dot(t));
        if (c.has_af) e *= grid_array_factor<double>(c.grid, t, c.m.schedule().bs_beams[g][b], f, fb);
        v(b) = e;
    }
    if (!c.m.schedule().combiner.empty()) return c.m.schedule().combiner[g] * v;
    return v;
}

double angle_score(const ScanContext &c, const std::vector<Eigen::VectorXcd> &z, double az, double el) {
    const Vec3 t = direction_from_angles(az, el);
    const double fc = c.m.config().wf.fc;
    std::complex<double> acc(0.0, 0.0);
    double norm = 0.0;
    for (int g = 0; g < c.m.G(); ++g) {
        const Eigen::VectorXcd v = bs_response(c, t, g, fc, fc);
        acc += v.dot(z[g]);
        norm += v.squaredNorm();
    }
    return norm > 0.0 ? std::norm(acc) / norm : 0.0;
}

} // namespace

ChannelEstimate estimate_channel_params(const ForwardModel &m, const ObservationSet &obs, int path_count,
                                        const ChannelEstimatorConfig &cfg) {
    check_obs(m, obs);
    ChannelEstimate out;
    if (path_count == 0) return out;
    const ParamVectors &GL = m.measurement_layout();
    const ModelConfig &mc = m.config();
    if (!m.has_measurement_layout())
        throw ConfigError("estimate_channel_params: channel parameters are defined for the plane-wave model only");
    if (mc.ris) throw ConfigError("estimate_channel_params: RIS paths are not supported by the stage-1 estimator");
    if (mc.ue.num_sa() != 1 || mc.ue.num_ae_per_sa() != 1)
        throw ConfigError("estimate_channel_params: the stage-1 estimator expects a single-element UE");
    const int P = static_cast<int>(m.paths().size());
    if (path_count != P)
        throw ConfigError("estimate_channel_params: path_count must equal the number of model paths (" +
                          std::to_string(P) + ")");
    if (mc.bs.num_sa() * mc.bs.num_ae_per_sa() < 2)
        throw ConfigError("estimate_channel_params: angle search needs a multi-element BS");

    const Waveform &wf = mc.wf;
    const int G = m.G(), K = m.K();
    ScanContext sc{m, {}, SubarrayGrid(mc.bs.ae_rows, mc.bs.ae_cols, mc.bs.ae_spacing), false};
    for (const auto &sa : element_positions(mc.bs)) sc.sa_centers.push_back(sa.center);
    sc.has_af = !sc.grid.trivial();

    std::vector<Eigen::VectorXcd> resid = obs.y;
    struct Est {
        double tau, az, el;
        std::complex<double> alpha;
    };
    std::vector<Est> est;
    Eigen::VectorXd gam = GL.values * 0.0;

    for (int p = 0; p < P; ++p) {
        // delay: correlation peak over the unambiguous window
        const double step = 1.0 / (cfg.delay_oversampling * K * wf.W);
        const int nt = static_cast<int>(std::ceil(K / wf.W / step));
        std::vector<double> pw(nt, 0.0);
        for (int i = 0; i < nt; ++i) {
            const double tau = cfg.tau_min + i * step;
            double acc = 0.0;
            for (int g = 0; g < G; ++g) {
                Eigen::VectorXcd s = Eigen::VectorXcd::Zero(m.rx_dim());
                for (int k = 0; k < K; ++k) {
                    const Eigen::VectorXcd &x = m.schedule().pilot(g, k);
                    s += resid[static_cast<size_t>(g) * K + k] * (std::conj(x(0)) * std::polar(1.0, kTwoPi * wf.df(k) * tau));
                }
                acc += s.squaredNorm();
            }
            pw[i] = acc;
        }
        const int ib = static_cast<int>(std::max_element(pw.begin(), pw.end()) - pw.begin());
        double off = 0.0;
        {
            const double a = pw[(ib - 1 + nt) % nt], b = pw[ib], c = pw[(ib + 1) % nt];
            const double den = a - 2.0 * b + c;
            if (den < 0.0) off = 0.5 * (a - c) / den;
        }
        const double tau = cfg.tau_min + (ib + off) * step;

        // angles: delay-compensated beamspace scan
        std::vector<Eigen::VectorXcd> z(G, Eigen::VectorXcd::Zero(m.rx_dim()));
        for (int g = 0; g < G; ++g)
            for (int k = 0; k < K; ++k) {
                const Eigen::VectorXcd &x = m.schedule().pilot(g, k);
                z[g] += resid[static_cast<size_t>(g) * K + k] *
                        (std::conj(x(0)) * std::polar(1.0 / wf.ck(k), kTwoPi * wf.df(k) * tau));
            }
        const double d2r = M_PI / 180.0;
        double baz = 0.0, bel = 0.0, bs = -1.0;
        const bool scan_el = mc.bs.sa_rows * mc.bs.ae_rows > 1;
        const int naz = static_cast<int>(std::round(180.0 / cfg.coarse_deg));
        const int nel = scan_el ? naz : 0;
        for (int i = 0; i <= naz; ++i)
            for (int j = 0; j <= nel; ++j) {
                const double az = (-90.0 + i * cfg.coarse_deg) * d2r;
                const double el = scan_el ? (-90.0 + j * cfg.coarse_deg) * d2r : 0.0;
                const double v = angle_score(sc, z, az, el);
                if (v > bs) {
                    bs = v;
                    baz = az;
                    bel = el;
                }
            }
        double span = cfg.coarse_deg * d2r;
        for (int lvl = 0; lvl < cfg.refine_levels; ++lvl) {
            const double st = span / 10.0;
            const double caz = baz, cel = bel;
            for (int i = -10; i <= 10; ++i)
                for (int j = scan_el ? -10 : 0; j <= (scan_el ? 10 : 0); ++j) {
                    const double az = caz + i * st, el = std::clamp(cel + j * st, -M_PI / 2, M_PI / 2);
                    const double v = angle_score(sc, z, az, el);
                    if (v > bs) {
                        bs = v;
                        baz = az;
                        bel = el;
                    }
                }
            span = st;
        }

        // gain by LS with the exact unit response, then cancel
        Eigen::VectorXd gtmp = gam;
        gtmp(GL.index("tau." + m.paths()[p].name)) = tau;
        if (GL.find("aoa." + m.paths()[p].name + ".az") >= 0) {
            gtmp(GL.index("aoa." + m.paths()[p].name + ".az")) = baz;
            gtmp(GL.index("aoa." + m.paths()[p].name + ".el")) = bel;
        }
        const auto R = m.path_responses_measurement(gtmp);
        std::complex<double> num(0.0, 0.0);
        double den = 0.0;
        for (size_t t = 0; t < resid.size(); ++t) {
            const int g = static_cast<int>(t) / K;
            const Eigen::VectorXcd rw = m.whiten(R[p][t], g), yw = m.whiten(resid[t], g);
            num += rw.dot(yw);
            den += rw.squaredNorm();
        }
        const std::complex<double> alpha = den > 0.0 ? num / den : std::complex<double>(0.0, 0.0);
        for (size_t t = 0; t < resid.size(); ++t) resid[t] -= alpha * R[p][t];
        est.push_back({tau, baz, bel, alpha});
    }

    // associate by delay order with the prior ordering of the model paths
    std::vector<int> by_est(P), by_model(P);
    std::iota(by_est.begin(), by_est.end(), 0);
    std::iota(by_model.begin(), by_model.end(), 0);
    std::sort(by_est.begin(), by_est.end(), [&](int a, int b) { return est[a].tau < est[b].tau; });
    std::stable_sort(by_model.begin(), by_model.end(), [&](int a, int b) {
        return GL.values(GL.index("tau." + m.paths()[a].name)) < GL.values(GL.index("tau." + m.paths()[b].name));
    });
    for (int i = 0; i < P; ++i) {
        const Est &e = est[by_est[i]];
        const std::string &name = m.paths()[by_model[i]].name;
        gam(GL.index("rho." + name)) = std::abs(e.alpha);
        gam(GL.index("xi." + name)) = wrap_2pi(-std::arg(e.alpha));
        gam(GL.index("tau." + name)) = e.tau;
        if (GL.find("aoa." + name + ".az") >= 0) {
            gam(GL.index("aoa." + name + ".az")) = e.az;
            gam(GL.index("aoa." + name + ".el")) = e.el;
        }
    }
    for (int a = 0; a < P; ++a)
        for (int b = a + 1; b < P; ++b)
            if (std::abs(est[a].tau - est[b].tau) < 1.0 / wf.W &&
                std::hypot(est[a].az - est[b].az, est[a].el - est[b].el) < 5.0 * M_PI / 180.0)
                out.unresolved = true;

    // joint refinement over gamma
    const ResidualFn fn = [&](const Eigen::VectorXd &gv, Eigen::VectorXd &r, Eigen::MatrixXd &J) {
        const auto mu = m.mean_measurement(gv);
        std::vector<Eigen::VectorXcd> e(mu.size());
        for (size_t i = 0; i < mu.size(); ++i) e[i] = white_resid(m, obs.y[i] - mu[i], static_cast<int>(i) / K);
        stack(e, r);
        stack_jac(m.jacobian_measurement(gv), J, -1.0);
    };
    const LsqResult lr = levenberg_marquardt(fn, gam, cfg.lsq);
    out.gamma = lr.x;
    for (int i = 0; i < GL.size(); ++i) {
        if (GL.entries[i].kind == ParamKind::Phase) out.gamma(i) = wrap_2pi(out.gamma(i));
        if (GL.entries[i].kind == ParamKind::Amplitude && out.gamma(i) < 0.0) {
            out.gamma(i) = -out.gamma(i);
            const int ix = GL.index("xi." + GL.entries[i].label.substr(4));
            out.gamma(ix) = wrap_2pi(out.gamma(ix) + M_PI);
        }
    }
    out.labels = GL.labels();
    out.cost = lr.cost;
    out.iterations = lr.iterations;
    out.converged = lr.converged;
    out.covariance = covariance_from_fim(fim_measurement(m, out.gamma).matrix);
    return out;
}

// ---------------------------------------------------------------- stage 2

namespace {

// Closed-form initial state from LOS (and NLOS) measurements.
Eigen::VectorXd closed_form_init(const ForwardModel &m, const Eigen::VectorXd &gam) {
    const ParamVectors &SL = m.state_layout();
    const ParamVectors &GL = m.measurement_layout();
    const ModelConfig &mc = m.config();
    Eigen::VectorXd s = SL.values; // nuisance entries keep their nominal values
    const double B = SL.find("B") >= 0 ? SL.values(SL.index("B")) : mc.clock_offset;
    const Mat3 RB = rotation_from_euler(mc.bs.pose.orientation);
    const Vec3 pB = mc.bs.pose.position;
    int los = -1;
    for (size_t p = 0; p < m.paths().size(); ++p)
        if (m.paths()[p].kind == PathKind::LOS) los = static_cast<int>(p);
    if (los < 0 || GL.find("aoa.L.az") < 0)
        throw Unidentifiable("multistage_solve: closed-form initialization needs a LOS path with an AOA; pass an initial state");
    auto aoa_dir = [&](const std::string &name) {
        return Vec3(RB * direction_from_angles(gam(GL.index("aoa." + name + ".az")), gam(GL.index("aoa." + name + ".el"))));
    };
    const Vec3 pU = pB + kSpeedOfLight * (gam(GL.index("tau.L")) - B) * aoa_dir("L");
    for (int i = 0; i < mc.dims; ++i) s(SL.index(std::string("p_U.") + "xyz"[i])) = pU(i);

    std::vector<Vec3> local, global;
    for (size_t p = 0; p < m.paths().size(); ++p) {
        const PathInfo &pi = m.paths()[p];
        const std::string &name = pi.name;
        if (SL.find("rho." + name) >= 0) s(SL.index("rho." + name)) = gam(GL.index("rho." + name));
        s(SL.index("xi." + name)) = gam(GL.index("xi." + name));
        Vec3 anchor = pB;
        if (pi.kind == PathKind::NLOS) {
            const double ct = kSpeedOfLight * (gam(GL.index("tau." + name)) - B);
            const Vec3 d = pU - pB;
            Vec3 pN = mc.scatterers[pi.index].position;
            if (GL.find("aoa." + name + ".az") >= 0) {
                const Vec3 t = aoa_dir(name);
                const double den = 2.0 * (ct - t.dot(d));
                if (std::abs(den) > 1e-12) {
                    const double r = (ct * ct - d.squaredNorm()) / den;
                    if (r > 0.0) pN = pB + r * t;
                }
            }
            for (int i = 0; i < mc.dims; ++i)
                if (SL.find("p_" + name + "." + "xyz"[i]) >= 0) s(SL.index("p_" + name + "." + "xyz"[i])) = pN(i);
            anchor = pN;
        } else if (pi.kind == PathKind::RIS) {
            anchor = mc.ris->pose.position;
        }
        if (GL.find("aod." + name + ".az") >= 0) {
            local.push_back(direction_from_angles(gam(GL.index("aod." + name + ".az")), gam(GL.index("aod." + name + ".el"))));
            global.push_back((anchor - pU).normalized());
        }
    }
    const int ia = SL.find("o_U.alpha");
    if (ia >= 0 && !local.empty()) {
        bool done = false;
        if (local.size() >= 2) {
            try {
                const Vec3 e = euler_from_rotation(procrustes_rotation(local, global));
                for (int i = 0; i < (mc.dims == 3 ? 3 : 1); ++i) s(ia + i) = e(i);
                done = true;
            } catch (const DegenerateGeometry &) {
            }
        }
        if (!done) {
            // yaw only: azimuth of the global direction minus the local AOD azimuth
            const double gaz = std::atan2(global[0](1), global[0](0));
            const double laz = std::atan2(local[0](1), local[0](0));
            s(ia) = wrap_pi(gaz - laz);
        }
    }
    return s;
}

} // namespace

EstimationResult multistage_solve(const ForwardModel &m, const ChannelEstimate &ce,
                                  const std::optional<Eigen::VectorXd> &init, const LsqOptions &opt) {
    const ParamVectors &SL = m.state_layout();
    const ParamVectors &GL = m.measurement_layout();
    if (ce.gamma.size() != GL.size()) throw ConfigError("multistage_solve: measurement vector has wrong length");
    if (GL.size() < SL.size())
        throw Unidentifiable("multistage_solve: " + std::to_string(GL.size()) + " measurements for " +
                             std::to_string(SL.size()) + " unknowns");
    EstimationResult res;
    Eigen::MatrixXd W; // whitening with W^T W = Sigma^{-1}
    if (ce.covariance.size() == 0) {
        W = Eigen::MatrixXd::Identity(GL.size(), GL.size());
        res.identity_weighting = true;
    } else {
        if (ce.covariance.rows() != GL.size() || ce.covariance.cols() != GL.size())
            throw ConfigError("multistage_solve: covariance has wrong shape");
        // entries span many decades (gains vs delays): equilibrate before the eigensolve
        const Eigen::MatrixXd C = 0.5 * (ce.covariance + ce.covariance.transpose());
        const Eigen::VectorXd e = C.diagonal().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
        const Eigen::MatrixXd Cs = e.asDiagonal() * C * e.asDiagonal();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Cs);
        const double top = es.eigenvalues().maxCoeff();
        Eigen::VectorXd w(GL.size());
        for (int i = 0; i < GL.size(); ++i) {
            const double l = es.eigenvalues()(i);
            w(i) = l > 1e-12 * top ? 1.0 / std::sqrt(l) : 0.0;
        }
        W = w.asDiagonal() * es.eigenvectors().transpose() * e.asDiagonal();
    }
    Eigen::VectorXd s0 = init ? *init : closed_form_init(m, ce.gamma);
    if (s0.size() != SL.size()) throw ConfigError("multistage_solve: initial state has wrong length");

    const ResidualFn fn = [&](const Eigen::VectorXd &s, Eigen::VectorXd &r, Eigen::MatrixXd &J) {
        Eigen::VectorXd e = ce.gamma - m.gamma_of_state(s);
        for (int i = 0; i < GL.size(); ++i)
            if (GL.entries[i].kind == ParamKind::Angle || GL.entries[i].kind == ParamKind::Phase) e(i) = wrap_pi(e(i));
        r = W * e;
        J = -W * m.gamma_jacobian(s);
    };
    const LsqResult lr = levenberg_marquardt(fn, s0, opt);
    res.state = lr.x;
    tidy_state(m, res.state);
    res.labels = SL.labels();
    res.cost = lr.cost;
    res.iterations = lr.iterations;
    res.converged = lr.converged;
    res.covariance = covariance_from_fim(lr.JtJ);
    return res;
}

// ---------------------------------------------------------------- orientation

Mat3 procrustes_rotation(const std::vector<Vec3> &local_dirs, const std::vector<Vec3> &global_dirs) {
    if (local_dirs.size() != global_dirs.size()) throw ConfigError("procrustes: direction lists differ in length");
    if (local_dirs.size() < 2) throw DegenerateGeometry("procrustes: at least two directions are required");
    Mat3 M = Mat3::Zero();
    bool spread = false;
    for (size_t i = 0; i < local_dirs.size(); ++i) {
        const Vec3 l = local_dirs[i].normalized(), g = global_dirs[i].normalized();
        M += g * l.transpose();
        for (size_t j = 0; j < i; ++j)
            if (l.cross(local_dirs[j].normalized()).norm() > 1e-9 && g.cross(global_dirs[j].normalized()).norm() > 1e-9)
                spread = true;
    }
    if (!spread) throw DegenerateGeometry("procrustes: directions are collinear");
    Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 D = Mat3::Identity();
    D(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
    return svd.matrixU() * D * svd.matrixV().transpose();
}

Mat3 orientation_from_aods(const std::vector<AnglePair> &aods, const Vec3 &ue_position,
                           const std::vector<Vec3> &anchors) {
    if (aods.size() != anchors.size()) throw ConfigError("orientation_from_aods: one AOD per anchor is required");
    std::vector<Vec3> l, g;
    for (size_t i = 0; i < aods.size(); ++i) {
        l.push_back(direction_from_angles(aods[i]));
        const Vec3 d = anchors[i] - ue_position;
        if (d.norm() == 0.0) throw DegenerateGeometry("orientation_from_aods: anchor coincides with the UE");
        g.push_back(d.normalized());
    }
    return procrustes_rotation(l, g);
}

// ---------------------------------------------------------------- Monte-Carlo

TrialSummary run_estimator_trials(const Scenario &s, EstimatorKind kind, int trials, std::uint64_t seed,
                                  const DirectMleConfig &dcfg, const ChannelEstimatorConfig &ccfg) {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    const Realization real = realize(s, seed, 0);
    const ForwardModel m(real.cfg, real.sched);
    const Eigen::VectorXd truth = m.state_layout().values;
    const auto mu = m.mean_state(truth);
    TrialSummary out;
    out.peb = compute_bounds(real).peb;
    out.records.resize(trials);
    const int dims = real.cfg.dims;
    Vec3 p_true = Vec3::Zero();
    for (int i = 0; i < dims; ++i) p_true(i) = truth(m.state_layout().index(std::string("p_U.") + "xyz"[i]));
    std::string config_error;
#pragma omp parallel for schedule(dynamic, 1)
    for (int t = 0; t < trials; ++t) {
        TrialRecord rec;
        rec.trial = t;
        rec.error = kNaN;
        try {
            Rng rng(seed, "noise", static_cast<std::uint64_t>(t));
            const ObservationSet obs = add_noise(mu, m.G(), m.K(), m.sigma2(), m.schedule().combiner, rng);
            EstimationResult r;
            if (kind == EstimatorKind::Direct) {
                r = direct_mle(m, obs, dcfg);
            } else {
                const ChannelEstimate ce = estimate_channel_params(m, obs, static_cast<int>(m.paths().size()), ccfg);
                r = multistage_solve(m, ce);
            }
            rec.error = (r.position(dims) - p_true).norm();
            rec.converged = r.converged;
        } catch (const ConfigError &e) {
#pragma omp critical(trials_config_error)
            if (config_error.empty()) config_error = e.what();
        } catch (const Error &) {
        }
        out.records[t] = rec;
    }
    if (!config_error.empty()) throw ConfigError(config_error);
    double acc = 0.0;
    int ok = 0;
    for (const auto &r : out.records) {
        if (std::isnan(r.error)) {
            ++out.failures;
            continue;
        }
        acc += r.error * r.error;
        ++ok;
    }
    out.rmse = ok > 0 ? std::sqrt(acc / ok) : kNaN;
    return out;
}

} // namespace thzloc
