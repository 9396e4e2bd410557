// SPDX-License-Identifier: Apache-2.0
#include "thzloc/fim.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "thzloc/errors.hpp"

namespace thzloc {

Eigen::MatrixXd fim_accumulate(const std::vector<Eigen::MatrixXcd> &J, double sigma2, KernelPolicy policy) {
    if (J.empty()) throw ConfigError("fim_accumulate: no Jacobian terms");
    if (!(sigma2 > 0.0)) throw ConfigError("fim_accumulate: noise variance must be positive");
    const Eigen::Index n = J.front().cols();
    if (policy == KernelPolicy::Serial) {
        Eigen::MatrixXd F = Eigen::MatrixXd::Zero(n, n);
        for (const auto &Jt : J)
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index j = i; j < n; ++j) {
                    double acc = 0.0;
                    for (Eigen::Index r = 0; r < Jt.rows(); ++r) acc += std::real(std::conj(Jt(r, i)) * Jt(r, j));
                    F(i, j) += acc;
                }
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < i; ++j) F(i, j) = F(j, i);
        return (2.0 / sigma2) * F;
    }
    const int T = static_cast<int>(J.size());
    std::vector<Eigen::MatrixXd> terms(T);
#pragma omp parallel for schedule(static)
    for (int t = 0; t < T; ++t) {
        Eigen::MatrixXd Ft(n, n);
        Ft.triangularView<Eigen::Upper>() = (J[t].adjoint() * J[t]).real();
        terms[t] = Ft.selfadjointView<Eigen::Upper>();
    }
    // pairwise tree; each level writes a fresh buffer so no slot is read after being overwritten
    std::vector<Eigen::MatrixXd> next;
    while (terms.size() > 1) {
        const int len = static_cast<int>(terms.size()), half = len / 2;
        next.assign(half + len % 2, Eigen::MatrixXd());
#pragma omp parallel for schedule(static)
        for (int i = 0; i < half; ++i) next[i] = terms[2 * i] + terms[2 * i + 1];
        if (len % 2) next[half] = std::move(terms[len - 1]);
        terms.swap(next);
    }
    return (2.0 / sigma2) * terms[0];
}

InverseResult robust_inverse(const Eigen::MatrixXd &F, const std::vector<std::string> &labels, bool allow_pseudo) {
    const Eigen::Index n = F.rows();
    InverseResult out;
    if (n == 0) {
        out.full_rank = true;
        return out;
    }
    if (!F.allFinite()) throw NumericalFailure("information matrix has non-finite entries");
    Eigen::VectorXd d(n);
    for (Eigen::Index i = 0; i < n; ++i) d(i) = F(i, i) > 0.0 ? 1.0 / std::sqrt(F(i, i)) : 0.0;
    Eigen::MatrixXd Fs = d.asDiagonal() * F * d.asDiagonal();
    Fs = 0.5 * (Fs + Fs.transpose());
    for (Eigen::Index i = 0; i < n; ++i)
        if (d(i) == 0.0) Fs(i, i) = 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Fs);
    if (es.info() != Eigen::Success) throw NumericalFailure("eigendecomposition of the information matrix failed");
    const Eigen::VectorXd &ev = es.eigenvalues();
    const double lmax = std::max(ev.maxCoeff(), 0.0);
    const double floor = 1e-12 * lmax;
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
    out.rank = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (lmax > 0.0 && ev(i) > floor) {
            inv(i) = 1.0 / ev(i);
            ++out.rank;
        } else {
            // describe the null direction by its dominant parameters
            Eigen::VectorXd v = es.eigenvectors().col(i).cwiseAbs();
            std::vector<Eigen::Index> idx(n);
            std::iota(idx.begin(), idx.end(), 0);
            std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v(a) > v(b); });
            std::ostringstream os;
            for (int j = 0; j < std::min<Eigen::Index>(3, n); ++j) {
                if (v(idx[j]) < 0.1) break;
                if (j) os << "+";
                os << (static_cast<size_t>(idx[j]) < labels.size() ? labels[idx[j]] : std::to_string(idx[j]));
            }
            out.null_directions.push_back(os.str());
        }
    }
    out.full_rank = out.rank == n;
    if (!out.full_rank && !allow_pseudo) {
        std::ostringstream os;
        os << "information matrix is singular (rank " << out.rank << " of " << n << "); unidentifiable directions:";
        for (const auto &s : out.null_directions) os << " [" << s << "]";
        throw Unidentifiable(os.str(), out.null_directions);
    }
    const Eigen::MatrixXd &V = es.eigenvectors();
    out.inverse = d.asDiagonal() * (V * inv.asDiagonal() * V.transpose()) * d.asDiagonal();
    out.inverse = 0.5 * (out.inverse + out.inverse.transpose());
    return out;
}

int FimResult::index(const std::string &label) const {
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return static_cast<int>(i);
    return -1;
}

namespace {
double block_trace_sqrt(const Eigen::MatrixXd &C, const std::vector<int> &idx) {
    double t = 0.0;
    for (int i : idx) t += C(i, i);
    return std::sqrt(std::max(t, 0.0));
}

std::vector<int> prefix_indices(const std::vector<std::string> &labels, const std::string &prefix) {
    std::vector<int> out;
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i].compare(0, prefix.size(), prefix) == 0) out.push_back(static_cast<int>(i));
    return out;
}
} // namespace

void finalize_bounds(FimResult &r, bool allow_pseudo) {
    InverseResult inv = robust_inverse(r.matrix, r.labels, allow_pseudo);
    r.crb = inv.inverse;
    r.rank = inv.rank;
    r.full_rank = inv.full_rank;
    auto pos = prefix_indices(r.labels, "p_U.");
    auto ori = prefix_indices(r.labels, "o_U.");
    if (!pos.empty()) r.peb = block_trace_sqrt(r.crb, pos);
    if (!ori.empty()) r.oeb = block_trace_sqrt(r.crb, ori);
    r.rpeb.clear();
    r.rpeb_names.clear();
    for (const auto &l : r.labels) {
        if (l.compare(0, 3, "p_N") != 0) continue;
        std::string name = l.substr(2, l.find('.') - 2);
        if (std::find(r.rpeb_names.begin(), r.rpeb_names.end(), name) == r.rpeb_names.end())
            r.rpeb_names.push_back(name);
    }
    for (const auto &name : r.rpeb_names) r.rpeb.push_back(block_trace_sqrt(r.crb, prefix_indices(r.labels, "p_" + name + ".")));
}

namespace {
FimResult make_result(Eigen::MatrixXd F, const ParamVectors &layout) {
    FimResult r;
    r.matrix = std::move(F);
    r.labels = layout.labels();
    for (const auto &e : layout.entries) r.user.push_back(e.user);
    return r;
}
} // namespace

FimResult fim_measurement(const ForwardModel &m, const Eigen::VectorXd &gamma, DiffMode mode) {
    auto J = m.jacobian_measurement(gamma, mode);
    return make_result(fim_accumulate(J, m.sigma2(), KernelPolicy::Parallel), m.measurement_layout());
}

FimResult fim_state_direct(const ForwardModel &m, const Eigen::VectorXd &s, DiffMode mode, bool allow_pseudo) {
    auto J = m.jacobian_state(s, mode);
    FimResult r = make_result(fim_accumulate(J, m.sigma2(), KernelPolicy::Parallel), m.state_layout());
    finalize_bounds(r, allow_pseudo);
    return r;
}

Eigen::MatrixXd jacobian_state(const ForwardModel &m, const Eigen::VectorXd &s, DiffMode mode) {
    return m.gamma_jacobian(s, mode);
}

FimResult crb_state(const Eigen::MatrixXd &I_gamma, const Eigen::MatrixXd &J_S, const ParamVectors &s_layout,
                    bool allow_pseudo) {
    if (I_gamma.rows() != J_S.rows() || J_S.cols() != s_layout.size())
        throw ConfigError("crb_state: dimension mismatch between I(gamma), J_S and the state layout");
    Eigen::MatrixXd F = J_S.transpose() * I_gamma * J_S;
    F = 0.5 * (F + F.transpose());
    FimResult r = make_result(std::move(F), s_layout);
    finalize_bounds(r, allow_pseudo);
    return r;
}

FimResult efim(const FimResult &F, const std::vector<bool> &keep) {
    const Eigen::Index n = F.matrix.rows();
    if (static_cast<Eigen::Index>(keep.size()) != n) throw ConfigError("efim: mask length mismatch");
    std::vector<int> a, b;
    for (Eigen::Index i = 0; i < n; ++i) (keep[i] ? a : b).push_back(static_cast<int>(i));
    const Eigen::MatrixXd &M = F.matrix;
    Eigen::MatrixXd A(a.size(), a.size()), Bm(a.size(), b.size()), D(b.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        for (size_t j = 0; j < a.size(); ++j) A(i, j) = M(a[i], a[j]);
        for (size_t j = 0; j < b.size(); ++j) Bm(i, j) = M(a[i], b[j]);
    }
    for (size_t i = 0; i < b.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) D(i, j) = M(b[i], b[j]);
    std::vector<std::string> blabels;
    for (int i : b) blabels.push_back(F.labels[i]);
    Eigen::MatrixXd Dinv;
    try {
        Dinv = robust_inverse(D, blabels, false).inverse;
    } catch (const Unidentifiable &e) {
        throw Unidentifiable(std::string("efim: nuisance block is singular: ") + e.what(), e.null_directions);
    }
    FimResult r;
    r.matrix = b.empty() ? A : Eigen::MatrixXd(A - Bm * Dinv * Bm.transpose());
    r.matrix = 0.5 * (r.matrix + r.matrix.transpose());
    for (int i : a) {
        r.labels.push_back(F.labels[i]);
        r.user.push_back(F.user.empty() ? true : F.user[i]);
    }
    return r;
}

FimResult efim_user(const FimResult &F) { return efim(F, F.user); }

Eigen::MatrixXd tangent_basis(const Mat3 &R) {
    const Vec3 r1 = R.col(0), r2 = R.col(1), r3 = R.col(2);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(9, 3);
    M.block<3, 1>(0, 0) = -r3;
    M.block<3, 1>(0, 2) = r2;
    M.block<3, 1>(3, 1) = -r3;
    M.block<3, 1>(3, 2) = -r1;
    M.block<3, 1>(6, 0) = r1;
    M.block<3, 1>(6, 1) = r2;
    // Each column has squared norm 2; normalize to an orthonormal basis.
    return M / std::sqrt(2.0);
}

ConstrainedOrientation constrained_crb_orientation(const Eigen::MatrixXd &I_theta, const Mat3 &R,
                                                   const std::vector<Vec3> &dirs) {
    const int m = static_cast<int>(dirs.size());
    if (m < 2) throw Unidentifiable("constrained orientation bound needs at least two AOD pairs");
    if (I_theta.rows() != 2 * m || I_theta.cols() != 2 * m)
        throw ConfigError("constrained_crb_orientation: I(theta) must be 2m x 2m");
    if ((R.transpose() * R - Mat3::Identity()).norm() > 1e-9 || R.determinant() <= 0)
        throw DomainError("constrained_crb_orientation: R is not a rotation");
    // d theta / d vec(R): local direction t~ = R^T t, azimuth/elevation of t~.
    Eigen::MatrixXd Jr = Eigen::MatrixXd::Zero(2 * m, 9);
    for (int j = 0; j < m; ++j) {
        const Vec3 &t = dirs[j];
        const Vec3 tl = R.transpose() * t;
        const double x = tl(0), y = tl(1), z = tl(2);
        const double h2 = x * x + y * y, h = std::sqrt(h2), n2 = h2 + z * z;
        if (h < 1e-12) throw DegenerateGeometry("AOD direction along the array normal pole");
        // gradients of az = atan2(y, x) and el = atan2(z, h) w.r.t. t~
        const Vec3 gaz(-y / h2, x / h2, 0.0);
        const Vec3 gel(-x * z / (h * n2), -y * z / (h * n2), h / n2);
        // t~_i = sum_k R(k, i) t_k  -> d t~_i / d R(k, i) = t_k ; vec(R) stacks columns: index i*3 + k
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k) {
                Jr(2 * j, i * 3 + k) += gaz(i) * t(k);
                Jr(2 * j + 1, i * 3 + k) += gel(i) * t(k);
            }
    }
    ConstrainedOrientation out;
    out.M = tangent_basis(R);
    const Eigen::MatrixXd Ir = Jr.transpose() * I_theta * Jr;
    Eigen::MatrixXd core = out.M.transpose() * Ir * out.M;
    core = 0.5 * (core + core.transpose());
    InverseResult inv = robust_inverse(core, {"w1", "w2", "w3"}, false);
    out.crb_r = out.M * inv.inverse * out.M.transpose();
    out.oeb = std::sqrt(std::max(out.crb_r.trace(), 0.0));
    return out;
}

PilotSchedule tile_schedule(const PilotSchedule &s, int n) {
    PilotSchedule t;
    t.G = s.G * n;
    t.K = s.K;
    for (int r = 0; r < n; ++r) {
        t.bs_beams.insert(t.bs_beams.end(), s.bs_beams.begin(), s.bs_beams.end());
        t.ue_beams.insert(t.ue_beams.end(), s.ue_beams.begin(), s.ue_beams.end());
        t.x.insert(t.x.end(), s.x.begin(), s.x.end());
        t.combiner.insert(t.combiner.end(), s.combiner.begin(), s.combiner.end());
        t.ris.insert(t.ris.end(), s.ris.begin(), s.ris.end());
    }
    return t;
}

ScalingReport closed_form_scaling_check(const ModelConfig &cfg, const PilotSchedule &sched) {
    if (cfg.ris || !cfg.scatterers.empty() || !cfg.include_los)
        throw ConfigError("closed-form scaling check needs a single LOS path");
    if (!cfg.clock_known) throw ConfigError("closed-form scaling check needs a synchronized link");
    if (cfg.dims != 2) throw ConfigError("closed-form scaling check uses 2D position and 1D orientation");
    auto peb_of = [](const ModelConfig &c, const PilotSchedule &s) {
        ForwardModel m(c, s);
        return fim_state_direct(m, m.state_layout().values).peb;
    };
    ScalingReport r;
    r.peb = peb_of(cfg, sched);
    ModelConfig c4 = cfg;
    c4.wf.P_mW *= 4.0;
    r.ratio_power_4x = peb_of(c4, sched) / r.peb;
    ModelConfig c2 = cfg;
    c2.wf.P_mW *= 2.0;
    r.ratio_power_2x = peb_of(c2, sched) / r.peb;
    ModelConfig cg = cfg;
    cg.wf.G *= 4;
    r.ratio_tx_4x = peb_of(cg, tile_schedule(sched, 4)) / r.peb;
    ModelConfig cd = cfg;
    cd.ue.pose.position = cfg.bs.pose.position + 2.0 * (cfg.ue.pose.position - cfg.bs.pose.position);
    r.ratio_distance_2x = peb_of(cd, sched) / r.peb;
    r.pass = std::abs(r.ratio_power_4x - 0.5) <= 1e-6 * 0.5 && std::abs(r.ratio_tx_4x - 0.5) <= 1e-6 * 0.5 &&
             r.ratio_distance_2x > 1.0;
    return r;
}

} // namespace thzloc
