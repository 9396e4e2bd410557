// SPDX-License-Identifier: Apache-2.0
// Classic geometric position solvers: linearized closed form, then least squares.
#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "thzloc/errors.hpp"
#include "thzloc/estimators.hpp"

namespace thzloc {

namespace {

void check_dims(int dims) {
    if (dims != 2 && dims != 3) throw ConfigError("dims must be 2 or 3, got " + std::to_string(dims));
}

void need(const char *what, int dims, int have, int min2, int min3) {
    const int min = dims == 2 ? min2 : min3;
    if (have < min)
        throw Unidentifiable(std::string(what) + " in " + std::to_string(dims) + "D needs at least " +
                             std::to_string(min) + " measurements, got " + std::to_string(have));
}

Eigen::VectorXd head(const Vec3 &v, int dims) { return v.head(dims); }

Vec3 pad(const Eigen::VectorXd &x, int dims) {
    Vec3 p = Vec3::Zero();
    p.head(dims) = x.head(dims);
    return p;
}

// Central-difference Jacobian for the small classic problems.
ResidualFn numeric(std::function<Eigen::VectorXd(const Eigen::VectorXd &)> f) {
    return [f](const Eigen::VectorXd &x, Eigen::VectorXd &r, Eigen::MatrixXd &J) {
        r = f(x);
        J.resize(r.size(), x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double h = 1e-7 * std::max(1.0, std::abs(x(i)));
            Eigen::VectorXd xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            J.col(i) = (f(xp) - f(xm)) / (2.0 * h);
        }
    };
}

ClassicResult finish(const LsqResult &lr, int dims) {
    ClassicResult out;
    out.position = pad(lr.x, dims);
    out.cost = lr.cost;
    out.iterations = lr.iterations;
    out.converged = lr.converged;
    return out;
}

Eigen::VectorXd lstsq(const Eigen::MatrixXd &A, const Eigen::VectorXd &b) {
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
    if (cod.rank() < A.cols()) throw DegenerateGeometry("anchor geometry does not fix the position");
    return cod.solve(b);
}

} // namespace

ClassicResult solve_toa(const std::vector<Vec3> &anchors, const std::vector<double> &ranges, int dims) {
    check_dims(dims);
    if (anchors.size() != ranges.size()) throw ConfigError("TOA: one range per anchor is required");
    const int n = static_cast<int>(anchors.size());
    need("TOA", dims, n, 3, 4);
    // subtract the first circle equation: 2 (a_i - a_0)^T p = |a_i|^2 - |a_0|^2 - r_i^2 + r_0^2
    Eigen::MatrixXd A(n - 1, dims);
    Eigen::VectorXd b(n - 1);
    const Eigen::VectorXd a0 = head(anchors[0], dims);
    for (int i = 1; i < n; ++i) {
        const Eigen::VectorXd ai = head(anchors[i], dims);
        A.row(i - 1) = 2.0 * (ai - a0).transpose();
        b(i - 1) = ai.squaredNorm() - a0.squaredNorm() - ranges[i] * ranges[i] + ranges[0] * ranges[0];
    }
    const Eigen::VectorXd x0 = lstsq(A, b);
    const ResidualFn fn = [&](const Eigen::VectorXd &x, Eigen::VectorXd &r, Eigen::MatrixXd &J) {
        r.resize(n);
        J.resize(n, dims);
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd d = x - head(anchors[i], dims);
            const double rho = std::max(d.norm(), 1e-300);
            r(i) = rho - ranges[i];
            J.row(i) = d.transpose() / rho;
        }
    };
    return finish(levenberg_marquardt(fn, x0), dims);
}

ClassicResult solve_tdoa(const std::vector<Vec3> &anchors, const std::vector<double> &range_diffs, int dims) {
    check_dims(dims);
    if (anchors.size() != range_diffs.size() + 1)
        throw ConfigError("TDOA: expected one range difference per non-reference anchor");
    const int m = static_cast<int>(range_diffs.size());
    need("TDOA", dims, m, 3, 4);
    // unknowns (p, r0): 2 (a_i - a_0)^T p + 2 d_i r0 = |a_i|^2 - |a_0|^2 - d_i^2
    Eigen::MatrixXd A(m, dims + 1);
    Eigen::VectorXd b(m);
    const Eigen::VectorXd a0 = head(anchors[0], dims);
    for (int i = 1; i <= m; ++i) {
        const Eigen::VectorXd ai = head(anchors[i], dims);
        const double d = range_diffs[i - 1];
        A.row(i - 1).head(dims) = 2.0 * (ai - a0).transpose();
        A(i - 1, dims) = 2.0 * d;
        b(i - 1) = ai.squaredNorm() - a0.squaredNorm() - d * d;
    }
    Eigen::VectorXd x0;
    try {
        x0 = lstsq(A, b).head(dims);
    } catch (const DegenerateGeometry &) {
        // rank-deficient linear form (e.g. symmetric layouts): start at the anchor centroid
        x0 = Eigen::VectorXd::Zero(dims);
        for (const auto &a : anchors) x0 += head(a, dims);
        x0 /= static_cast<double>(anchors.size());
    }
    const ResidualFn fn = [&](const Eigen::VectorXd &x, Eigen::VectorXd &r, Eigen::MatrixXd &J) {
        r.resize(m);
        J.resize(m, dims);
        const Eigen::VectorXd d0 = x - a0;
        const double r0 = std::max(d0.norm(), 1e-300);
        for (int i = 1; i <= m; ++i) {
            const Eigen::VectorXd di = x - head(anchors[i], dims);
            const double ri = std::max(di.norm(), 1e-300);
            r(i - 1) = ri - r0 - range_diffs[i - 1];
            J.row(i - 1) = di.transpose() / ri - d0.transpose() / r0;
        }
    };
    return finish(levenberg_marquardt(fn, x0), dims);
}

ClassicResult solve_aoa(const std::vector<Vec3> &anchors, const std::vector<AnglePair> &bearings, int dims) {
    check_dims(dims);
    if (anchors.size() != bearings.size()) throw ConfigError("AOA: one bearing per anchor is required");
    const int n = static_cast<int>(anchors.size());
    need("AOA", dims, n, 2, 2);
    // closed form: sum (I - u u^T) p = sum (I - u u^T) a_i
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dims, dims);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dims);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd u = head(dims == 2 ? direction_from_angles(bearings[i].azimuth, 0.0)
                                           : direction_from_angles(bearings[i].azimuth, bearings[i].elevation),
                                 dims);
        const Eigen::MatrixXd P = Eigen::MatrixXd::Identity(dims, dims) - u * u.transpose();
        A += P;
        b += P * head(anchors[i], dims);
    }
    const Eigen::VectorXd x0 = lstsq(A, b);
    const auto f = [&](const Eigen::VectorXd &x) {
        Eigen::VectorXd r(dims == 2 ? n : 2 * n);
        for (int i = 0; i < n; ++i) {
            const Vec3 d = pad(x, dims) - anchors[i];
            r(i) = wrap_pi(std::atan2(d(1), d(0)) - bearings[i].azimuth);
            if (dims == 3) r(n + i) = std::atan2(d(2), d.head<2>().norm()) - bearings[i].elevation;
        }
        return r;
    };
    return finish(levenberg_marquardt(numeric(f), x0), dims);
}

double adod_angle(const Vec3 &p, const Vec3 &ai, const Vec3 &aj, int dims) {
    check_dims(dims);
    const Vec3 ui = ai - p, uj = aj - p;
    if (ui.head(dims).norm() == 0.0 || uj.head(dims).norm() == 0.0)
        throw DegenerateGeometry("ADOD: UE coincides with an anchor");
    if (dims == 2) return wrap_pi(std::atan2(uj(1), uj(0)) - std::atan2(ui(1), ui(0)));
    return std::atan2(ui.cross(uj).norm(), ui.dot(uj));
}

ClassicResult solve_adod(const std::vector<Vec3> &anchors, const std::vector<AdodMeasurement> &meas, int dims) {
    check_dims(dims);
    const int n = static_cast<int>(meas.size());
    need("ADOD", dims, n, 3, 4);
    for (const auto &m : meas)
        if (m.i < 0 || m.j < 0 || m.i >= static_cast<int>(anchors.size()) || m.j >= static_cast<int>(anchors.size()) ||
            m.i == m.j)
            throw ConfigError("ADOD: measurement references an invalid anchor pair");
    const auto f = [&](const Eigen::VectorXd &x) {
        Eigen::VectorXd r(n);
        const Vec3 p = pad(x, dims);
        for (int k = 0; k < n; ++k) {
            const Vec3 ui = anchors[meas[k].i] - p, uj = anchors[meas[k].j] - p;
            double a = dims == 2 ? wrap_pi(std::atan2(uj(1), uj(0)) - std::atan2(ui(1), ui(0)))
                                 : std::atan2(ui.cross(uj).norm(), ui.dot(uj));
            r(k) = wrap_pi(a - meas[k].angle);
        }
        return r;
    };
    // no linear form for inscribed angles: grid over the anchors' box, widened by its span
    Eigen::VectorXd lo = head(anchors[0], dims), hi = lo;
    for (const auto &a : anchors) {
        lo = lo.cwiseMin(head(a, dims));
        hi = hi.cwiseMax(head(a, dims));
    }
    const double span = std::max((hi - lo).maxCoeff(), 1.0);
    lo.array() -= span;
    hi.array() += span;
    const int steps = dims == 2 ? 81 : 31;
    double best = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x0 = 0.5 * (lo + hi), x(dims);
    const int total = dims == 2 ? steps * steps : steps * steps * steps;
    for (int t = 0; t < total; ++t) {
        int r = t;
        for (int d = 0; d < dims; ++d) {
            x(d) = lo(d) + (hi(d) - lo(d)) * (r % steps + 0.5) / steps;
            r /= steps;
        }
        const Eigen::VectorXd res = f(x);
        const double c = res.allFinite() ? res.squaredNorm() : std::numeric_limits<double>::infinity();
        if (c < best) {
            best = c;
            x0 = x;
        }
    }
    return finish(levenberg_marquardt(numeric(f), x0), dims);
}

} // namespace thzloc
