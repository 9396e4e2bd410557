// SPDX-License-Identifier: Apache-2.0
#include "thzloc/model.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <array>
#include <cmath>

#include "thzloc/errors.hpp"
#include "thzloc/fim.hpp"

namespace thzloc {

// ---------------------------------------------------------------- ParamVectors

int ParamVectors::find(const std::string &label) const {
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].label == label) return static_cast<int>(i);
    return -1;
}

int ParamVectors::index(const std::string &label) const {
    int i = find(label);
    if (i < 0) throw ConfigError("parameter '" + label + "' is not part of the vector");
    return i;
}

std::vector<int> ParamVectors::with_prefix(const std::string &prefix) const {
    std::vector<int> out;
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].label.compare(0, prefix.size(), prefix) == 0) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> ParamVectors::user_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].user) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> ParamVectors::nuisance_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < entries.size(); ++i)
        if (!entries[i].user) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<std::string> ParamVectors::labels() const {
    std::vector<std::string> out;
    for (const auto &e : entries) out.push_back(e.label);
    return out;
}

void ParamVectors::add(std::string label, ParamKind kind, double value, bool user) {
    if (find(label) >= 0) throw ConfigError("duplicate parameter label '" + label + "'");
    entries.push_back({std::move(label), kind, user});
    values.conservativeResize(values.size() + 1);
    values(values.size() - 1) = value;
}

double diff_step(ParamKind kind, double x) {
    const double ax = std::abs(x);
    switch (kind) {
    case ParamKind::Position: return std::max(1e-6 * ax, 1e-4);
    case ParamKind::Angle:
    case ParamKind::Phase: return std::max(1e-6 * ax, 1e-4);
    case ParamKind::Delay: return std::max(1e-6 * ax, 1e-13);
    case ParamKind::Amplitude: return std::max(1e-6 * ax, 1e-300);
    }
    return 1e-6;
}

// ---------------------------------------------------------------- internals

namespace {

template <class T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using CVec = std::vector<complex_of<T>>;

constexpr double kTwoPi = 2.0 * M_PI;

struct Side {
    Pose pose;
    Mat3 R = Mat3::Identity();
    std::vector<Vec3> local;   // SA centers (or elements) in the array frame
    std::vector<Vec3> offsets; // AE offsets inside one SA
    SubarrayGrid grid;
    GainModel gain;
    int rows_total = 1, cols_total = 1;

    int n() const { return static_cast<int>(local.size()); }
    int elements() const { return n() * static_cast<int>(offsets.size()); }
};

Side make_side(const ArraySpec &spec) {
    Side s;
    s.pose = spec.pose;
    s.R = rotation_from_euler(spec.pose.orientation);
    for (const auto &sa : element_positions(spec)) s.local.push_back(sa.center);
    s.offsets = centered_grid(spec.ae_rows, spec.ae_cols, spec.ae_spacing);
    s.grid = SubarrayGrid(spec.ae_rows, spec.ae_cols, spec.ae_spacing);
    s.gain = spec.gain;
    s.rows_total = spec.sa_rows * spec.ae_rows;
    s.cols_total = spec.sa_cols * spec.ae_cols;
    return s;
}

// One propagation hop between side A and side B (or a point). Separable hops factor
// as an outer product of per-element terms; full hops keep every element pair.
template <class T>
struct Hop {
    bool full = false;
    std::vector<T> da, db;              // excess delays (s) per element
    std::vector<Vec3T<T>> dir_a, dir_b; // local directions: one shared or one per element
    MatT<T> dd;                         // full: excess delay per pair
    std::vector<Vec3T<T>> pdir_a, pdir_b; // full: per pair, index a * nB + b
};

template <class T>
struct Term {
    PathKind kind = PathKind::LOS;
    T rho{}, xi{}, tau{};
    int ck_pow = 1;
    Hop<T> hop; // LOS/NLOS: A = BS, B = UE. RIS: A = RIS, B = UE.
};

template <class T>
struct PathSet {
    std::vector<Term<T>> terms;
};

template <class T>
Vec3T<T> cast3(const Vec3 &v) {
    return Vec3T<T>(T(v(0)), T(v(1)), T(v(2)));
}

template <class T>
Mat3T<T> cast33(const Mat3 &m) {
    Mat3T<T> r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = T(m(i, j));
    return r;
}

template <class T>
T norm3(const Vec3T<T> &v) {
    using std::sqrt;
    return sqrt(v(0) * v(0) + v(1) * v(1) + v(2) * v(2));
}

template <class T>
T dot_local(const Vec3 &p, const Vec3T<T> &t) {
    return p(0) * t(0) + p(1) * t(1) + p(2) * t(2);
}

// Hop between two arrays.
template <class T>
Hop<T> hop_arrays(const std::vector<Vec3> &A_local, const Vec3T<T> &A_c, const Mat3T<T> &A_R,
                  const std::vector<Vec3> &B_local, const Vec3T<T> &B_c, const Mat3T<T> &B_R, WaveModel wm) {
    Hop<T> h;
    const Vec3T<T> diff = B_c - A_c;
    const T d0 = norm3(diff);
    const double c = kSpeedOfLight;
    if (wm == WaveModel::PWM || (A_local.size() == 1 && B_local.size() == 1)) {
        const Vec3T<T> t = diff / d0;
        const Vec3T<T> ta = A_R.transpose() * t;
        const Vec3T<T> tb = -(B_R.transpose() * t);
        h.dir_a = {ta};
        h.dir_b = {tb};
        for (const Vec3 &p : A_local) h.da.push_back(-dot_local<T>(p, ta) / c);
        for (const Vec3 &p : B_local) h.db.push_back(-dot_local<T>(p, tb) / c);
        if (wm == WaveModel::SWM) {
            // single element on both sides: exact and plane-wave forms coincide
            h.da.assign(1, T(0.0));
            h.db.assign(1, T(0.0));
        }
        return h;
    }
    h.full = true;
    const size_t nA = A_local.size(), nB = B_local.size();
    std::vector<Vec3T<T>> gA(nA), gB(nB);
    for (size_t a = 0; a < nA; ++a) gA[a] = A_c + A_R * cast3<T>(A_local[a]);
    for (size_t b = 0; b < nB; ++b) gB[b] = B_c + B_R * cast3<T>(B_local[b]);
    h.dd.resize(nA, nB);
    h.pdir_a.resize(nA * nB);
    h.pdir_b.resize(nA * nB);
    const Mat3T<T> ARt = A_R.transpose(), BRt = B_R.transpose();
    for (size_t a = 0; a < nA; ++a)
        for (size_t b = 0; b < nB; ++b) {
            const Vec3T<T> v = gB[b] - gA[a];
            const T d = norm3(v);
            h.dd(a, b) = (d - d0) / c;
            const Vec3T<T> t = v / d;
            h.pdir_a[a * nB + b] = ARt * t;
            h.pdir_b[a * nB + b] = -(BRt * t);
        }
    return h;
}

// One side of a hop toward a point (used for scatterers): excess delays and directions.
template <class T>
void side_to_point(const std::vector<Vec3> &local, const Vec3T<T> &c, const Mat3T<T> &R, const Vec3T<T> &p,
                   WaveModel wm, std::vector<T> &delays, std::vector<Vec3T<T>> &dirs) {
    const Vec3T<T> diff = p - c;
    const T d0 = norm3(diff);
    const Mat3T<T> Rt = R.transpose();
    delays.clear();
    dirs.clear();
    if (wm == WaveModel::PWM || local.size() == 1) {
        const Vec3T<T> t = Rt * (diff / d0);
        dirs.push_back(t);
        for (const Vec3 &q : local) delays.push_back(wm == WaveModel::PWM ? T(-dot_local<T>(q, t) / kSpeedOfLight) : T(0.0));
        return;
    }
    for (const Vec3 &q : local) {
        const Vec3T<T> g = c + R * cast3<T>(q);
        const Vec3T<T> v = p - g;
        const T d = norm3(v);
        delays.push_back((d - d0) / kSpeedOfLight);
        dirs.push_back(Rt * (v / d));
    }
}

// Plane-wave hop from local directions on both sides.
template <class T>
Hop<T> hop_from_directions(const std::vector<Vec3> &A_local, const Vec3T<T> &ta, const std::vector<Vec3> &B_local,
                           const Vec3T<T> &tb) {
    Hop<T> h;
    h.dir_a = {ta};
    h.dir_b = {tb};
    for (const Vec3 &p : A_local) h.da.push_back(-dot_local<T>(p, ta) / kSpeedOfLight);
    for (const Vec3 &p : B_local) h.db.push_back(-dot_local<T>(p, tb) / kSpeedOfLight);
    return h;
}

} // namespace

// ---------------------------------------------------------------- Impl

struct ForwardModel::Impl {
    ModelConfig cfg;
    PilotSchedule sched;
    Side bs, ue, ris;
    bool has_ris = false;
    std::vector<PathInfo> paths;
    double sqrtP = 1.0;
    double sigma2 = 1.0;

    // state layout
    ParamVectors s_layout;
    std::array<int, 3> ip{-1, -1, -1}, io{-1, -1, -1};
    std::vector<int> irho, ixi;            // per path
    std::vector<std::array<int, 3>> ipn;   // per path (NLOS only)
    int iB = -1;

    // measurement layout
    bool has_gamma = false;
    ParamVectors g_layout;
    std::vector<int> grho, gxi, gtau;
    std::vector<std::array<int, 2>> gA, gU; // BS-side (RIS-side for RIS) and UE-side angle indices
    std::vector<std::array<double, 2>> nomA, nomU;

    Hop<double> bs_ris; // fixed BS <-> RIS hop
    std::vector<Eigen::MatrixXcd> comb;    // per g combiner (empty = none)
    std::vector<Eigen::MatrixXcd> whitened; // per g: L^{-1} C

    int n_out() const { return comb.empty() ? bs.n() : static_cast<int>(comb[0].rows()); }

    // ---- geometry of the truth ----
    Vec3 ue_pos() const { return cfg.ue.pose.position; }

    // ---- array factors ----
    template <class T>
    complex_of<T> af(const Side &s, const Vec3T<T> &dir, const Vec3 &beam, double fk) const {
        if (s.grid.trivial()) return complex_of<T>(cplx(1.0, 0.0));
        const double fb = cfg.bse ? cfg.wf.fc : fk;
        if (cfg.ps_quant_bits <= 0) return to_complex(grid_array_factor<T>(s.grid, dir, beam, fk, fb));
        const double k = kTwoPi / kSpeedOfLight;
        complex_of<T> acc(cplx(0.0, 0.0));
        for (const Vec3 &q : s.offsets) {
            const double w = quantize_phase(k * fb * q.dot(beam), cfg.ps_quant_bits);
            acc += expj(T(k * fk) * dot_local<T>(q, dir) - T(w));
        }
        return acc * s.grid.inv_sqrt_n;
    }

    const Vec3 &beam(const std::vector<std::vector<Vec3>> &b, int g, int i) const {
        static const Vec3 boresight(1.0, 0.0, 0.0);
        if (b.empty() || b[g].empty()) return boresight;
        return b[g][i];
    }

    // Per-element hop factor on side A (BS or RIS) for separable hops.
    template <class T>
    complex_of<T> side_factor(const Side &s, const std::vector<T> &delays, const std::vector<Vec3T<T>> &dirs, int i,
                              const std::vector<std::vector<Vec3>> &beams, int g, double fk) const {
        complex_of<T> ph = expj(T(-kTwoPi * fk) * delays[i]);
        if (s.grid.trivial()) return ph;
        const Vec3T<T> &d = dirs.size() == 1 ? dirs[0] : dirs[i];
        return ph * af<T>(s, d, beam(beams, g, i), fk);
    }

    // sum_u Y(r,u) x_u for a hop whose B side is the UE.
    template <class T>
    void ue_side_product(const Hop<T> &h, const Side &A, const std::vector<std::vector<Vec3>> &beamsA, int g,
                         double fk, const Eigen::VectorXcd &x, CVec<T> &out) const {
        const int nA = A.n(), nU = ue.n();
        out.assign(nA, complex_of<T>(cplx(0.0, 0.0)));
        if (!h.full) {
            complex_of<T> s(cplx(0.0, 0.0));
            for (int u = 0; u < nU; ++u) s += side_factor<T>(ue, h.db, h.dir_b, u, sched.ue_beams, g, fk) * x(u);
            for (int a = 0; a < nA; ++a) out[a] = side_factor<T>(A, h.da, h.dir_a, a, beamsA, g, fk) * s;
            return;
        }
        for (int a = 0; a < nA; ++a) {
            complex_of<T> acc(cplx(0.0, 0.0));
            for (int u = 0; u < nU; ++u) {
                const size_t idx = static_cast<size_t>(a) * nU + u;
                complex_of<T> v = expj(T(-kTwoPi * fk) * h.dd(a, u));
                if (!A.grid.trivial()) v = v * af<T>(A, h.pdir_a[idx], beam(beamsA, g, a), fk);
                if (!ue.grid.trivial()) v = v * af<T>(ue, h.pdir_b[idx], beam(sched.ue_beams, g, u), fk);
                acc += v * x(u);
            }
            out[a] = acc;
        }
    }

    // BS <-> RIS matrix at (g, k), N_B x N_R. Separable hops return an empty matrix and
    // fill the factor vectors instead.
    struct RisCache {
        Eigen::MatrixXcd X;
        Eigen::VectorXcd fb, fr;
    };

    RisCache ris_cache(int g, int k) const {
        RisCache c;
        if (!has_ris) return c;
        const double fk = cfg.wf.f(k);
        const std::vector<std::vector<Vec3>> none;
        if (!bs_ris.full) {
            c.fb.resize(bs.n());
            c.fr.resize(ris.n());
            for (int b = 0; b < bs.n(); ++b) c.fb(b) = side_factor<double>(bs, bs_ris.da, bs_ris.dir_a, b, sched.bs_beams, g, fk);
            for (int r = 0; r < ris.n(); ++r) c.fr(r) = side_factor<double>(ris, bs_ris.db, bs_ris.dir_b, r, none, g, fk);
            return c;
        }
        c.X.resize(bs.n(), ris.n());
        for (int b = 0; b < bs.n(); ++b)
            for (int r = 0; r < ris.n(); ++r) {
                const size_t idx = static_cast<size_t>(b) * ris.n() + r;
                cplx v = expj(-kTwoPi * fk * bs_ris.dd(b, r));
                if (!bs.grid.trivial()) v *= af<double>(bs, bs_ris.pdir_a[idx], beam(sched.bs_beams, g, b), fk);
                c.X(b, r) = v;
            }
        return c;
    }

    template <class T>
    complex_of<T> coef(const Term<T> &t, int k, bool unit_gain) const {
        const double ck = std::pow(cfg.wf.ck(k), t.ck_pow);
        const complex_of<T> ph = expj(-(T(unit_gain ? 0.0 : 1.0) * t.xi + T(kTwoPi * cfg.wf.df(k)) * t.tau));
        if (unit_gain) return ph * ck;
        return ph * (t.rho * ck);
    }

    // Contribution of one term at (g, k) to the BS-side vector (before combining).
    template <class T>
    void add_term(const Term<T> &t, int g, int k, const RisCache &rc, bool unit_gain, CVec<T> &mu) const {
        const double fk = cfg.wf.f(k);
        const Eigen::VectorXcd &x = sched.pilot(g, k);
        const complex_of<T> cf = coef<T>(t, k, unit_gain);
        CVec<T> tmp;
        if (t.kind != PathKind::RIS) {
            ue_side_product<T>(t.hop, bs, sched.bs_beams, g, fk, x, tmp);
            for (int b = 0; b < bs.n(); ++b) mu[b] += cf * tmp[b];
            return;
        }
        const std::vector<std::vector<Vec3>> none;
        ue_side_product<T>(t.hop, ris, none, g, fk, x, tmp); // v_r
        const Eigen::VectorXcd &om = sched.ris[g];
        if (!bs_ris.full) {
            complex_of<T> s(cplx(0.0, 0.0));
            for (int r = 0; r < ris.n(); ++r) s += tmp[r] * (rc.fr(r) * om(r));
            const complex_of<T> cs = cf * s;
            for (int b = 0; b < bs.n(); ++b) mu[b] += cs * rc.fb(b);
            return;
        }
        for (int r = 0; r < ris.n(); ++r) tmp[r] = tmp[r] * om(r);
        for (int b = 0; b < bs.n(); ++b) {
            complex_of<T> acc(cplx(0.0, 0.0));
            for (int r = 0; r < ris.n(); ++r) acc += tmp[r] * rc.X(b, r);
            mu[b] += cf * acc;
        }
    }

    template <class T>
    CVec<T> eval(const PathSet<T> &ps, int g, int k, const RisCache &rc) const {
        CVec<T> mu(bs.n(), complex_of<T>(cplx(0.0, 0.0)));
        for (const auto &t : ps.terms) add_term<T>(t, g, k, rc, false, mu);
        return mu;
    }

    // Apply sqrt(P), combiner and optional whitening; extract value or derivative.
    Eigen::VectorXcd finish(const Eigen::VectorXcd &v, int g, bool white) const {
        Eigen::VectorXcd out = sqrtP * v;
        if (comb.empty()) return out;
        return white ? Eigen::VectorXcd(whitened[g] * out) : Eigen::VectorXcd(comb[g] * out);
    }

    static Eigen::VectorXcd values_of(const CVec<double> &v) {
        Eigen::VectorXcd o(v.size());
        for (size_t i = 0; i < v.size(); ++i) o(i) = v[i];
        return o;
    }
    static Eigen::VectorXcd derivs_of(const CVec<Dual> &v) {
        Eigen::VectorXcd o(v.size());
        for (size_t i = 0; i < v.size(); ++i) o(i) = v[i].d;
        return o;
    }

    // ---- path sets ----

    template <class T>
    PathSet<T> from_state(const std::vector<T> &s) const {
        Vec3T<T> pU = cast3<T>(cfg.ue.pose.position);
        Vec3T<T> oU = cast3<T>(cfg.ue.pose.orientation);
        for (int i = 0; i < 3; ++i) {
            if (ip[i] >= 0) pU(i) = s[ip[i]];
            if (io[i] >= 0) oU(i) = s[io[i]];
        }
        const Mat3T<T> RU = rotation_matrix<T>(oU);
        const T B = iB >= 0 ? s[iB] : T(cfg.clock_offset);
        const Vec3T<T> pB = cast3<T>(bs.pose.position);
        const Mat3T<T> RB = cast33<T>(bs.R);
        const double lam = cfg.wf.lambda();
        const double c = kSpeedOfLight;
        auto ka = [&](const T &d) -> T {
            using std::exp;
            return cfg.absorb.k_abs == 0.0 ? T(1.0) : T(exp(T(-0.5 * cfg.absorb.k_abs) * d));
        };
        PathSet<T> ps;
        for (size_t p = 0; p < paths.size(); ++p) {
            const PathInfo &pi = paths[p];
            Term<T> t;
            t.kind = pi.kind;
            T rho_geo;
            if (pi.kind == PathKind::LOS) {
                const T d = norm3<T>(pU - pB);
                t.tau = d / c + B;
                rho_geo = T(lam / (4.0 * M_PI) * pi.sector) * ka(d) / d;
                t.hop = hop_arrays<T>(bs.local, pB, RB, ue.local, pU, RU, cfg.wave_model);
            } else if (pi.kind == PathKind::RIS) {
                const Vec3T<T> pR = cast3<T>(ris.pose.position);
                const T dBR = T((ris.pose.position - bs.pose.position).norm());
                const T dUR = norm3<T>(pR - pU);
                t.tau = (dBR + dUR) / c + B;
                t.ck_pow = 2;
                rho_geo = T(lam * lam / (16.0 * M_PI * M_PI) * pi.sector) * ka(dBR) * ka(dUR) / (dBR * dUR);
                t.hop = hop_arrays<T>(ris.local, pR, cast33<T>(ris.R), ue.local, pU, RU, cfg.wave_model);
            } else {
                const Scatterer &sc = cfg.scatterers[pi.index];
                Vec3T<T> pN = cast3<T>(sc.position);
                for (int i = 0; i < 3; ++i)
                    if (ipn[p][i] >= 0) pN(i) = s[ipn[p][i]];
                const T dBN = norm3<T>(pN - pB), dNU = norm3<T>(pU - pN);
                const T dn = dBN + dNU;
                t.tau = dn / c + B;
                rho_geo = T(lam / (4.0 * M_PI) * sc.coefficient * pi.sector) * ka(dn) / dn;
                side_to_point<T>(bs.local, pB, RB, pN, cfg.wave_model, t.hop.da, t.hop.dir_a);
                side_to_point<T>(ue.local, pU, RU, pN, cfg.wave_model, t.hop.db, t.hop.dir_b);
            }
            t.rho = irho[p] >= 0 ? s[irho[p]] : rho_geo;
            t.xi = s[ixi[p]];
            ps.terms.push_back(std::move(t));
        }
        return ps;
    }

    // gamma(s) under the plane-wave reading: gains, phases, delays and local angle pairs.
    template <class T>
    std::vector<T> gamma_from_state(const std::vector<T> &s) const {
        PathSet<T> ps = from_state<T>(s);
        // Re-derive directions independently of wave model: plane-wave center directions.
        Vec3T<T> pU = cast3<T>(cfg.ue.pose.position);
        Vec3T<T> oU = cast3<T>(cfg.ue.pose.orientation);
        for (int i = 0; i < 3; ++i) {
            if (ip[i] >= 0) pU(i) = s[ip[i]];
            if (io[i] >= 0) oU(i) = s[io[i]];
        }
        const Mat3T<T> RUt = rotation_matrix<T>(oU).transpose();
        const Mat3T<T> RBt = cast33<T>(bs.R).transpose();
        const Vec3T<T> pB = cast3<T>(bs.pose.position);
        std::vector<T> gm(g_layout.size(), T(0.0));
        for (size_t p = 0; p < paths.size(); ++p) {
            const Term<T> &t = ps.terms[p];
            gm[grho[p]] = t.rho;
            gm[gxi[p]] = t.xi;
            gm[gtau[p]] = t.tau;
            Vec3T<T> dA, dU;
            if (paths[p].kind == PathKind::LOS) {
                dA = RBt * (pU - pB);
                dU = RUt * (pB - pU);
            } else if (paths[p].kind == PathKind::RIS) {
                const Vec3T<T> pR = cast3<T>(ris.pose.position);
                dA = cast33<T>(ris.R).transpose() * (pU - pR);
                dU = RUt * (pR - pU);
            } else {
                Vec3T<T> pN = cast3<T>(cfg.scatterers[paths[p].index].position);
                for (int i = 0; i < 3; ++i)
                    if (ipn[p][i] >= 0) pN(i) = s[ipn[p][i]];
                dA = RBt * (pN - pB);
                dU = RUt * (pN - pU);
            }
            T az, el;
            if (gA[p][0] >= 0) {
                angles_of<T>(dA, az, el);
                gm[gA[p][0]] = az;
                gm[gA[p][1]] = el;
            }
            if (gU[p][0] >= 0) {
                angles_of<T>(dU, az, el);
                gm[gU[p][0]] = az;
                gm[gU[p][1]] = el;
            }
        }
        return gm;
    }

    template <class T>
    PathSet<T> from_measurement(const std::vector<T> &gm) const {
        PathSet<T> ps;
        for (size_t p = 0; p < paths.size(); ++p) {
            Term<T> t;
            t.kind = paths[p].kind;
            t.ck_pow = t.kind == PathKind::RIS ? 2 : 1;
            t.rho = gm[grho[p]];
            t.xi = gm[gxi[p]];
            t.tau = gm[gtau[p]];
            T azA = T(nomA[p][0]), elA = T(nomA[p][1]), azU = T(nomU[p][0]), elU = T(nomU[p][1]);
            if (gA[p][0] >= 0) {
                azA = gm[gA[p][0]];
                elA = gm[gA[p][1]];
            }
            if (gU[p][0] >= 0) {
                azU = gm[gU[p][0]];
                elU = gm[gU[p][1]];
            }
            const Vec3T<T> tA = direction_from_angles<T>(azA, elA);
            const Vec3T<T> tU = direction_from_angles<T>(azU, elU);
            const std::vector<Vec3> &Aloc = t.kind == PathKind::RIS ? ris.local : bs.local;
            t.hop = hop_from_directions<T>(Aloc, tA, ue.local, tU);
            ps.terms.push_back(std::move(t));
        }
        return ps;
    }

    // ---- generic drivers ----

    template <class Builder>
    std::vector<Eigen::VectorXcd> mean_of(const Builder &build, bool white) const {
        const PathSet<double> ps = build();
        const int G = sched.G, K = sched.K;
        std::vector<Eigen::VectorXcd> out(static_cast<size_t>(G) * K);
#pragma omp parallel for schedule(static)
        for (int gk = 0; gk < G * K; ++gk) {
            const int g = gk / K, k = gk % K;
            const RisCache rc = ris_cache(g, k);
            out[gk] = finish(values_of(eval<double>(ps, g, k, rc)), g, white);
        }
        return out;
    }

    std::vector<Eigen::MatrixXcd> jacobian_dual(const Eigen::VectorXd &theta, bool measurement) const {
        const int n = static_cast<int>(theta.size());
        std::vector<PathSet<Dual>> sets(n);
        for (int i = 0; i < n; ++i) {
            std::vector<Dual> th(n);
            for (int j = 0; j < n; ++j) th[j] = Dual(theta(j), i == j ? 1.0 : 0.0);
            sets[i] = measurement ? from_measurement<Dual>(th) : from_state<Dual>(th);
        }
        const int G = sched.G, K = sched.K;
        std::vector<Eigen::MatrixXcd> J(static_cast<size_t>(G) * K);
#pragma omp parallel for schedule(static)
        for (int gk = 0; gk < G * K; ++gk) {
            const int g = gk / K, k = gk % K;
            const RisCache rc = ris_cache(g, k);
            Eigen::MatrixXcd Jg(n_out(), n);
            for (int i = 0; i < n; ++i) Jg.col(i) = finish(derivs_of(eval<Dual>(sets[i], g, k, rc)), g, true);
            J[gk] = std::move(Jg);
        }
        for (const auto &m : J)
            if (!m.allFinite()) throw NumericalFailure("non-finite derivative in forward-model Jacobian");
        return J;
    }

    std::vector<Eigen::MatrixXcd> jacobian_central(const Eigen::VectorXd &theta, const ParamVectors &layout,
                                                   bool measurement, double scale) const {
        const int n = static_cast<int>(theta.size());
        std::vector<PathSet<double>> plus(n), minus(n);
        std::vector<double> h(n);
        for (int i = 0; i < n; ++i) {
            h[i] = diff_step(layout.entries[i].kind, theta(i)) * scale;
            std::vector<double> tp(theta.data(), theta.data() + n), tm = tp;
            tp[i] += h[i];
            tm[i] -= h[i];
            plus[i] = measurement ? from_measurement<double>(tp) : from_state<double>(tp);
            minus[i] = measurement ? from_measurement<double>(tm) : from_state<double>(tm);
        }
        const int G = sched.G, K = sched.K;
        std::vector<Eigen::MatrixXcd> J(static_cast<size_t>(G) * K);
#pragma omp parallel for schedule(static)
        for (int gk = 0; gk < G * K; ++gk) {
            const int g = gk / K, k = gk % K;
            const RisCache rc = ris_cache(g, k);
            Eigen::MatrixXcd Jg(n_out(), n);
            for (int i = 0; i < n; ++i) {
                Eigen::VectorXcd a = finish(values_of(eval<double>(plus[i], g, k, rc)), g, true);
                Eigen::VectorXcd b = finish(values_of(eval<double>(minus[i], g, k, rc)), g, true);
                Jg.col(i) = (a - b) / (2.0 * h[i]);
            }
            J[gk] = std::move(Jg);
        }
        for (int i = 0; i < n; ++i)
            for (const auto &m : J)
                if (!m.col(i).allFinite())
                    throw NumericalFailure("non-finite derivative for parameter '" + layout.entries[i].label + "'");
        return J;
    }

    std::vector<std::vector<Eigen::VectorXcd>> responses(const PathSet<double> &ps) const {
        const int G = sched.G, K = sched.K;
        std::vector<std::vector<Eigen::VectorXcd>> out(ps.terms.size(),
                                                       std::vector<Eigen::VectorXcd>(static_cast<size_t>(G) * K));
#pragma omp parallel for schedule(static)
        for (int gk = 0; gk < G * K; ++gk) {
            const int g = gk / K, k = gk % K;
            const RisCache rc = ris_cache(g, k);
            for (size_t p = 0; p < ps.terms.size(); ++p) {
                CVec<double> mu(bs.n(), cplx(0.0, 0.0));
                add_term<double>(ps.terms[p], g, k, rc, true, mu);
                out[p][gk] = finish(values_of(mu), g, false);
            }
        }
        return out;
    }

    void build(ModelConfig c, PilotSchedule s);
};

// ---------------------------------------------------------------- construction

void ForwardModel::Impl::build(ModelConfig c, PilotSchedule s) {
    cfg = std::move(c);
    sched = std::move(s);
    cfg.wf.validate();
    cfg.bs.validate();
    cfg.ue.validate();
    if (cfg.dims != 2 && cfg.dims != 3) throw ConfigError("localization.dims must be 2 or 3");
    bs = make_side(cfg.bs);
    ue = make_side(cfg.ue);
    has_ris = cfg.ris.has_value();
    if (has_ris) {
        cfg.ris->validate();
        ris = make_side(*cfg.ris);
    }
    sqrtP = std::sqrt(cfg.wf.P_mW);
    sigma2 = noise_variance(cfg.wf);

    const int G = cfg.wf.G, K = cfg.wf.K;
    if (sched.G != G || sched.K != K) throw ConfigError("pilot schedule does not match G and K");
    if (static_cast<int>(sched.x.size()) != G * K) throw ConfigError("pilot schedule has wrong number of symbols");
    for (const auto &x : sched.x)
        if (x.size() != ue.n()) throw ConfigError("pilot length does not match the UE subarray count");
    auto check_beams = [&](const std::vector<std::vector<Vec3>> &b, const Side &side, const char *who) {
        if (side.grid.trivial() && b.empty()) return;
        if (static_cast<int>(b.size()) != G) throw ConfigError(std::string(who) + " beams must be given per transmission");
        for (const auto &v : b)
            if (static_cast<int>(v.size()) != side.n())
                throw ConfigError(std::string(who) + " beam list length does not match subarray count");
    };
    check_beams(sched.bs_beams, bs, "BS");
    check_beams(sched.ue_beams, ue, "UE");
    if (has_ris) {
        if (static_cast<int>(sched.ris.size()) != G) throw ConfigError("RIS profile must be given per transmission");
        for (const auto &r : sched.ris)
            if (r.size() != ris.n()) throw ConfigError("RIS profile length does not match the RIS element count");
    }
    if (!sched.combiner.empty()) {
        if (static_cast<int>(sched.combiner.size()) != G) throw ConfigError("combiner must be given per transmission");
        for (const auto &C : sched.combiner) {
            if (C.cols() != bs.n()) throw ConfigError("combiner width does not match the BS element count");
            Eigen::MatrixXcd cov = C * C.adjoint();
            Eigen::LLT<Eigen::MatrixXcd> llt(cov);
            if (llt.info() != Eigen::Success) throw NumericalFailure("combiner noise covariance is not positive definite");
            Eigen::MatrixXcd L = llt.matrixL();
            comb.push_back(C);
            whitened.push_back(L.triangularView<Eigen::Lower>().solve(C));
        }
    }

    // Active paths: skip paths with zero sector gain at the truth.
    auto center_angles = [](const Side &sd, const Vec3 &toward) {
        Vec3 t = sd.R.transpose() * (toward - sd.pose.position);
        return angles_from_direction(t / t.norm());
    };
    const Vec3 pB = bs.pose.position, pU = ue.pose.position;
    if (cfg.include_los) {
        double gsec = sector_gain(bs.gain, center_angles(bs, pU)) * sector_gain(ue.gain, center_angles(ue, pB));
        if (gsec > 0) paths.push_back({PathKind::LOS, 0, "L", gsec});
    }
    if (has_ris) {
        const Vec3 pR = ris.pose.position;
        double gsec = sector_gain(bs.gain, center_angles(bs, pR)) * sector_gain(ue.gain, center_angles(ue, pR));
        if (gsec > 0) paths.push_back({PathKind::RIS, 0, "R", gsec});
    }
    for (size_t l = 0; l < cfg.scatterers.size(); ++l) {
        const Scatterer &sc = cfg.scatterers[l];
        if (!(sc.coefficient >= 0.0 && sc.coefficient <= 1.0)) throw ConfigError("scatterer coefficient outside [0, 1]");
        if ((sc.position - pB).norm() == 0.0 || (sc.position - pU).norm() == 0.0)
            throw DegenerateGeometry("scatterer coincides with an array");
        double gsec = sector_gain(bs.gain, center_angles(bs, sc.position)) *
                      sector_gain(ue.gain, center_angles(ue, sc.position));
        if (gsec > 0) paths.push_back({PathKind::NLOS, static_cast<int>(l), "N" + std::to_string(l + 1), gsec});
    }
    if (paths.empty()) throw ConfigError("no propagation path is active (all out of sector or disabled)");
    if ((pU - pB).norm() == 0.0) throw DegenerateGeometry("UE and BS positions coincide");

    const bool ue_multi = ue.elements() > 1;
    const char *axes[3] = {"x", "y", "z"};
    const char *eul[3] = {"alpha", "beta", "gamma"};
    for (int i = 0; i < cfg.dims; ++i) {
        ip[i] = s_layout.size();
        s_layout.add(std::string("p_U.") + axes[i], ParamKind::Position, pU(i), true);
    }
    if (ue_multi) {
        for (int i = 0; i < (cfg.dims == 3 ? 3 : 1); ++i) {
            io[i] = s_layout.size();
            s_layout.add(std::string("o_U.") + eul[i], ParamKind::Angle, cfg.ue.pose.orientation(i), true);
        }
    }
    irho.assign(paths.size(), -1);
    ixi.assign(paths.size(), -1);
    ipn.assign(paths.size(), {-1, -1, -1});
    // placeholders for rho/xi nominal values; computed from a double path set below
    if (cfg.gains == GainKnowledge::Unknown)
        for (size_t p = 0; p < paths.size(); ++p) {
            irho[p] = s_layout.size();
            s_layout.add("rho." + paths[p].name, ParamKind::Amplitude, 0.0);
        }
    for (size_t p = 0; p < paths.size(); ++p) {
        ixi[p] = s_layout.size();
        s_layout.add("xi." + paths[p].name, ParamKind::Phase, 0.0);
    }
    if (cfg.estimate_scatterers)
        for (size_t p = 0; p < paths.size(); ++p) {
            if (paths[p].kind != PathKind::NLOS) continue;
            const Vec3 &pn = cfg.scatterers[paths[p].index].position;
            for (int i = 0; i < cfg.dims; ++i) {
                ipn[p][i] = s_layout.size();
                s_layout.add("p_" + paths[p].name + "." + axes[i], ParamKind::Position, pn(i));
            }
        }
    if (!cfg.clock_known) {
        iB = s_layout.size();
        s_layout.add("B", ParamKind::Delay, cfg.clock_offset);
    }
    // Fill nominal rho and xi from the geometry (rho indices are still -1 inside the
    // temporary copy so that from_state uses the geometric amplitude).
    {
        std::vector<int> keep_rho = irho;
        irho.assign(paths.size(), -1);
        std::vector<double> sv(s_layout.values.data(), s_layout.values.data() + s_layout.size());
        PathSet<double> ps = from_state<double>(sv);
        irho = keep_rho;
        for (size_t p = 0; p < paths.size(); ++p) {
            if (irho[p] >= 0) s_layout.values(irho[p]) = ps.terms[p].rho;
            double xi = std::fmod(kTwoPi * cfg.wf.fc * ps.terms[p].tau, kTwoPi);
            s_layout.values(ixi[p]) = xi < 0 ? xi + kTwoPi : xi;
        }
    }

    // fixed BS <-> RIS hop
    if (has_ris)
        bs_ris = hop_arrays<double>(bs.local, bs.pose.position, bs.R, ris.local, ris.pose.position, ris.R,
                                    cfg.wave_model);

    // measurement layout (plane-wave reading)
    has_gamma = cfg.wave_model == WaveModel::PWM;
    if (has_gamma) {
        const size_t P = paths.size();
        grho.assign(P, -1);
        gxi.assign(P, -1);
        gtau.assign(P, -1);
        gA.assign(P, {-1, -1});
        gU.assign(P, {-1, -1});
        for (size_t p = 0; p < P; ++p) {
            grho[p] = g_layout.size();
            g_layout.add("rho." + paths[p].name, ParamKind::Amplitude, 0.0);
        }
        for (size_t p = 0; p < P; ++p) {
            gxi[p] = g_layout.size();
            g_layout.add("xi." + paths[p].name, ParamKind::Phase, 0.0);
        }
        for (size_t p = 0; p < P; ++p) {
            gtau[p] = g_layout.size();
            g_layout.add("tau." + paths[p].name, ParamKind::Delay, 0.0);
        }
        for (size_t p = 0; p < P; ++p) {
            const Side &A = paths[p].kind == PathKind::RIS ? ris : bs;
            if (A.elements() > 1) {
                gA[p][0] = g_layout.size();
                g_layout.add("aoa." + paths[p].name + ".az", ParamKind::Angle, 0.0);
                gA[p][1] = g_layout.size();
                g_layout.add("aoa." + paths[p].name + ".el", ParamKind::Angle, 0.0);
            }
        }
        for (size_t p = 0; p < P; ++p) {
            if (ue_multi) {
                gU[p][0] = g_layout.size();
                g_layout.add("aod." + paths[p].name + ".az", ParamKind::Angle, 0.0);
                gU[p][1] = g_layout.size();
                g_layout.add("aod." + paths[p].name + ".el", ParamKind::Angle, 0.0);
            }
        }
        // nominal angles for entries not in gamma (single-element sides)
        nomA.assign(P, {0.0, 0.0});
        nomU.assign(P, {0.0, 0.0});
        std::vector<double> sv(s_layout.values.data(), s_layout.values.data() + s_layout.size());
        std::vector<double> gv = gamma_from_state<double>(sv);
        for (int i = 0; i < g_layout.size(); ++i) g_layout.values(i) = gv[i];
    }
}

// ---------------------------------------------------------------- public API

ForwardModel::ForwardModel(ModelConfig cfg, PilotSchedule schedule) {
    auto impl = std::make_shared<Impl>();
    impl->build(std::move(cfg), std::move(schedule));
    impl_ = std::move(impl);
}

const ModelConfig &ForwardModel::config() const { return impl_->cfg; }
const PilotSchedule &ForwardModel::schedule() const { return impl_->sched; }
const std::vector<PathInfo> &ForwardModel::paths() const { return impl_->paths; }
int ForwardModel::G() const { return impl_->sched.G; }
int ForwardModel::K() const { return impl_->sched.K; }
int ForwardModel::rx_dim() const { return impl_->n_out(); }
int ForwardModel::num_bs() const { return impl_->bs.n(); }
int ForwardModel::num_ue() const { return impl_->ue.n(); }
double ForwardModel::sigma2() const { return impl_->sigma2; }
const ParamVectors &ForwardModel::state_layout() const { return impl_->s_layout; }
bool ForwardModel::has_measurement_layout() const { return impl_->has_gamma; }

const ParamVectors &ForwardModel::measurement_layout() const {
    if (!impl_->has_gamma) throw ConfigError("measurement parameterization requires the plane-wave model");
    return impl_->g_layout;
}

namespace {
std::vector<double> to_std(const Eigen::VectorXd &v) { return std::vector<double>(v.data(), v.data() + v.size()); }
} // namespace

std::vector<Eigen::VectorXcd> ForwardModel::mean_state(const Eigen::VectorXd &s) const {
    if (s.size() != impl_->s_layout.size()) throw ConfigError("state vector has wrong length");
    return impl_->mean_of([&] { return impl_->from_state<double>(to_std(s)); }, false);
}

std::vector<Eigen::VectorXcd> ForwardModel::mean_measurement(const Eigen::VectorXd &gamma) const {
    if (gamma.size() != measurement_layout().size()) throw ConfigError("measurement vector has wrong length");
    return impl_->mean_of([&] { return impl_->from_measurement<double>(to_std(gamma)); }, false);
}

std::vector<Eigen::MatrixXcd> ForwardModel::jacobian_state(const Eigen::VectorXd &s, DiffMode mode,
                                                           double step_scale) const {
    if (s.size() != impl_->s_layout.size()) throw ConfigError("state vector has wrong length");
    if (mode == DiffMode::Dual) return impl_->jacobian_dual(s, false);
    return impl_->jacobian_central(s, impl_->s_layout, false, step_scale);
}

std::vector<Eigen::MatrixXcd> ForwardModel::jacobian_measurement(const Eigen::VectorXd &gamma, DiffMode mode,
                                                                 double step_scale) const {
    const ParamVectors &gl = measurement_layout();
    if (gamma.size() != gl.size()) throw ConfigError("measurement vector has wrong length");
    if (mode == DiffMode::Dual) return impl_->jacobian_dual(gamma, true);
    return impl_->jacobian_central(gamma, gl, true, step_scale);
}

Eigen::VectorXd ForwardModel::gamma_of_state(const Eigen::VectorXd &s) const {
    measurement_layout();
    auto g = impl_->gamma_from_state<double>(to_std(s));
    return Eigen::Map<Eigen::VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

Eigen::MatrixXd ForwardModel::gamma_jacobian(const Eigen::VectorXd &s, DiffMode mode, double step_scale) const {
    const ParamVectors &gl = measurement_layout();
    const ParamVectors &sl = impl_->s_layout;
    const int n = sl.size(), m = gl.size();
    Eigen::MatrixXd J(m, n);
    if (mode == DiffMode::Dual) {
        for (int i = 0; i < n; ++i) {
            std::vector<Dual> th(n);
            for (int j = 0; j < n; ++j) th[j] = Dual(s(j), i == j ? 1.0 : 0.0);
            auto g = impl_->gamma_from_state<Dual>(th);
            for (int r = 0; r < m; ++r) J(r, i) = g[r].d;
        }
    } else {
        for (int i = 0; i < n; ++i) {
            const double h = diff_step(sl.entries[i].kind, s(i)) * step_scale;
            auto sp = to_std(s), sm = sp;
            sp[i] += h;
            sm[i] -= h;
            auto gp = impl_->gamma_from_state<double>(sp), gmn = impl_->gamma_from_state<double>(sm);
            for (int r = 0; r < m; ++r) {
                double diff = gp[r] - gmn[r];
                if (gl.entries[r].kind == ParamKind::Angle) diff = wrap_pi(diff);
                J(r, i) = diff / (2.0 * h);
            }
        }
    }
    if (!J.allFinite()) throw NumericalFailure("non-finite entry in the state-to-measurement Jacobian");
    return J;
}

std::vector<std::vector<Eigen::VectorXcd>> ForwardModel::path_responses_state(const Eigen::VectorXd &s) const {
    return impl_->responses(impl_->from_state<double>(to_std(s)));
}

std::vector<std::vector<Eigen::VectorXcd>> ForwardModel::path_responses_measurement(const Eigen::VectorXd &gamma) const {
    measurement_layout();
    return impl_->responses(impl_->from_measurement<double>(to_std(gamma)));
}

Eigen::VectorXcd ForwardModel::whiten(const Eigen::VectorXcd &v, int g) const {
    if (impl_->comb.empty()) return v;
    const Eigen::MatrixXcd &C = impl_->comb[g];
    Eigen::LLT<Eigen::MatrixXcd> llt(C * C.adjoint());
    Eigen::MatrixXcd L = llt.matrixL();
    return L.triangularView<Eigen::Lower>().solve(v);
}

Eigen::MatrixXcd ForwardModel::channel(const Eigen::VectorXd &s, int g, int k) const {
    const Impl &m = *impl_;
    PathSet<double> ps = m.from_state<double>(to_std(s));
    const int nU = m.ue.n();
    Eigen::MatrixXcd H(m.bs.n(), nU);
    // Evaluate column by column with unit pilots.
    Impl tmp = m;
    for (int u = 0; u < nU; ++u) {
        tmp.sched.x[static_cast<size_t>(g) * m.sched.K + k] = Eigen::VectorXcd::Unit(nU, u);
        const auto rc = tmp.ris_cache(g, k);
        H.col(u) = Impl::values_of(tmp.eval<double>(ps, g, k, rc));
    }
    return H;
}

std::vector<std::vector<Eigen::MatrixXcd>> ForwardModel::ris_element_jacobians(const Eigen::VectorXd &s) const {
    const Impl &m = *impl_;
    if (!m.has_ris) throw ConfigError("scenario has no RIS");
    int ridx = -1;
    for (size_t p = 0; p < m.paths.size(); ++p)
        if (m.paths[p].kind == PathKind::RIS) ridx = static_cast<int>(p);
    const int n = m.s_layout.size();
    const int G = m.sched.G, K = m.sched.K, nR = m.ris.n(), nB = m.bs.n();
    std::vector<PathSet<Dual>> sets(n);
    for (int i = 0; i < n; ++i) {
        std::vector<Dual> th(n);
        for (int j = 0; j < n; ++j) th[j] = Dual(s(j), i == j ? 1.0 : 0.0);
        sets[i] = m.from_state<Dual>(th);
    }
    std::vector<std::vector<Eigen::MatrixXcd>> out(static_cast<size_t>(G) * K);
#pragma omp parallel for schedule(static)
    for (int gk = 0; gk < G * K; ++gk) {
        const int g = gk / K, k = gk % K;
        const double fk = m.cfg.wf.f(k);
        const auto rc = m.ris_cache(g, k);
        const Eigen::VectorXcd &x = m.sched.pilot(g, k);
        std::vector<Eigen::MatrixXcd> mats(1 + nR, Eigen::MatrixXcd::Zero(m.n_out(), n));
        const std::vector<std::vector<Vec3>> none;
        for (int i = 0; i < n; ++i) {
            const PathSet<Dual> &ps = sets[i];
            CVec<Dual> mu0(nB, CDual(cplx(0.0, 0.0)));
            for (size_t p = 0; p < ps.terms.size(); ++p)
                if (static_cast<int>(p) != ridx) m.add_term<Dual>(ps.terms[p], g, k, rc, false, mu0);
            mats[0].col(i) = m.finish(Impl::derivs_of(mu0), g, true);
            if (ridx < 0) continue;
            const Term<Dual> &t = ps.terms[ridx];
            const CDual cf = m.coef<Dual>(t, k, false);
            CVec<Dual> v;
            m.ue_side_product<Dual>(t.hop, m.ris, none, g, fk, x, v);
            for (int r = 0; r < nR; ++r) {
                CVec<Dual> mu(nB);
                const CDual cv = cf * v[r];
                for (int b = 0; b < nB; ++b) {
                    const cplx xb = m.bs_ris.full ? rc.X(b, r) : rc.fb(b) * rc.fr(r);
                    mu[b] = cv * xb;
                }
                mats[1 + r].col(i) = m.finish(Impl::derivs_of(mu), g, true);
            }
        }
        out[gk] = std::move(mats);
    }
    return out;
}

Eigen::MatrixXd fim_from_jacobians(const std::vector<Eigen::MatrixXcd> &J, double sigma2) {
    return fim_accumulate(J, sigma2, KernelPolicy::Parallel);
}

} // namespace thzloc
