// SPDX-License-Identifier: Apache-2.0
// Forward-mode dual numbers used to differentiate the forward model.
// A Dual carries a value and one directional derivative; CDual is its complex counterpart.
#pragma once

#include <Eigen/Core>
#include <cmath>
#include <complex>
#include <type_traits>

namespace thzloc {

struct Dual {
    double v = 0.0; // value
    double d = 0.0; // derivative along the seeded direction

    constexpr Dual() = default;
    constexpr Dual(double value) : v(value) {}
    constexpr Dual(double value, double deriv) : v(value), d(deriv) {}

    Dual &operator+=(const Dual &o) { v += o.v; d += o.d; return *this; }
    Dual &operator-=(const Dual &o) { v -= o.v; d -= o.d; return *this; }
    Dual &operator*=(const Dual &o) { d = d * o.v + v * o.d; v *= o.v; return *this; }
    Dual &operator/=(const Dual &o) { d = (d * o.v - v * o.d) / (o.v * o.v); v /= o.v; return *this; }
};

inline Dual operator+(Dual a, const Dual &b) { return a += b; }
inline Dual operator-(Dual a, const Dual &b) { return a -= b; }
inline Dual operator*(Dual a, const Dual &b) { return a *= b; }
inline Dual operator/(Dual a, const Dual &b) { return a /= b; }
inline Dual operator-(const Dual &a) { return {-a.v, -a.d}; }
inline Dual operator+(const Dual &a, double b) { return {a.v + b, a.d}; }
inline Dual operator+(double a, const Dual &b) { return {a + b.v, b.d}; }
inline Dual operator-(const Dual &a, double b) { return {a.v - b, a.d}; }
inline Dual operator-(double a, const Dual &b) { return {a - b.v, -b.d}; }
inline Dual operator*(const Dual &a, double b) { return {a.v * b, a.d * b}; }
inline Dual operator*(double a, const Dual &b) { return {a * b.v, a * b.d}; }
inline Dual operator/(const Dual &a, double b) { return {a.v / b, a.d / b}; }
inline Dual operator/(double a, const Dual &b) { return {a / b.v, -a * b.d / (b.v * b.v)}; }
inline Dual operator+(const Dual &a) { return a; }
inline bool operator<(const Dual &a, const Dual &b) { return a.v < b.v; }
inline bool operator<(const Dual &a, double b) { return a.v < b; }
inline bool operator<(double a, const Dual &b) { return a < b.v; }
inline bool operator>(const Dual &a, double b) { return a.v > b; }
inline bool operator>(double a, const Dual &b) { return a > b.v; }
inline bool operator<=(const Dual &a, double b) { return a.v <= b; }
inline bool operator<=(double a, const Dual &b) { return a <= b.v; }
inline bool operator>=(const Dual &a, double b) { return a.v >= b; }
inline bool operator>=(double a, const Dual &b) { return a >= b.v; }
inline bool operator>(const Dual &a, const Dual &b) { return a.v > b.v; }
inline bool operator<=(const Dual &a, const Dual &b) { return a.v <= b.v; }
inline bool operator>=(const Dual &a, const Dual &b) { return a.v >= b.v; }
inline bool operator==(const Dual &a, const Dual &b) { return a.v == b.v && a.d == b.d; }
inline bool operator!=(const Dual &a, const Dual &b) { return !(a == b); }

inline Dual sin(const Dual &a) { return {std::sin(a.v), a.d * std::cos(a.v)}; }
inline Dual cos(const Dual &a) { return {std::cos(a.v), -a.d * std::sin(a.v)}; }
inline Dual exp(const Dual &a) { double e = std::exp(a.v); return {e, a.d * e}; }
inline Dual log(const Dual &a) { return {std::log(a.v), a.d / a.v}; }
inline Dual sqrt(const Dual &a) {
    double s = std::sqrt(a.v);
    return {s, s > 0.0 ? a.d / (2.0 * s) : 0.0};
}
inline Dual abs(const Dual &a) { return a.v < 0.0 ? -a : a; }
inline Dual atan2(const Dual &y, const Dual &x) {
    double r2 = x.v * x.v + y.v * y.v;
    return {std::atan2(y.v, x.v), r2 > 0.0 ? (x.v * y.d - y.v * x.d) / r2 : 0.0};
}
inline Dual asin(const Dual &a) {
    double c = std::sqrt(std::max(0.0, 1.0 - a.v * a.v));
    return {std::asin(a.v), c > 0.0 ? a.d / c : 0.0};
}
inline Dual hypot(const Dual &a, const Dual &b) { return sqrt(a * a + b * b); }
inline bool isfinite(const Dual &a) { return std::isfinite(a.v) && std::isfinite(a.d); }

using cplx = std::complex<double>;

struct CDual {
    cplx v{};
    cplx d{};

    CDual() = default;
    CDual(cplx value) : v(value) {}
    CDual(cplx value, cplx deriv) : v(value), d(deriv) {}
    CDual(const Dual &re) : v(re.v), d(re.d) {}

    CDual &operator+=(const CDual &o) { v += o.v; d += o.d; return *this; }
    CDual &operator-=(const CDual &o) { v -= o.v; d -= o.d; return *this; }
    CDual &operator*=(const CDual &o) { d = d * o.v + v * o.d; v *= o.v; return *this; }
};

inline CDual operator+(CDual a, const CDual &b) { return a += b; }
inline CDual operator-(CDual a, const CDual &b) { return a -= b; }
inline CDual operator*(CDual a, const CDual &b) { return a *= b; }
inline CDual operator*(const CDual &a, const cplx &b) { return {a.v * b, a.d * b}; }
inline CDual operator*(const cplx &b, const CDual &a) { return {a.v * b, a.d * b}; }
inline CDual operator*(const CDual &a, double b) { return {a.v * b, a.d * b}; }
inline CDual operator*(double b, const CDual &a) { return {a.v * b, a.d * b}; }
inline CDual operator*(const CDual &a, const Dual &b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline CDual operator*(const Dual &b, const CDual &a) { return a * b; }
inline CDual operator+(const CDual &a, const cplx &b) { return {a.v + b, a.d}; }
inline CDual operator+(const cplx &b, const CDual &a) { return {a.v + b, a.d}; }
inline CDual operator-(const CDual &a, const cplx &b) { return {a.v - b, a.d}; }
inline CDual operator-(const cplx &b, const CDual &a) { return {b - a.v, -a.d}; }
inline CDual operator-(const CDual &a) { return {-a.v, -a.d}; }
inline CDual conj(const CDual &a) { return {std::conj(a.v), std::conj(a.d)}; }

// Scalar-generic helpers so the forward model can be written once for double and Dual.
template <class T>
using complex_of = std::conditional_t<std::is_same_v<T, double>, cplx, CDual>;

inline double value(double x) { return x; }
inline double value(const Dual &x) { return x.v; }
inline cplx value(const cplx &x) { return x; }
inline cplx value(const CDual &x) { return x.v; }
inline double deriv(double) { return 0.0; }
inline double deriv(const Dual &x) { return x.d; }
inline cplx deriv(const cplx &) { return {}; }
inline cplx deriv(const CDual &x) { return x.d; }

// exp(j*phase)
inline cplx expj(double phase) { return {std::cos(phase), std::sin(phase)}; }
inline CDual expj(const Dual &phase) {
    cplx e = expj(phase.v);
    return {e, cplx(0.0, phase.d) * e};
}

// Promote a real scalar to the matching complex type.
inline cplx to_complex(double x) { return {x, 0.0}; }
inline CDual to_complex(const Dual &x) { return CDual(x); }

} // namespace thzloc

namespace Eigen {
template <>
struct NumTraits<thzloc::Dual> : NumTraits<double> {
    using Real = thzloc::Dual;
    using NonInteger = thzloc::Dual;
    using Nested = thzloc::Dual;
    using Literal = thzloc::Dual;
    enum {
        IsComplex = 0,
        IsInteger = 0,
        IsSigned = 1,
        RequireInitialization = 1,
        ReadCost = 2,
        AddCost = 2,
        MulCost = 4
    };
};
} // namespace Eigen
