#pragma once

#include <cmath>

namespace poolforge {

// First-order forward-mode dual number. Running the energy backprop with
// coordinates seeded as (r, v) yields parameter gradients whose dot part is
// the directional second derivative d/deps grad_theta E(r + eps*v) — exactly
// the term the force-loss parameter gradient needs.
struct Dual {
    double val = 0.0;
    double dot = 0.0;

    Dual() = default;
    Dual(double v) : val(v) {} // NOLINT(google-explicit-constructor)
    Dual(double v, double d) : val(v), dot(d) {}
};

inline Dual operator+(Dual a, Dual b) { return {a.val + b.val, a.dot + b.dot}; }
inline Dual operator-(Dual a, Dual b) { return {a.val - b.val, a.dot - b.dot}; }
inline Dual operator-(Dual a) { return {-a.val, -a.dot}; }
inline Dual operator*(Dual a, Dual b) { return {a.val * b.val, a.dot * b.val + a.val * b.dot}; }
inline Dual operator/(Dual a, Dual b) {
    const double inv = 1.0 / b.val;
    const double q = a.val * inv;
    return {q, (a.dot - q * b.dot) * inv};
}
inline Dual& operator+=(Dual& a, Dual b) { a = a + b; return a; }
inline Dual& operator-=(Dual& a, Dual b) { a = a - b; return a; }
inline Dual& operator*=(Dual& a, Dual b) { a = a * b; return a; }

inline bool operator<(Dual a, Dual b) { return a.val < b.val; }
inline bool operator>(Dual a, Dual b) { return a.val > b.val; }

inline Dual sqrt(Dual a) {
    const double s = std::sqrt(a.val);
    return {s, s > 0 ? a.dot / (2.0 * s) : 0.0};
}
inline Dual exp(Dual a) {
    const double e = std::exp(a.val);
    return {e, e * a.dot};
}
inline Dual tanh(Dual a) {
    const double t = std::tanh(a.val);
    return {t, (1.0 - t * t) * a.dot};
}
inline Dual cos(Dual a) { return {std::cos(a.val), -std::sin(a.val) * a.dot}; }
inline Dual sin(Dual a) { return {std::sin(a.val), std::cos(a.val) * a.dot}; }

// Scalar-type helpers so the surrogate forward/backward pass can be written
// once and instantiated for double and Dual.
inline double value_of(double x) { return x; }
inline double value_of(Dual x) { return x.val; }
inline double dot_of(double) { return 0.0; }
inline double dot_of(Dual x) { return x.dot; }

} // namespace poolforge
