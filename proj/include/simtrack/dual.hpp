#pragma once

#include <type_traits>

namespace simtrack::detail {

// Forward-mode dual number: value plus one derivative component.  Nesting
// (Dual<Dual<double>>) gives exact second derivatives.  Mass-action rate
// expressions are rational in the state once the Arrhenius constants are
// folded in, so only +, -, *, / and integer powers are provided; integer
// powers are expanded by repeated multiplication, which keeps derivatives
// well defined at zero concentrations (no x^(n-1) with x=0, n=1 pitfalls).
template <class T>
struct Dual {
    T val{};
    T dot{};

    Dual() = default;
    Dual(const T& v) : val(v) {}
    Dual(const T& v, const T& d) : val(v), dot(d) {}

    // lift a plain arithmetic constant through any nesting depth
    template <class U>
        requires(std::is_arithmetic_v<U> && !std::is_same_v<U, T>)
    Dual(U v) : val(static_cast<T>(v)) {}

    Dual operator-() const { return {-val, -dot}; }

    Dual& operator+=(const Dual& o) {
        val += o.val;
        dot += o.dot;
        return *this;
    }
    Dual& operator-=(const Dual& o) {
        val -= o.val;
        dot -= o.dot;
        return *this;
    }
    Dual& operator*=(const Dual& o) {
        dot = dot * o.val + val * o.dot;
        val = val * o.val;
        return *this;
    }

    friend Dual operator+(Dual a, const Dual& b) { return a += b; }
    friend Dual operator-(Dual a, const Dual& b) { return a -= b; }
    friend Dual operator*(const Dual& a, const Dual& b) {
        return {a.val * b.val, a.dot * b.val + a.val * b.dot};
    }
    friend Dual operator/(const Dual& a, const Dual& b) {
        T q = a.val / b.val;
        return {q, (a.dot - q * b.dot) / b.val};
    }

    friend Dual operator*(const Dual& a, double s) { return {a.val * s, a.dot * s}; }
    friend Dual operator*(double s, const Dual& a) { return a * s; }
    friend Dual operator+(const Dual& a, double s) { return {a.val + s, a.dot}; }
    friend Dual operator+(double s, const Dual& a) { return a + s; }
    friend Dual operator-(const Dual& a, double s) { return {a.val - s, a.dot}; }
    friend Dual operator-(double s, const Dual& a) { return {s - a.val, -a.dot}; }
    friend Dual operator/(const Dual& a, double s) { return {a.val / s, a.dot / s}; }
    friend Dual operator/(double s, const Dual& a) { return Dual(s) / a; }
};

// x^n for n >= 0 by repeated multiplication (n is a small stoichiometric count)
template <class T>
T pow_i(const T& x, int n) {
    T r(1.0);
    for (int i = 0; i < n; ++i) r = r * x;
    return r;
}

}  // namespace simtrack::detail
