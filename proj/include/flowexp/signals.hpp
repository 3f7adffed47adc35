#pragma once

#include "flowexp/freealg.hpp"

#include <functional>
#include <string>
#include <vector>

namespace flowexp {

// Univariate polynomial with rational coefficients, c[i] multiplies t^i.
class Poly1 {
public:
    Poly1() = default;
    explicit Poly1(std::vector<Rational> c);
    static Poly1 constant(const Rational& a);
    static Poly1 monomial(int deg, const Rational& a = 1);
    // (t - s)^k / k!
    static Poly1 shifted_power(const Rational& s, int k);

    int degree() const { return static_cast<int>(c_.size()) - 1; }
    bool is_zero() const { return c_.empty(); }
    const std::vector<Rational>& coeffs() const { return c_; }
    Rational coeff(int i) const { return i < static_cast<int>(c_.size()) ? c_[i] : Rational(0); }

    Rational operator()(const Rational& t) const;
    double operator()(double t) const;

    Poly1 derivative() const;
    Poly1 antiderivative() const;  // zero constant term
    // p(a t)
    Poly1 scaled_argument(const Rational& a) const;

    Poly1& operator+=(const Poly1& o);
    Poly1& operator-=(const Poly1& o);
    Poly1& operator*=(const Rational& s);
    friend Poly1 operator+(Poly1 a, const Poly1& b) { return a += b; }
    friend Poly1 operator-(Poly1 a, const Poly1& b) { return a -= b; }
    friend Poly1 operator*(Poly1 a, const Rational& s) { return a *= s; }
    friend Poly1 operator*(const Poly1& a, const Poly1& b);
    bool operator==(const Poly1& o) const { return c_ == o.c_; }

private:
    void trim();
    std::vector<Rational> c_;
};

// Piecewise polynomial scalar signal on [0, T] with rational breakpoints.
// Polynomials are written in absolute time. Values at an interior
// breakpoint are taken from the right piece.
class Control {
public:
    Control() = default;
    Control(std::vector<Rational> breakpoints, std::vector<Poly1> pieces, std::string label = "");

    static Control constant(const Rational& c, const Rational& T);
    static Control indicator(const Rational& a, const Rational& b, const Rational& T);
    static Control from_poly(const Poly1& p, const Rational& T);

    const std::vector<Rational>& breakpoints() const { return bp_; }
    const std::vector<Poly1>& pieces() const { return pieces_; }
    const std::string& label() const { return label_; }
    void set_label(std::string l) { label_ = std::move(l); }
    Rational horizon() const { return bp_.back(); }
    std::size_t piece_count() const { return pieces_.size(); }

    Rational operator()(const Rational& t) const;
    double operator()(double t) const;

    // Same signal on a finer grid (grid must contain the current breakpoints' span).
    Control refined(const std::vector<Rational>& grid) const;

    // U with U(0) = 0.
    Control primitive() const;
    Control derivative() const;
    Rational integral(const Rational& t) const;

    Control& operator+=(const Control& o);
    Control& operator*=(const Rational& s);
    friend Control operator+(Control a, const Control& b) { return a += b; }
    friend Control operator*(Control a, const Rational& s) { return a *= s; }
    friend Control operator*(const Control& a, const Control& b);
    Control times_poly(const Poly1& p) const;
    Control power(int k) const;

    // s -> u(s / lambda) on [0, lambda T], zero on [lambda T, T].
    Control time_rescale(const Rational& lambda) const;

    // L1 norm on [0, t]; exact splitting at rational roots for pieces of
    // degree <= 1, Gauss-Legendre on sign-constant subintervals otherwise.
    double l1_norm(const Rational& t) const;
    double l1_norm() const { return l1_norm(horizon()); }
    // sup |u| on [0, T], sampled on a fine grid plus breakpoints and vertex candidates
    double linf_norm() const;
    Rational l1_norm_exact_pl(const Rational& t) const;

    std::string to_json() const;
    static Control from_json(const std::string& text);

private:
    std::size_t piece_index(const Rational& t) const;
    std::vector<Rational> bp_;
    std::vector<Poly1> pieces_;
    std::string label_;
};

// Merge breakpoint grids.
std::vector<Rational> merge_grids(const std::vector<Rational>& a, const std::vector<Rational>& b);

using ControlTuple = std::vector<Control>;

// Puts every channel on the common grid.
ControlTuple common_grid(const ControlTuple& a);

// Integral over 0 < tau_1 < ... < tau_n < t of a_{w1}(tau_1)...a_{wn}(tau_n).
Rational iterated_word_integral(const Word& w, const ControlTuple& a, const Rational& t);

// Exact piecewise-polynomial I_w(t) for one word.
Control iterated_word_function(const Word& w, const ControlTuple& a);

// S with <S, X_w> = iterated_word_integral(w, a, t) for |w| <= N and an
// optional word filter (must be prefix-closed).
NCSeries word_series(const ControlTuple& a, const Rational& t, int N,
                     const std::function<bool(const Word&)>& keep = nullptr);

// Integral over 0 < tau_1 < ... < tau_n < t of U(tau_n)^{k_n}...U(tau_1)^{k_1}, U = primitive(u).
Rational iterated_U_integral(const std::vector<int>& k, const Control& u, const Rational& t);

// Random piecewise-linear control (continuous or not) on [0, T] with K pieces.
template <class Rng>
Control random_pl_control(Rng& rng, const Rational& T, int K, int amp_num = 3, bool continuous = false);

}  // namespace flowexp

#include <random>

namespace flowexp {

template <class Rng>
Control random_pl_control(Rng& rng, const Rational& T, int K, int amp_num, bool continuous)
{
    std::uniform_int_distribution<int> val(-amp_num * 4, amp_num * 4);
    std::vector<Rational> bp;
    for (int k = 0; k <= K; ++k) {
        Rational r = T * k / K;
        r.canonicalize();
        bp.push_back(r);
    }
    std::vector<Poly1> pieces;
    Rational prev_end(val(rng), 4);
    prev_end.canonicalize();
    for (int k = 0; k < K; ++k) {
        Rational v0 = continuous ? prev_end : Rational(val(rng), 4);
        Rational v1(val(rng), 4);
        v0.canonicalize();
        v1.canonicalize();
        Rational slope = (v1 - v0) / (bp[k + 1] - bp[k]);
        pieces.emplace_back(std::vector<Rational>{v0 - slope * bp[k], slope});
        prev_end = v1;
    }
    return Control(bp, pieces);
}

}  // namespace flowexp
