#pragma once

#include "flowexp/hall.hpp"
#include "flowexp/signals.hpp"

#include <map>
#include <string>
#include <vector>

namespace flowexp {

// B_0..B_n with B_1 = -1/2.
std::vector<Rational> bernoulli_table(int n);
Rational bernoulli(int n);

enum class CoordKind { first, second, pseudo_first };
std::string to_string(CoordKind k);

struct CoordEntry {
    std::size_t index;  // rank in the basis
    BracketPtr b;
    Rational value;
};

struct CoordTable {
    CoordKind kind = CoordKind::first;
    Rational t;
    std::string control_id;
    int M = 0;
    int N0 = -1;  // n0 cap, pseudo-first kind only
    std::vector<CoordEntry> entries;

    // Zero when the bracket is not in the table.
    Rational value(const std::string& key) const;
    const CoordEntry* find(const std::string& key) const;
    // bracket,length,n,n0,value,decimal; letter 0 is counted as X0.
    std::string to_csv(const std::vector<std::string>& names = {}) const;
};

// zeta_b: exp(sum zeta_b b) equals the word series up to degree M.
CoordTable coord_first_kind(const HallBasis& basis, const ControlTuple& a, const Rational& t, int M);

// alpha_b with e^{y_1}...e^{y_n} = e^{sum alpha_b b}, |b| <= M. The basis must
// be over n letters.
CoordTable cbhd_coeffs(int n_args, const HallBasis& basis, int M);

// The F_{q,h} pieces: the part of CBHD(y_1..y_n) of multidegree h, as a word series.
NCSeries cbhd_piece(const CoordTable& alpha, const HallBasis& basis, const std::vector<int>& h, int degree);

// Closed form of zeta for ad^k_{X0}(X1) over two channels (a0, a1).
Rational first_kind_ad_closed_form(int k, const Control& a0, const Control& a1, const Rational& t);

// xi_b as exact piecewise polynomials in t, one per basis element, together
// with their derivatives.
struct SecondKindFunctions {
    std::vector<Control> xi, xi_dot;
};
SecondKindFunctions coord_second_kind_functions(const HallBasis& basis, const ControlTuple& a);
CoordTable coord_second_kind(const HallBasis& basis, const ControlTuple& a, const Rational& t);

// The extended alphabet Y_{k,i} -> ad^k_{X0}(X_i), k <= N0, i = 1..m, with
// controls (s-t)^k/k! u_i(s). Letter id is k*m + (i-1).
ControlTuple extended_controls(const ControlTuple& u, const Rational& t, int N0);
NCSeries extended_letter_image(int k, int i, int m, int degree);

// eta_b for basis elements with n(b) <= M and n0(b) <= N0. The basis is over
// {X0, X1..Xm}, u holds u_1..u_m.
CoordTable coord_pseudo_first_kind(const HallBasis& basis, const ControlTuple& u, const Rational& t, int M, int N0);

// Smallest C with |eta_b| <= C^{|b|}/|b|! t^{n0(b)} ||u||_{L1}^{n(b)} over the table.
double pseudo_first_bound_constant(const CoordTable& table, const ControlTuple& u);

struct BoundAuditReport {
    bool ok = true;
    std::string witness;
    double worst_ratio = 0;          // max |xi_b| / ||a||^{|b|}
    std::map<int, double> drift_c;   // fitted c_k for |xi_b| <= ||u||^k (c t)^{n0}/n0!
    std::map<int, double> x1_min_c;  // fitted c_k for the X1-minimal scalar-input bound
    std::string summary() const;
};

// Checks |xi_b(t)| <= ||a||_{L1(0,t)}^{|b|}. With a drift channel (a[drift] = 1)
// it also fits the constants of the drift-aware bounds.
BoundAuditReport coord_bound_audit(const CoordTable& table, const ControlTuple& a, int drift = -1);

}  // namespace flowexp
