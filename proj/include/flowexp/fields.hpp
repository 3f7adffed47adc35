#pragma once

#include "flowexp/hall.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace flowexp {

// Sparse multivariate polynomial with rational coefficients.
class MPoly {
public:
    using Exp = std::vector<int>;

    MPoly() = default;
    explicit MPoly(int nvars) : n_(nvars) {}
    static MPoly constant(int nvars, const Rational& c);
    static MPoly variable(int nvars, int i, const Rational& c = 1);  // c x_i
    static MPoly monomial(int nvars, const Exp& e, const Rational& c = 1);

    int nvars() const { return n_; }
    const std::map<Exp, Rational>& terms() const { return t_; }
    bool is_zero() const { return t_.empty(); }
    int total_degree() const;
    bool is_constant() const;

    void add(const Exp& e, const Rational& c);
    Rational operator()(const std::vector<Rational>& x) const;
    double operator()(const double* x) const;
    MPoly derivative(int i) const;
    // Same polynomial with every coefficient replaced by its absolute value.
    MPoly abs_coeffs() const;

    MPoly& operator+=(const MPoly& o);
    MPoly& operator-=(const MPoly& o);
    MPoly& operator*=(const Rational& s);
    friend MPoly operator+(MPoly a, const MPoly& b) { return a += b; }
    friend MPoly operator-(MPoly a, const MPoly& b) { return a -= b; }
    friend MPoly operator*(MPoly a, const Rational& s) { return a *= s; }
    friend MPoly operator*(const MPoly& a, const MPoly& b);
    bool operator==(const MPoly& o) const { return n_ == o.n_ && t_ == o.t_; }

    std::string to_string(const std::vector<std::string>& names = {}) const;

private:
    int n_ = 0;
    std::map<Exp, Rational> t_;
};

MPoly mpoly_pow(const MPoly& p, int k);

// Vector field f_j = num_j / base^power. Polynomial fields have power 0.
// The base is shared by every component, which keeps the class closed under
// brackets whenever the operands share it (or one of them is polynomial).
class VectorField {
public:
    VectorField() = default;
    VectorField(std::vector<MPoly> num, MPoly base = MPoly(), int power = 0);

    int dim() const { return static_cast<int>(num_.size()); }
    const std::vector<MPoly>& numerators() const { return num_; }
    const MPoly& base() const { return base_; }
    int power() const { return power_; }
    bool is_polynomial() const { return power_ == 0; }
    bool is_zero() const;

    std::vector<Rational> operator()(const std::vector<Rational>& x) const;
    Eigen::VectorXd eval(const Eigen::VectorXd& x) const;

    // Exact equality as rational functions.
    bool operator==(const VectorField& o) const;
    VectorField& operator+=(const VectorField& o);
    VectorField& operator*=(const Rational& s);
    friend VectorField operator+(VectorField a, const VectorField& b) { return a += b; }
    friend VectorField operator*(VectorField a, const Rational& s) { return a *= s; }

    // (g . grad) of this field, i.e. Df g.
    VectorField directional(const VectorField& g) const;

    std::string to_json() const;
    static VectorField from_json(const std::string& text);
    std::string to_string(const std::vector<std::string>& names = {}) const;

    friend VectorField lie_bracket(const VectorField& f, const VectorField& g);

private:
    void normalize();
    std::vector<MPoly> num_;
    MPoly base_;
    int power_ = 0;
};

// [f,g] = Dg f - Df g.
VectorField lie_bracket(const VectorField& f, const VectorField& g);

// Common constructions.
VectorField constant_field(int dim, int i, const Rational& c = 1);  // c e_i
VectorField linear_field(const std::vector<std::vector<Rational>>& A);  // x -> A x
// num(x1) / den(x1)^power e_j, with univariate polynomials given by coefficients.
VectorField univariate_rational_field(int dim, int j, const std::vector<Rational>& num,
                                      const std::vector<Rational>& den, int power);

// f_b obtained by replacing each letter of b by its generator.
VectorField substitute_bracket(const Bracket& b, const std::vector<VectorField>& generators);
// f_b for every basis element, sharing the recursion.
std::vector<VectorField> substitute_basis(const HallBasis& basis, const std::vector<VectorField>& generators);

// Evaluation, first and second derivatives in double precision.
class FieldEval {
public:
    FieldEval() = default;
    explicit FieldEval(const VectorField& f);
    int dim() const { return d_; }
    Eigen::VectorXd value(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;
    // H[i](j,k) = d^2 f_i / dx_j dx_k
    std::vector<Eigen::MatrixXd> hessian(const Eigen::VectorXd& x) const;

private:
    struct Term {
        double c;
        std::vector<int> e;
    };
    using CPoly = std::vector<Term>;
    static CPoly compile(const MPoly& p);
    static double eval(const CPoly& p, const Eigen::VectorXd& x);
    double inv_base(const Eigen::VectorXd& x, double& q) const;

    int d_ = 0, k_ = 0;
    std::vector<CPoly> n_;                 // numerators
    std::vector<std::vector<CPoly>> dn_;   // dn_[i][j] = d n_i / dx_j
    std::vector<std::vector<std::vector<CPoly>>> ddn_;
    CPoly q_;
    std::vector<CPoly> dq_;
    std::vector<std::vector<CPoly>> ddq_;
};

// Named systems used throughout the tests and the command line.
// f0 = e1, f1 = e2 / (1 - x1) on R^2.
std::vector<VectorField> optimal_pair();
// f0 = x2 e1, f1 = e2 / (1 - x1) on R^2.
std::vector<VectorField> divergent_pair();
// f0 = (0, x1 + x1^2, x1 x2), f1 = e1 on R^3.
std::vector<VectorField> cubic_drift_system();

struct MajorantNorms {
    Rational ck_upper;
    Rational analytic_upper;
};

// Certified upper bounds for the C^k norm and the analytic r-norm on the
// ball of radius delta, by the absolute-coefficient majorant.
MajorantNorms majorant_norms(const VectorField& f, int k, const Rational& delta, const Rational& r);

}  // namespace flowexp
