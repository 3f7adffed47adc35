#pragma once

#include "flowexp/coords.hpp"
#include "flowexp/fields.hpp"
#include "flowexp/flows.hpp"

#include <Eigen/Dense>

#include <complex>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace flowexp {

struct ErrorReport {
    std::string method;
    int M = 0;
    int N0 = -1;
    std::string basis_id;
    std::string scale_name;  // "t", "eps", "u_l1", "U_linf", ...
    double scale = 0;
    Eigen::VectorXd approx, oracle;
    double error = 0;
    std::vector<std::pair<double, double>> series;  // (scale, error) over a sweep
    std::map<std::string, double> extra;            // certificates and auxiliary numbers

    std::string to_json() const;
    static ErrorReport from_json(const std::string& text);
};

struct OrderFit {
    double slope = 0, intercept = 0, residual = 0;
    double scale_min = 0, scale_max = 0;
    int points = 0;
    std::string to_json() const;
};

// Least-squares slope of log(error) against log(scale). Points with error
// below `floor` are dropped; at least four must remain.
OrderFit order_fit(const std::vector<std::pair<double, double>>& pairs, double floor = 1e-10);

// x' = sum_i a_i(t) f_i(x). When `drift` >= 0 the channel a[drift] is the
// constant 1 and `n` below counts the other letters.
struct Truncation {
    int M = 1;
    int drift = -1;
    int N0 = -1;  // cap on drift letters; negative means truncate by total length M
    bool keep(const Word& w) const;
    bool keep(const Bracket& b) const;
};

// Oracle for the control system, always through the adaptive solver.
Eigen::VectorXd control_oracle(const std::vector<VectorField>& f, const ControlTuple& a, const Eigen::VectorXd& p,
                               double t, double tol);

// p + sum_w (int a_w) (f_w1 . grad) ... (f_wn . grad)(Id)(p), operators built exactly.
Eigen::VectorXd chen_fliess_eval(const std::vector<VectorField>& f, const ControlTuple& a, const Eigen::VectorXd& p,
                                 const Rational& t, const Truncation& tr);
ErrorReport chen_fliess_report(const std::vector<VectorField>& f, const ControlTuple& a, const Eigen::VectorXd& p,
                               const Rational& t, const Truncation& tr, double tol = 1e-12);

// Z_M = sum zeta_b f_b over the basis elements kept by the truncation.
VectorField magnus_field(const HallBasis& basis, const std::vector<VectorField>& f, const ControlTuple& a,
                         const Rational& t, const Truncation& tr);
ErrorReport magnus_eval(const HallBasis& basis, const std::vector<VectorField>& f, const ControlTuple& a,
                        const Eigen::VectorXd& p, const Rational& t, const Truncation& tr, double tol = 1e-12,
                        VectorField* z_out = nullptr);

// e^{eps f_n} ... e^{eps f_1} p (f_1 applied first) against the flow of CBHD_M.
ErrorReport cbhd_eval(const std::vector<VectorField>& f, const Rational& eps, const Eigen::VectorXd& p, int M,
                      double tol = 1e-12);
// log of e^{A_1} ... e^{A_n} on matrices, via the CBHD coefficients up to order M.
Eigen::MatrixXd cbhd_matrix(const std::vector<Eigen::MatrixXd>& A, int M);

// x' = f0 + sum u_i f_i. Route (i): eta coordinates with n(b) <= M, n0(b) <= N0.
// Route (ii) (M <= 2, optional): the logarithm of the pushed-forward field by quadrature.
struct InteractionResult {
    ErrorReport report;
    VectorField z;                       // route (i) field
    Eigen::VectorXd route_ii;            // empty unless requested
    double route_gap = 0;                // |route (i) - route (ii)| at the endpoint
};
InteractionResult interaction_magnus_eval(const VectorField& f0, const std::vector<VectorField>& f,
                                          const ControlTuple& u, const Eigen::VectorXd& p, const Rational& t, int M,
                                          int N0, double tol = 1e-12, bool second_route = false);
// Value at y of the route (ii) field (M = 1 or 2); `nodes` Gauss points per piece.
Eigen::VectorXd interaction_log_field(const VectorField& f0, const std::vector<VectorField>& f, const ControlTuple& u,
                                      double t, int M, const Eigen::VectorXd& y, double tol, int nodes = 8);

enum class SussmannFilter { length, control_degree };
// Ordered product of e^{xi_b f_b}: largest basis element applied first.
// `control_degree` keeps b with n(b) <= M and n0(b) <= N0 (letter 0 is the drift).
ErrorReport sussmann_eval(const HallBasis& basis, const std::vector<VectorField>& f, const ControlTuple& a,
                          const Eigen::VectorXd& p, const Rational& t, SussmannFilter filter, int M, int N0 = 8,
                          double tol = 1e-12);

// Matrix version for x' = sum a_i(t) A_i x, using the first `prefix` basis elements.
// extra["tail_sum"] = sum over the prefix of |xi_b| ||A_b||.
ErrorReport sussmann_matrix_eval(const HallBasis& basis, const std::vector<Eigen::MatrixXd>& A, const ControlTuple& a,
                                 const Eigen::VectorXd& p, const Rational& t, std::size_t prefix, double tol = 1e-13);
// Matrix image of a bracket with the commutator AB - BA.
Eigen::MatrixXcd matrix_bracket_image(const Bracket& b, const std::vector<Eigen::MatrixXcd>& A);

// Scalar input x' = f0 + u f1. Y_M from the letters ad^l_{f0} ad^k_{f1}(f0), l <= L,
// then e^{U(t) f1} e^{Y_M} e^{t f0} p (f0 applied first).
VectorField scalar_refined_field(const VectorField& f0, const VectorField& f1, const Control& u, const Rational& t,
                                 int M, int L);
ErrorReport scalar_refined_eval(const VectorField& f0, const VectorField& f1, const Control& u,
                                const Eigen::VectorXd& p, const Rational& t, int M, int L = 6, double tol = 1e-12);
// Chen-Fliess form written with U: terms with l + |k| <= M and at most n0cap drift factors.
Eigen::VectorXd chen_fliess_U_eval(const VectorField& f0, const VectorField& f1, const Control& u,
                                   const Eigen::VectorXd& p, const Rational& t, int M, int n0cap);

// Projections of Z_inf and CBHD(Y_inf, U(t) X1) on n1 = r, n0 = nu, compared exactly.
struct IdentityCheck {
    bool equal = false;
    NCSeries lhs, rhs;
};
IdentityCheck formal_zm_cbh_identity(const Control& u, const Rational& t, int r, int nu);

struct ThetaRow {
    int Mp = 0;           // M'
    Rational theta;       // Theta_{2M'+1}(0)
    Rational term;        // B_{2M'} eps^{2M'} (0 for M' = 0)
    double flow_x2 = 0;   // second component of e^{CBHD}(0), closed form
};
struct CbhDivergence {
    std::vector<ThetaRow> rows;
    int k_star = -1;                      // term ratios exceed 1 from here on
    int first_million = -1;               // first M' with |Theta| > 1e6 |Theta at M'=10|
    std::vector<std::pair<int, double>> small_M_errors;  // |flow product - flow of CBHD_M| at 0
};
CbhDivergence cbh_divergence(const Rational& eps, int Mp_max, int numeric_M = 0, double tol = 1e-12);

struct MagnusControlTerm {
    int k = 0;
    Rational zeta;     // first-kind coordinate of ad^k_{X0}(X1) for u(t) = t
    Rational center;   // second component of the k-th summand at (0, 1/2)
    double ball_sup = 0;  // sampled sup on the ball of radius 1/10 around (0, 1/2)
    bool vanishes_on_axis = false;  // summand is zero on x2 = 0
};
std::vector<MagnusControlTerm> usual_magnus_control_counterexample(const Rational& t, int n_max);

struct MatrixSussmannRow {
    int k = 0;
    std::string which;  // "b1" or "b2"
    int length = 0;
    Rational alpha;     // xi = t^{|b|} / (|b| alpha)
    double gamma_k = 0; // (|b| alpha)^{1/|b|}
};
struct MatrixSussmannDivergence {
    std::vector<MatrixSussmannRow> rows;
    double gamma = 0;
    double t = 0;
    std::vector<double> exp_dist;  // ||e^{xi_{b_k^1} A_{b_k^1}} - I|| at t, k = 0..
    bool pattern_ok = false;       // A_{b_k^1} = (-1)^{k+1} i F1 and A_{b_k^2} = -i F2 for k >= 1
};
MatrixSussmannDivergence matrix_sussmann_divergence(int k_max, double t_over_gamma = 2);
std::vector<Eigen::MatrixXd> cross_product_matrices();

// Z_M(t)(0) without a flow, against x(t) from 0.
ErrorReport intrinsic_repr_eval(const HallBasis& basis, const std::vector<VectorField>& f, const ControlTuple& a,
                                const Rational& t, const Truncation& tr, double tol = 1e-12);

// Multi-input failure: x1' = u, x2' = v x1 with u = n cos(n^2 t), v = n sin(n^2 t).
struct MultiInputResult {
    int n = 0;
    double T = 0;
    double x2 = 0;
    double U_linf = 0, V_linf = 0;
};
MultiInputResult multi_input_failure(int n, double T = 1, double tol = 1e-12);

// Order study shared by the command line and the acceptance checks.
// method: cf, magnus, cbhd, interaction, sussmann, refined, intrinsic
// system: normal-form-3d, optimal-pair
struct SweepResult {
    std::string method, system;
    int M = 0;
    std::vector<ErrorReport> reports;
    OrderFit fit;
    bool fit_ok = false;
    std::string note;
    std::string to_csv() const;  // scale,error,slope_so_far
};
SweepResult order_sweep(const std::string& method, const std::string& system, int M,
                        const std::vector<double>& scales = {}, double tol = 1e-12);

}  // namespace flowexp
