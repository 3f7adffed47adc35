#pragma once

#include "flowexp/fields.hpp"
#include "flowexp/signals.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace flowexp {

// Scalar input signal for the numerical solver. `inside` is a time strictly
// inside the current integration segment, so piecewise signals use the left
// limit at the end of a segment.
struct Channel {
    std::function<double(double t, double inside)> f;
    std::vector<double> breaks;

    static Channel from_control(const Control& u);
    static Channel smooth(std::function<double(double)> g);
    double operator()(double t) const { return f(t, t); }
};

struct OdeOptions {
    double tol = 1e-12;
    double max_step = 0;  // 0 means unlimited
    long max_steps = 20'000'000;
    std::vector<double> breaks;
};

struct OdeStats {
    long steps = 0;
    long rejected = 0;
    double max_error = 0;  // largest accepted local error estimate (absolute)
};

using OdeRhs = std::function<void(double t, double inside, const Eigen::VectorXd& y, Eigen::VectorXd& dy)>;

// Dormand-Prince 5(4) with mixed tolerance tol (1 + |y|) per component.
// Integrates from t0 to t1 (either direction); breakpoints are step boundaries.
Eigen::VectorXd integrate(const OdeRhs& rhs, const Eigen::VectorXd& y0, double t0, double t1, const OdeOptions& opt,
                          OdeStats* stats = nullptr);

// x' = f0(x) + sum_i u_i(t) f_i(x), x(0) = p.
struct OdeProblem {
    std::optional<VectorField> drift;
    std::vector<std::pair<Channel, VectorField>> inputs;
    Eigen::VectorXd p;
    double t = 1;
    double tol = 1e-12;
};

struct FlowResult {
    Eigen::VectorXd x;
    std::optional<Eigen::MatrixXd> jacobian;
    OdeStats stats;
    std::string to_json() const;
};

FlowResult solve_reference(const OdeProblem& prob, bool with_jacobian = false);
// Flow of a time-independent field for time t (default 1).
FlowResult autonomous_flow(const VectorField& g, const Eigen::VectorXd& p, double tol, double t = 1);
FlowResult flow_with_jacobian(const VectorField& g, const Eigen::VectorXd& p, double t, double tol);

// g_t(tau, y) = DPhi0(tau - t, y)^{-1} f1(Phi0(tau - t, y)), Phi0 the flow of f0.
Eigen::VectorXd pushforward_eval(const VectorField& f0, const VectorField& f1, double t, double tau,
                                 const Eigen::VectorXd& y, double tol);
// Same value together with its y-derivative, through the second variational equation.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> pushforward_eval_d(const VectorField& f0, const VectorField& f1, double t,
                                                               double tau, const Eigen::VectorXd& y, double tol);

using MatLD = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& A);
MatLD matrix_exp(const MatLD& A);
// sum_{k<K} ad^k_{H0}(H1)/k!
Eigen::MatrixXd matrix_ad_series(const Eigen::MatrixXd& H0, const Eigen::MatrixXd& H1, int K);

// Square matrix of scalar controls on a common horizon.
using MatrixControl = std::vector<std::vector<Control>>;
enum class MagnusMode { plain, interaction };

struct MatrixMagnus {
    std::vector<MatLD> terms;  // terms[r-1] is the homogeneous term of degree r
    std::vector<MatLD> dyson;  // dyson[n] for n = 0..R (dyson[0] = I)
    MatLD H0;                  // drift (zero in plain mode)
    long double t = 0;
    MatLD Z(int R) const;
    // exp(Z_R), multiplied on the right by e^{t H0} in interaction mode.
    MatLD propagator(int R) const;
};

// Homogeneous terms of the logarithm of the fundamental solution of
// Y' = A(t) Y, so that exp(Z_R) approximates Y(t). In interaction mode the
// system is Y' = (H0 + A(t)) Y and Y(t) is approximated by exp(Z_R) e^{t H0}.
MatrixMagnus matrix_magnus_terms(const MatrixControl& A, const Rational& t, int R, MagnusMode mode = MagnusMode::plain,
                                 const Eigen::MatrixXd& H0 = Eigen::MatrixXd());
Eigen::MatrixXd matrix_magnus(const MatrixControl& A, const Rational& t, int R, MagnusMode mode = MagnusMode::plain,
                              const Eigen::MatrixXd& H0 = Eigen::MatrixXd());

// Reference fundamental solutions: the Dyson series summed to order N and
// the adaptive solver.
MatLD fundamental_solution_dyson(const MatrixControl& A, const Rational& t, int N, MagnusMode mode = MagnusMode::plain,
                                 const Eigen::MatrixXd& H0 = Eigen::MatrixXd());
Eigen::MatrixXd fundamental_solution_oracle(const MatrixControl& A, double t, double tol,
                                            const Eigen::MatrixXd& H0 = Eigen::MatrixXd());

// L1 norm of t -> ||A(t)|| (operator 2-norm bounded by Frobenius) on [0, t].
double matrix_control_l1(const MatrixControl& A, const Rational& t);

}  // namespace flowexp
