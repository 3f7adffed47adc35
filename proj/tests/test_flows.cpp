#include "flowexp/flows.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace flowexp;

namespace {

Rational R(long p, long q = 1)
{
    Rational r(p, q);
    r.canonicalize();
    return r;
}

Eigen::VectorXd vec(std::initializer_list<double> v)
{
    Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
    int i = 0;
    for (double a : v) x[i++] = a;
    return x;
}

MatrixControl random_matrix_control(std::mt19937& rng, int d, const Rational& T, int K, const Rational& scale)
{
    MatrixControl A(d, std::vector<Control>(d));
    for (auto& row : A)
        for (auto& c : row) c = random_pl_control(rng, T, K) * scale;
    return A;
}

}  // namespace

TEST(Integrator, TrivialAndLinear)
{
    OdeOptions opt;
    OdeRhs zero = [](double, double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy.setZero(y.size()); };
    auto p = vec({1, -2});
    EXPECT_EQ(integrate(zero, p, 0, 3, opt), p);

    Eigen::MatrixXd A(2, 2);
    A << 0.1, -1.3, 0.7, -0.2;
    OdeRhs lin = [&](double, double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) { dy = A * y; };
    for (double t : {1.0, -0.8}) {
        Eigen::VectorXd y = integrate(lin, p, 0, t, opt);
        Eigen::VectorXd e = matrix_exp(Eigen::MatrixXd(A * t)) * p;
        EXPECT_LT((y - e).norm(), 1e-11) << t;
    }
}

TEST(Integrator, FifthOrderConvergence)
{
    // With a fixed step cap and a loose tolerance the global error scales like h^5.
    OdeRhs rhs = [](double t, double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        dy.resize(1);
        dy[0] = std::cos(t) * y[0];
    };
    auto run = [&](double h) {
        OdeOptions o;
        o.tol = 1;
        o.max_step = h;
        return std::abs(integrate(rhs, vec({1}), 0, 2, o)[0] - std::exp(std::sin(2.0)));
    };
    double e1 = run(0.1), e2 = run(0.05);
    double slope = std::log2(e1 / e2);
    EXPECT_GT(slope, 4.5);
    EXPECT_LT(slope, 5.6);
}

TEST(Integrator, BreakpointsUseLeftLimits)
{
    // u = 1 on [0,1), 2 on [1,2]: x' = u gives x(2) = 3 exactly.
    Control u({R(0), R(1), R(2)}, {Poly1::constant(1), Poly1::constant(2)});
    Channel ch = Channel::from_control(u);
    OdeProblem prob;
    prob.inputs.push_back({ch, constant_field(1, 0)});
    prob.p = vec({0});
    prob.t = 2;
    auto r = solve_reference(prob);
    EXPECT_NEAR(r.x[0], 3, 1e-13);
    EXPECT_DOUBLE_EQ(ch.f(1.0, 0.5), 1);
    EXPECT_DOUBLE_EQ(ch.f(1.0, 1.5), 2);
    EXPECT_DOUBLE_EQ(Channel::smooth([](double s) { return s * s; })(3), 9);
}

TEST(Flows, EquilibriumAndConstantField)
{
    auto F = cubic_drift_system();
    auto r = autonomous_flow(F[0], vec({0, 0.5, -1}), 1e-12);
    EXPECT_LT((r.x - vec({0, 0.5, -1})).norm(), 1e-15);
    auto g = constant_field(3, 1, R(3, 2));
    EXPECT_LT((autonomous_flow(g, vec({1, 1, 1}), 1e-12).x - vec({1, 2.5, 1})).norm(), 1e-13);
}

TEST(Flows, JacobianMatchesDifferences)
{
    std::vector<std::vector<Rational>> A{{R(1, 5), R(-1)}, {R(1, 2), R(0)}};
    auto lin = flow_with_jacobian(linear_field(A), vec({0.3, 0.1}), 1.5, 1e-12);
    Eigen::MatrixXd Ad(2, 2);
    Ad << 0.2, -1, 0.5, 0;
    EXPECT_LT((*lin.jacobian - matrix_exp(Eigen::MatrixXd(1.5 * Ad))).norm(), 1e-10);

    auto F = divergent_pair();
    VectorField g = F[0] + F[1] * R(1, 2);
    auto p = vec({0.1, 0.2});
    auto r = flow_with_jacobian(g, p, 0.7, 1e-13);
    const double h = 1e-6;
    for (int j = 0; j < 2; ++j) {
        Eigen::VectorXd dp = Eigen::VectorXd::Zero(2);
        dp[j] = h;
        Eigen::VectorXd col =
            (autonomous_flow(g, p + dp, 1e-13, 0.7).x - autonomous_flow(g, p - dp, 1e-13, 0.7).x) / (2 * h);
        EXPECT_LT((col - r.jacobian->col(j)).norm(), 1e-6);
    }
    EXPECT_TRUE(flow_with_jacobian(g, p, 0, 1e-12).jacobian->isIdentity());
    EXPECT_NE(r.to_json().find("jacobian"), std::string::npos);
}

TEST(Flows, InputSystemComposition)
{
    // Running [0,1] then [1,2] equals running [0,2] once.
    std::mt19937 rng(11);
    Control u = random_pl_control(rng, R(2), 4);
    auto F = cubic_drift_system();
    OdeProblem full;
    full.drift = F[0];
    full.inputs.push_back({Channel::from_control(u), F[1]});
    full.p = vec({0.1, 0, 0});
    full.t = 2;
    auto a = solve_reference(full);

    OdeOptions opt;
    FieldEval f0(F[0]), f1(F[1]);
    Channel ch = Channel::from_control(u);
    opt.breaks = ch.breaks;
    OdeRhs rhs = [&](double t, double in, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        dy = f0.value(y) + ch.f(t, in) * f1.value(y);
    };
    Eigen::VectorXd mid = integrate(rhs, full.p, 0, 1, opt);
    Eigen::VectorXd end = integrate(rhs, mid, 1, 2, opt);
    EXPECT_LT((end - a.x).norm(), 1e-10);
    // and back again
    EXPECT_LT((integrate(rhs, end, 2, 0, opt) - full.p).norm(), 1e-9);
}

TEST(Pushforward, TrivialCases)
{
    auto F = optimal_pair();
    auto y = vec({0.2, 0.4});
    EXPECT_LT((pushforward_eval(F[0], F[1], 0.5, 0.5, y, 1e-12) - FieldEval(F[1]).value(y)).norm(), 1e-15);
    // f0 = e1 commutes with e1: the pushforward is f1 itself.
    EXPECT_LT((pushforward_eval(F[0], F[0], 0, 0.7, y, 1e-12) - vec({1, 0})).norm(), 1e-12);
}

TEST(Pushforward, AdSeries)
{
    // For the optimal pair, Phi0 is a translation in x1 and
    // g(tau, y) = f1(y1 + s, y2) with s = tau - t, = sum_k s^k/k! ad^k f1 (y).
    auto F = optimal_pair();
    auto y = vec({0.1, -0.3});
    const double s = 0.25;
    Eigen::VectorXd g = pushforward_eval(F[0], F[1], 0, s, y, 1e-13);
    EXPECT_NEAR(g[1], 1 / (1 - 0.1 - s), 1e-11);
    Eigen::VectorXd series = Eigen::VectorXd::Zero(2);
    VectorField ad = F[1];
    double f = 1;
    for (int k = 0; k < 40; ++k) {
        if (k > 0) {
            ad = lie_bracket(F[0], ad);
            f *= k;
        }
        series += std::pow(s, k) / f * FieldEval(ad).value(y);
    }
    EXPECT_LT((series - g).norm(), 1e-10);

    // Linear fields: pushforward of B x under e^{A s} is e^{-As} B e^{As} x.
    std::vector<std::vector<Rational>> A{{R(0), R(1)}, {R(-1), R(0)}}, B{{R(1), R(0)}, {R(0), R(-1)}};
    Eigen::MatrixXd Ad(2, 2), Bd(2, 2);
    Ad << 0, 1, -1, 0;
    Bd << 1, 0, 0, -1;
    Eigen::VectorXd gl = pushforward_eval(linear_field(A), linear_field(B), 0, s, y, 1e-13);
    Eigen::MatrixXd E = matrix_exp(Eigen::MatrixXd(Ad * s));
    EXPECT_LT((gl - E.inverse() * Bd * E * y).norm(), 1e-11);
    // and the truncated ad-series for matrices, in the opposite sign convention
    Eigen::MatrixXd M = matrix_ad_series(Eigen::MatrixXd(-s * Ad), Bd, 30);
    EXPECT_LT((M - E.inverse() * Bd * E).norm(), 1e-13);
}

TEST(Pushforward, DerivativeMatchesDifferences)
{
    auto F = divergent_pair();
    auto y = vec({0.15, 0.3});
    auto [g, Dg] = pushforward_eval_d(F[0], F[1], 0.2, 0.6, y, 1e-13);
    EXPECT_LT((g - pushforward_eval(F[0], F[1], 0.2, 0.6, y, 1e-13)).norm(), 1e-11);
    const double h = 1e-5;
    for (int k = 0; k < 2; ++k) {
        Eigen::VectorXd dy = Eigen::VectorXd::Zero(2);
        dy[k] = h;
        Eigen::VectorXd col = (pushforward_eval(F[0], F[1], 0.2, 0.6, y + dy, 1e-13) -
                               pushforward_eval(F[0], F[1], 0.2, 0.6, y - dy, 1e-13)) /
                              (2 * h);
        EXPECT_LT((col - Dg.col(k)).norm(), 1e-6);
    }
}

TEST(MatrixExp, NilpotentAndLongDouble)
{
    Eigen::MatrixXd N = Eigen::MatrixXd::Zero(3, 3);
    N(0, 1) = 2;
    N(1, 2) = 3;
    Eigen::MatrixXd E = Eigen::MatrixXd::Identity(3, 3) + N + N * N / 2;
    EXPECT_LT((matrix_exp(N) - E).norm(), 1e-14);
    MatLD L = N.cast<long double>();
    EXPECT_LT(static_cast<double>((matrix_exp(L) - E.cast<long double>()).norm()), 1e-14);
}

TEST(MatrixMagnus, ConstantGenerator)
{
    MatrixControl A(2, std::vector<Control>(2));
    Rational vals[2][2] = {{R(1, 3), R(-1, 2)}, {R(1, 4), R(0)}};
    Eigen::MatrixXd Ad(2, 2);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            A[i][j] = Control::constant(vals[i][j], R(2));
            Ad(i, j) = vals[i][j].get_d();
        }
    auto M = matrix_magnus_terms(A, R(3, 2), 6);
    EXPECT_LT(static_cast<double>((M.terms[0] - (1.5L * Ad.cast<long double>())).norm()), 1e-16);
    for (int r = 1; r < 6; ++r) EXPECT_LT(static_cast<double>(M.terms[r].norm()), 1e-15) << r;
    EXPECT_NEAR(matrix_control_l1(A, R(3, 2)), 1.5 * Ad.norm(), 1e-12);
}

TEST(MatrixMagnus, ConvergesToOracle)
{
    std::mt19937 rng(21);
    for (int trial = 0; trial < 3; ++trial) {
        auto A = random_matrix_control(rng, 3, R(1), 3, R(1, 40));
        double l1 = matrix_control_l1(A, R(1));
        ASSERT_LT(l1, 0.3);
        Eigen::MatrixXd Y = fundamental_solution_oracle(A, 1.0, 1e-14);
        MatLD Yd = fundamental_solution_dyson(A, R(1), 25);
        EXPECT_LT((Yd.cast<double>() - Y).norm(), 1e-12);
        auto M = matrix_magnus_terms(A, R(1), 10);
        double prev = 1e9;
        for (int r = 2; r <= 10; ++r) {
            double e = static_cast<double>((M.propagator(r) - Yd).norm());
            if (r >= 4 && prev > 1e-17) EXPECT_LE(e, prev * 1.0001) << r;
            prev = e;
        }
        EXPECT_LT(prev, 1e-12);
    }
}

TEST(MatrixMagnus, InteractionPicture)
{
    std::mt19937 rng(5);
    Eigen::MatrixXd H0(2, 2);
    H0 << 0, 1, -1, 0.1;
    auto A = random_matrix_control(rng, 2, R(1), 2, R(1, 20));
    Eigen::MatrixXd Y = fundamental_solution_oracle(A, 1.0, 1e-14, H0);
    MatLD Yd = fundamental_solution_dyson(A, R(1), 25, MagnusMode::interaction, H0);
    EXPECT_LT((Yd.cast<double>() - Y).norm(), 1e-11);
    auto M = matrix_magnus_terms(A, R(1), 8, MagnusMode::interaction, H0);
    EXPECT_LT((M.propagator(8).cast<double>() - Y).norm(), 1e-11);
    EXPECT_GT((M.propagator(1).cast<double>() - Y).norm(), 1e-8);
}

TEST(MatrixMagnus, AgreesWithExactWordRoute)
{
    // A(t) = a0(t) M0 + a1(t) M1. Y' = A Y has latest factor leftmost, so the
    // word w contributes M_{w_n} ... M_{w_1}.
    std::mt19937 rng(9);
    ControlTuple a{random_pl_control(rng, R(1), 2), random_pl_control(rng, R(1), 2)};
    Eigen::MatrixXd M0(2, 2), M1(2, 2);
    M0 << 0.3, -0.2, 0.5, 0.1;
    M1 << -0.4, 0.25, 0.0, 0.2;
    const int N = 5;
    NCSeries Z = nc_log(word_series(a, R(1), N));
    auto image = [&](const Word& w) {
        Eigen::MatrixXd P = Eigen::MatrixXd::Identity(2, 2);
        for (char c : w) P = (c == 0 ? M0 : M1) * P;
        return P;
    };
    MatrixControl A(2, std::vector<Control>(2));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            A[i][j] = a[0] * Rational(M0(i, j)) + a[1] * Rational(M1(i, j));
        }
    auto mm = matrix_magnus_terms(A, R(1), N);
    for (int r = 1; r <= N; ++r) {
        Eigen::MatrixXd zr = Eigen::MatrixXd::Zero(2, 2);
        NCSeries zh = Z.homogeneous(r);
        for (const auto& [w, c] : zh.terms()) zr += c.get_d() * image(w);
        EXPECT_LT((zr - mm.terms[r - 1].cast<double>()).norm(), 1e-14 * (1 + zr.norm())) << r;
    }
}

TEST(MatrixMagnus, RejectsBadInput)
{
    MatrixControl A(2, std::vector<Control>(1, Control::constant(1, R(1))));
    EXPECT_THROW(matrix_magnus(A, R(1), 2), std::invalid_argument);
    MatrixControl B(1, std::vector<Control>(1, Control::constant(1, R(1))));
    EXPECT_THROW(matrix_magnus(B, R(2), 2), std::out_of_range);
    EXPECT_THROW(matrix_magnus(B, R(1), 0), std::invalid_argument);
}
