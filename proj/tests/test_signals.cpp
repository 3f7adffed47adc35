#include "flowexp/signals.hpp"

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

}  // namespace

TEST(Poly1, Arithmetic)
{
    Poly1 p(std::vector<Rational>{1, 2, 3});
    EXPECT_EQ(p(R(2)), 17);
    EXPECT_EQ(p.derivative(), Poly1(std::vector<Rational>{2, 6}));
    EXPECT_EQ(p.antiderivative().derivative(), p);
    EXPECT_EQ((p - p).degree(), -1);
    EXPECT_EQ(Poly1::shifted_power(R(1), 2)(R(3)), 2);
    EXPECT_EQ(p.scaled_argument(R(1, 2))(R(2)), p(R(1)));
}

TEST(Control, Primitives)
{
    auto one = Control::constant(1, 2);
    EXPECT_EQ(one.primitive()(R(3, 2)), R(3, 2));
    auto lin = Control::from_poly(Poly1::monomial(1), 2);
    EXPECT_EQ(lin.primitive()(R(2)), 2);
    Control pm({0, 1, 2}, {Poly1::constant(1), Poly1::constant(-1)});
    EXPECT_EQ(pm.primitive()(R(2)), 0);
    EXPECT_EQ(pm.primitive()(R(1)), 1);
    EXPECT_EQ(pm(R(1)), -1);
    EXPECT_DOUBLE_EQ(pm(1.5), -1.0);
    EXPECT_EQ(pm.l1_norm_exact_pl(2), 2);
    EXPECT_THROW(pm(R(3)), std::out_of_range);
}

TEST(Control, WordIntegralIndicators)
{
    ControlTuple a{Control::indicator(1, 2, 2), Control::indicator(0, 1, 2)};
    EXPECT_EQ(iterated_word_integral(make_word({1, 0}), a, 2), 1);
    EXPECT_EQ(iterated_word_integral(make_word({0, 1}), a, 2), 0);
    EXPECT_EQ(iterated_word_integral(make_word({1, 1}), a, 2), R(1, 2));
}

TEST(Control, ShuffleAndGrouplike)
{
    std::mt19937 rng(4);
    ControlTuple a{random_pl_control(rng, R(1), 3), random_pl_control(rng, R(1), 2, 3, true)};
    Rational t = R(3, 4);
    // I_0 I_01 = I_001 * 2 + I_010
    Rational lhs = iterated_word_integral(make_word({0}), a, t) * iterated_word_integral(make_word({0, 1}), a, t);
    Rational rhs = 2 * iterated_word_integral(make_word({0, 0, 1}), a, t) +
                   iterated_word_integral(make_word({0, 1, 0}), a, t);
    EXPECT_EQ(lhs, rhs);
    NCSeries S = word_series(a, t, 4);
    EXPECT_TRUE(grouplike_check(S));
    EXPECT_EQ(S.coeff(make_word({1, 0})), iterated_word_integral(make_word({1, 0}), a, t));
}

TEST(Control, RecursionByDifferentiation)
{
    std::mt19937 rng(8);
    ControlTuple a{random_pl_control(rng, R(2), 4), random_pl_control(rng, R(2), 3)};
    Word w = make_word({0, 1, 1});
    Control I = iterated_word_function(w, a);
    Control J = iterated_word_function(make_word({0, 1}), a);
    Control d = I.derivative();
    Control e = J * a[1];
    for (int k = 0; k < 20; ++k) {
        Rational s = R(k, 10);
        EXPECT_EQ(d(s), e(s));
    }
}

TEST(Control, IteratedU)
{
    auto u = Control::constant(1, 3);
    EXPECT_EQ(iterated_U_integral({1, 1}, u, 2), R(16, 8));
    EXPECT_EQ(iterated_U_integral({2}, u, 3), 9);
}

TEST(Control, RescaleAndNorms)
{
    std::mt19937 rng(1);
    Control u = random_pl_control(rng, R(1), 5);
    Control v = u.time_rescale(R(1, 2));
    EXPECT_EQ(v.horizon(), 1);
    EXPECT_EQ(v(R(1, 10)), u(R(1, 5)));
    EXPECT_EQ(v(R(3, 4)), 0);
    EXPECT_EQ(v.l1_norm_exact_pl(1) * 2, u.l1_norm_exact_pl(1));
    // The quadrature path on a non-linear signal.
    Control sq = Control::from_poly(Poly1(std::vector<Rational>{R(-1, 4), 0, 1}), 1);
    EXPECT_NEAR(sq.l1_norm(), 0.25, 1e-12);
    EXPECT_NEAR(sq.linf_norm(), 0.75, 1e-12);
    // Majorant: |I_w(t)| <= prod ||a||_1^n / n!
    ControlTuple a{u, u * R(-1)};
    Rational I = iterated_word_integral(make_word({0, 1, 0}), a, 1);
    double L = u.l1_norm();
    EXPECT_LE(std::abs(I.get_d()), L * L * L / 6 + 1e-14);
}

TEST(Control, JsonRoundTrip)
{
    std::mt19937 rng(2);
    Control u = random_pl_control(rng, R(3, 2), 4);
    u.set_label("u");
    Control v = Control::from_json(u.to_json());
    EXPECT_EQ(v.label(), "u");
    EXPECT_EQ(v.breakpoints(), u.breakpoints());
    for (std::size_t i = 0; i < u.pieces().size(); ++i) EXPECT_EQ(v.pieces()[i], u.pieces()[i]);
}
