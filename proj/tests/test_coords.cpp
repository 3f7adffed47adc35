#include "flowexp/coords.hpp"

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

Rational fact(int n)
{
    Rational f = 1;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

std::string ad_key(int k)
{
    std::string s = "1";
    for (int i = 0; i < k; ++i) s = "[0," + s + "]";
    return s;
}

ControlTuple random_tuple(std::mt19937& rng, int q, const Rational& T, int K)
{
    ControlTuple a;
    for (int i = 0; i < q; ++i) a.push_back(random_pl_control(rng, T, K));
    return a;
}

}  // namespace

TEST(Bernoulli, Values)
{
    EXPECT_EQ(bernoulli(0), 1);
    EXPECT_EQ(bernoulli(1), R(-1, 2));
    EXPECT_EQ(bernoulli(2), R(1, 6));
    EXPECT_EQ(bernoulli(3), 0);
    EXPECT_EQ(bernoulli(4), R(-1, 30));
    EXPECT_EQ(bernoulli(12), R(-691, 2730));
    auto B = bernoulli_table(30);
    for (int n = 1; n <= 14; ++n) EXPECT_EQ(B[2 * n + 1], 0);
    for (int n = 2; n <= 30; ++n) {
        Rational s = 0, c = 1;
        for (int k = 0; k < n; ++k) {
            s += c * B[k];
            c = c * (n - k) / (k + 1);
        }
        EXPECT_EQ(s, 0) << n;
    }
}

TEST(FirstKind, ExpLogConsistency)
{
    std::mt19937 rng(21);
    auto B = build_hall_basis(2, 6);
    for (int trial = 0; trial < 3; ++trial) {
        ControlTuple a = random_tuple(rng, 2, 1, 3);
        for (int M : {3, 6}) {
            auto T = coord_first_kind(B, a, R(3, 4), M);
            NCSeries Z(M);
            for (const auto& e : T.entries) Z += B.expansion(e.index).retruncated(M) * e.value;
            EXPECT_EQ(nc_exp(Z), word_series(a, R(3, 4), M));
        }
        auto T = coord_first_kind(B, a, 1, 4);
        EXPECT_EQ(T.value("0"), a[0].integral(1));
    }
}

TEST(FirstKind, DriftAndRamp)
{
    auto B = build_hall_basis(2, 5);
    Rational t = R(3, 2);
    ControlTuple a{Control::constant(1, 2), Control::from_poly(Poly1::monomial(1), 2)};
    auto T = coord_first_kind(B, a, t, 5);
    EXPECT_EQ(T.value("1"), t * t / 2);
    EXPECT_EQ(T.value("[0,1]"), t * t * t / 12);
    for (int k = 0; k <= 3; ++k) {
        Rational tp = 1;
        for (int i = 0; i < k + 2; ++i) tp *= t;
        Rational expect = (k % 2 == 0 ? -1 : 1) * tp * bernoulli(k + 1) / fact(k + 1);
        EXPECT_EQ(T.value(ad_key(k)), expect) << k;
    }
}

TEST(FirstKind, BernoulliClosedForm)
{
    std::mt19937 rng(9);
    auto B = build_hall_basis(2, 6);
    for (int trial = 0; trial < 2; ++trial) {
        ControlTuple a = random_tuple(rng, 2, 1, 3);
        Rational t = R(5, 6);
        auto T = coord_first_kind(B, a, t, 6);
        for (int k = 0; k <= 5; ++k) EXPECT_EQ(T.value(ad_key(k)), first_kind_ad_closed_form(k, a[0], a[1], t)) << k;
    }
}

TEST(Cbhd, TwoArguments)
{
    auto B = build_hall_basis(2, 4);
    auto T = cbhd_coeffs(2, B, 4);
    EXPECT_EQ(T.value("0"), 1);
    EXPECT_EQ(T.value("1"), 1);
    EXPECT_EQ(T.value("[0,1]"), R(1, 2));
    EXPECT_EQ(T.value("[0,[0,1]]"), R(1, 12));
    EXPECT_EQ(T.value("[1,[0,1]]"), R(-1, 12));
    EXPECT_EQ(T.value("[1,[0,[0,1]]]"), R(-1, 24));
    EXPECT_EQ(T.value("[0,[0,[0,1]]]"), 0);
    EXPECT_EQ(T.value("[1,[1,[0,1]]]"), 0);
    // The (1,2) piece in the other common form.
    NCSeries y1 = NCSeries::letter(4, 0), y2 = NCSeries::letter(4, 1);
    EXPECT_EQ(cbhd_piece(T, B, {1, 2}, 4), nc_bracket(y2, nc_bracket(y2, y1)) * R(1, 12));
}

TEST(Cbhd, BernoulliInDriftOrder)
{
    // log(e^{X1} e^{X0}): X1 acts first.
    auto B = build_hall_basis(2, 7);
    ControlTuple a{Control::indicator(1, 2, 2), Control::indicator(0, 1, 2)};
    auto T = coord_first_kind(B, a, 2, 7);
    for (int k = 0; k <= 6; ++k) EXPECT_EQ(T.value(ad_key(k)), bernoulli(k) / fact(k)) << k;
}

TEST(Cbhd, ThreeArgumentRecursion)
{
    // Every piece of CBHD(y1,y2,y3) is recovered from the two-argument
    // pieces applied to CBHD(y1,y2) and y3, summed over the splittings of
    // the first slot.
    const int D = 4;
    auto B2 = build_hall_basis(2, D), B3 = build_hall_basis(3, D);
    auto T2 = cbhd_coeffs(2, B2, D), T3 = cbhd_coeffs(3, B3, D);
    NCSeries Z12(D);
    for (const auto& e : T2.entries) Z12 += B2.expansion(e.index) * e.value;
    std::vector<NCSeries> img{Z12.retruncated(D), NCSeries::letter(D, 2)};
    // Z12 in letters 0,1 is already in the three-letter alphabet.
    NCSeries lhs(D);
    for (const auto& e : T2.entries) lhs += nc_substitute(B2.expansion(e.index), img, D) * e.value;
    NCSeries full(D);
    for (const auto& e : T3.entries) full += B3.expansion(e.index) * e.value;
    EXPECT_EQ(lhs, full);
    for (int h1 = 0; h1 <= 2; ++h1)
        for (int h2 = 0; h2 <= 2; ++h2)
            for (int h3 = 0; h3 <= 2; ++h3) {
                if (h1 + h2 + h3 == 0 || h1 + h2 + h3 > D) continue;
                auto piece = cbhd_piece(T3, B3, {h1, h2, h3}, D);
                auto ref = lhs.filtered([&](const Word& w) {
                    return count_letter(w, 0) == h1 && count_letter(w, 1) == h2 && count_letter(w, 2) == h3;
                });
                EXPECT_EQ(piece, ref);
            }
}

TEST(SecondKind, FormalProduct)
{
    std::mt19937 rng(3);
    for (int q : {2, 3}) {
        int M = q == 2 ? 5 : 4;
        auto B = build_hall_basis(q, M);
        ControlTuple a = random_tuple(rng, q, 1, 2);
        Rational t = R(7, 8);
        auto T = coord_second_kind(B, a, t);
        NCSeries P = NCSeries::one(M);
        for (auto it = T.entries.rbegin(); it != T.entries.rend(); ++it)
            P = nc_mul(P, nc_exp(B.expansion(it->index) * it->value));
        EXPECT_EQ(P, word_series(a, t, M)) << q;
    }
}

TEST(SecondKind, ConstantInputs)
{
    auto B = build_hall_basis(2, 5);
    Rational T = 2;
    ControlTuple a{Control::constant(1, T), Control::constant(1, T)};
    auto F = coord_second_kind_functions(B, a);
    std::vector<Rational> alpha(B.size());
    for (std::size_t i = 0; i < B.size(); ++i) {
        if (B[i]->is_leaf()) {
            alpha[i] = 1;
        } else {
            auto f = ad_factorize(B[i]);
            int i1 = B.find(*f.b1), i2 = B.find(*f.b2);
            Rational p = 1;
            for (int j = 0; j < f.m; ++j) p *= alpha[i1] * f.b1->length;
            alpha[i] = p * fact(f.m) * alpha[i2];
        }
        Rational t = R(3, 2), tp = 1;
        for (int j = 0; j < B[i]->length; ++j) tp *= t;
        EXPECT_EQ(F.xi[i](t), tp / (alpha[i] * B[i]->length)) << B[i]->key;
    }
    auto Tab = coord_second_kind(B, a, 1);
    EXPECT_EQ(Tab.value("[0,1]"), R(1, 2));
    auto rep = coord_bound_audit(Tab, a);
    EXPECT_TRUE(rep.ok) << rep.summary();
    auto zero = coord_bound_audit(coord_second_kind(B, a, 0), a);
    EXPECT_TRUE(zero.ok);
}

TEST(SecondKind, BoundAuditRandom)
{
    std::mt19937 rng(12);
    auto B = build_hall_basis(2, 6, OrderPolicy::custom, {1, 0});
    for (int trial = 0; trial < 4; ++trial) {
        ControlTuple a{Control::constant(1, 1), random_pl_control(rng, R(1), 3)};
        auto T = coord_second_kind(B, a, R(3, 4));
        auto rep = coord_bound_audit(T, a, 0);
        EXPECT_TRUE(rep.ok) << rep.summary();
        EXPECT_FALSE(rep.drift_c.empty());
        EXPECT_FALSE(rep.x1_min_c.empty());
        for (const auto& [k, c] : rep.x1_min_c) EXPECT_TRUE(std::isfinite(c));
    }
}

TEST(PseudoFirst, Examples)
{
    auto B = build_hall_basis(2, 6);
    Rational t = R(5, 4);
    ControlTuple u{Control::constant(1, 2)};
    auto T = coord_pseudo_first_kind(B, u, t, 3, 3);
    EXPECT_EQ(T.value("0"), 0);
    EXPECT_EQ(T.value("1"), t);
    EXPECT_EQ(T.value("[0,1]"), -t * t / 2);
    for (const auto& e : T.entries) {
        EXPECT_LE(e.b->count(0), 3);
        EXPECT_LE(e.b->length - e.b->count(0), 3);
    }
}

TEST(PseudoFirst, InteractionFactorization)
{
    // word series of (1, u) = e^{t X0} e^{sum eta_b b} on the kept multidegrees
    std::mt19937 rng(6);
    const int M = 2, N0 = 3, D = M + N0;
    auto B = build_hall_basis(2, D);
    auto keep = [&](const Word& w) { return count_letter(w, 0) <= N0 && count_letter(w, 1) <= M; };
    for (int trial = 0; trial < 2; ++trial) {
        ControlTuple u{random_pl_control(rng, R(1), 2)};
        Rational t = R(2, 3);
        auto T = coord_pseudo_first_kind(B, u, t, M, N0);
        NCSeries Z(D);
        for (const auto& e : T.entries) Z += B.expansion(e.index) * e.value;
        NCSeries lhs = nc_mul(nc_exp(NCSeries::letter(D, 0, t)), nc_exp(Z)).filtered(keep);
        ControlTuple a{Control::constant(1, 1), u[0]};
        EXPECT_EQ(lhs, word_series(a, t, D).filtered(keep));
    }
}

TEST(PseudoFirst, BoundConstantIsFinite)
{
    std::mt19937 rng(15);
    auto B = build_hall_basis(2, 9);
    ControlTuple u{random_pl_control(rng, R(1), 2)};
    auto T = coord_pseudo_first_kind(B, u, 1, 3, 6);
    double C = pseudo_first_bound_constant(T, u);
    EXPECT_TRUE(std::isfinite(C));
    EXPECT_GT(C, 0);
}

TEST(Coords, TimeHomogeneity)
{
    std::mt19937 rng(27);
    Rational lam = R(1, 2), t = 1;
    auto B = build_hall_basis(2, 5);
    ControlTuple a = random_tuple(rng, 2, 1, 2);
    ControlTuple al{a[0].time_rescale(lam), a[1].time_rescale(lam)};
    auto scale = [&](int n) {
        Rational p = 1;
        for (int i = 0; i < n; ++i) p *= lam;
        return p;
    };
    auto Z = coord_first_kind(B, a, t, 5), Zl = coord_first_kind(B, al, lam * t, 5);
    auto X = coord_second_kind(B, a, t), Xl = coord_second_kind(B, al, lam * t);
    for (std::size_t i = 0; i < Z.entries.size(); ++i)
        EXPECT_EQ(Zl.entries[i].value, Z.entries[i].value * scale(Z.entries[i].b->length));
    for (std::size_t i = 0; i < X.entries.size(); ++i)
        EXPECT_EQ(Xl.entries[i].value, X.entries[i].value * scale(X.entries[i].b->length));
    ControlTuple u{a[1]}, ul{al[1]};
    auto E = coord_pseudo_first_kind(B, u, t, 2, 3), El = coord_pseudo_first_kind(B, ul, lam * t, 2, 3);
    ASSERT_EQ(E.entries.size(), El.entries.size());
    for (std::size_t i = 0; i < E.entries.size(); ++i)
        EXPECT_EQ(El.entries[i].value, E.entries[i].value * scale(E.entries[i].b->length));
}

TEST(Coords, CsvExport)
{
    auto B = build_hall_basis(2, 3);
    auto T = cbhd_coeffs(2, B, 3);
    std::string csv = T.to_csv({"X0", "X1"});
    EXPECT_NE(csv.find("\"[X0,X1]\",2,1,1,1/2,0.5"), std::string::npos);
}
