#include "flowexp/freealg.hpp"
#include "flowexp/hall.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace flowexp;

namespace {

Word W(std::initializer_list<int> l) { return make_word(l); }

NCSeries random_series(std::mt19937& rng, int q, int N, bool unit_constant)
{
    std::uniform_int_distribution<int> coef(-4, 4), den(1, 3);
    NCSeries s(N);
    for (int n = 1; n <= N; ++n)
        for (const auto& w : word_enumerate(q, n))
            if (rng() % 3 == 0) s.add(w, Rational(coef(rng), den(rng)));
    if (unit_constant) s.add(Word(), 1);
    return s;
}

BracketPtr random_tree(std::mt19937& rng, int q, int len)
{
    if (len == 1) return make_leaf(static_cast<int>(rng() % q), q);
    int l = 1 + static_cast<int>(rng() % (len - 1));
    return make_bracket(random_tree(rng, q, l), random_tree(rng, q, len - l));
}

}  // namespace

TEST(Words, Enumerate)
{
    EXPECT_EQ(word_enumerate(2, 0), std::vector<Word>{Word()});
    EXPECT_EQ(word_enumerate(2, 1), (std::vector<Word>{W({0}), W({1})}));
    auto w2 = word_enumerate(2, 2);
    EXPECT_EQ(w2.size(), 4u);
    EXPECT_EQ(w2[1], W({0, 1}));
    EXPECT_EQ(word_enumerate(3, 4).size(), 81u);
}

TEST(Words, TextRoundTrip)
{
    Word w = make_word({0, 12, 3});
    EXPECT_EQ(word_to_text(w), "0(12)3");
    EXPECT_EQ(word_from_text("0(12)3"), w);
    EXPECT_EQ(word_to_text(Word()), "e");
}

TEST(NCSeries, MulBasics)
{
    const int N = 3;
    NCSeries x1 = NCSeries::letter(N, 1), x2 = NCSeries::letter(N, 2);
    NCSeries one = NCSeries::one(N);
    NCSeries s = x1 * Rational(3) + x2;
    EXPECT_EQ(nc_mul(one, s), s);
    NCSeries p = nc_mul(x1, x2);
    EXPECT_EQ(p.size(), 1u);
    EXPECT_EQ(p.coeff(W({1, 2})), 1);
    NCSeries sq = nc_pow(x1 + x2, 2);
    EXPECT_EQ(sq.coeff(W({1, 2})), 1);
    EXPECT_EQ(sq.coeff(W({1, 1})), 1);
}

TEST(NCSeries, TruncationIsEnforced)
{
    NCSeries a(2), b(3);
    EXPECT_THROW(nc_mul(a, b), std::invalid_argument);
    EXPECT_THROW(a.add(W({0, 0, 0}), 1), std::out_of_range);
    NCSeries x = NCSeries::letter(2, 0);
    EXPECT_TRUE(nc_pow(x, 3).empty());
}

TEST(NCSeries, ExpLog)
{
    const int N = 5;
    EXPECT_EQ(nc_exp(NCSeries(N)), NCSeries::one(N));
    NCSeries x1 = NCSeries::letter(N, 1), x2 = NCSeries::letter(N, 2);
    EXPECT_EQ(nc_log(nc_exp(x1)), x1);
    EXPECT_EQ(nc_exp(x1 + x2).coeff(W({1, 2})), Rational(1, 2));
    EXPECT_THROW(nc_exp(NCSeries::one(N)), std::invalid_argument);
    EXPECT_THROW(nc_log(x1), std::invalid_argument);

    std::mt19937 rng(7);
    for (int k = 0; k < 10; ++k) {
        NCSeries a = random_series(rng, 2, 4, false);
        EXPECT_EQ(nc_log(nc_exp(a)), a);
        NCSeries s = random_series(rng, 2, 4, true);
        if (s.constant() == 1) EXPECT_EQ(nc_exp(nc_log(s)), s);
    }
}

TEST(NCSeries, BchLowOrderFromExpLog)
{
    const int N = 3;
    NCSeries x = NCSeries::letter(N, 0), y = NCSeries::letter(N, 1);
    NCSeries z = nc_log(nc_mul(nc_exp(x), nc_exp(y)));
    NCSeries expect = x + y + nc_bracket(x, y) * Rational(1, 2) +
                      nc_bracket(x, nc_bracket(x, y)) * Rational(1, 12) +
                      nc_bracket(y, nc_bracket(y, x)) * Rational(1, 12);
    EXPECT_EQ(z, expect);
}

TEST(NCSeries, TextRoundTrip)
{
    std::mt19937 rng(3);
    NCSeries s = random_series(rng, 3, 3, true);
    EXPECT_EQ(NCSeries::from_text(s.to_text(), 3), s);
    NCSeries t = NCSeries::letter(2, 1, Rational(-3, 4));
    EXPECT_EQ(t.to_text(), "1=-3/4\n");
}

TEST(NCSeries, AssociativeAndDistributive)
{
    std::mt19937 rng(11);
    for (int k = 0; k < 20; ++k) {
        NCSeries a = random_series(rng, 2, 4, true), b = random_series(rng, 2, 4, false),
                 c = random_series(rng, 2, 4, true);
        EXPECT_EQ(nc_mul(nc_mul(a, b), c), nc_mul(a, nc_mul(b, c)));
        EXPECT_EQ(nc_mul(a, b + c), nc_mul(a, b) + nc_mul(a, c));
        EXPECT_EQ(nc_mul(a + b, c), nc_mul(a, c) + nc_mul(b, c));
    }
}

TEST(Dynkin, WorkedExample)
{
    const int N = 2;
    NCSeries x12 = NCSeries::monomial(N, W({1, 2}));
    NCSeries x21 = NCSeries::monomial(N, W({2, 1}));
    EXPECT_EQ(dynkin_beta(x12), x12 - x21);
    EXPECT_EQ(dynkin_beta(x12 - x21), (x12 - x21) * Rational(2));
    EXPECT_EQ(dynkin_beta(NCSeries::letter(N, 1)), NCSeries::letter(N, 1));
}

TEST(Dynkin, LieTest)
{
    const int N = 2;
    NCSeries x12 = NCSeries::monomial(N, W({1, 2}));
    NCSeries x21 = NCSeries::monomial(N, W({2, 1}));
    EXPECT_FALSE(is_lie_element(x12, true));
    EXPECT_TRUE(is_lie_element(x12 - x21, true));
    EXPECT_TRUE(is_lie_element(NCSeries(N), true));
}

TEST(Dynkin, RandomBracketTreesAreEigenvectors)
{
    std::mt19937 rng(5);
    for (int k = 0; k < 40; ++k) {
        int n = 1 + static_cast<int>(rng() % 6);
        auto t = random_tree(rng, 3, n);
        NCSeries a = expand_to_words(*t, 6);
        EXPECT_EQ(dynkin_beta(a), a * Rational(n));
        EXPECT_TRUE(is_lie_element(a, true));
    }
}

TEST(Friedrichs, GrouplikeMatchesLogIsLie)
{
    const int N = 4;
    EXPECT_TRUE(grouplike_check(nc_exp(NCSeries::letter(N, 1))));
    NCSeries s = NCSeries::one(N) + NCSeries::monomial(N, W({1, 2}));
    EXPECT_FALSE(grouplike_check(s));

    std::mt19937 rng(19);
    int agree = 0;
    for (int k = 0; k < 100; ++k) {
        NCSeries r = random_series(rng, 2, 3, false);
        // Half the samples are exponentials of Lie elements.
        if (k % 2 == 0) {
            NCSeries lie(3);
            for (int j = 0; j < 3; ++j) {
                auto t = random_tree(rng, 2, 1 + static_cast<int>(rng() % 3));
                lie += expand_to_words(*t, 3) * Rational(static_cast<int>(rng() % 5) - 2, 3);
            }
            r = lie;
        }
        NCSeries g = nc_exp(r);
        bool gl = grouplike_check(g);
        bool lie = is_lie_element(nc_log(g), true);
        EXPECT_EQ(gl, lie);
        if (k % 2 == 0) EXPECT_TRUE(gl);
        agree += gl == lie;
    }
    EXPECT_EQ(agree, 100);
}

TEST(Substitute, MorphismOnProducts)
{
    const int N = 4;
    std::mt19937 rng(2);
    std::vector<NCSeries> images{NCSeries::letter(N, 0) + NCSeries::monomial(N, W({0, 1})),
                                 nc_bracket(NCSeries::letter(N, 0), NCSeries::letter(N, 1))};
    NCSeries a = random_series(rng, 2, 2, true), b = random_series(rng, 2, 2, false);
    NCSeries a4 = a.retruncated(N), b4 = b.retruncated(N);
    EXPECT_EQ(nc_substitute(nc_mul(a4, b4), images, N),
              nc_mul(nc_substitute(a4, images, N), nc_substitute(b4, images, N)));
}
