#include "flowexp/hall.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace flowexp;

namespace {

BracketPtr random_tree(std::mt19937& rng, int q, int len)
{
    if (len == 1) return make_leaf(static_cast<int>(rng() % q), q);
    int l = 1 + static_cast<int>(rng() % (len - 1));
    return make_bracket(random_tree(rng, q, l), random_tree(rng, q, len - l));
}

}  // namespace

TEST(HallBasis, TwoLettersUpToFour)
{
    // Letters 0 and 1 stand for X1 and X2.
    auto B = build_hall_basis(2, 4);
    ASSERT_EQ(B.size(), 8u);
    std::vector<std::string> expect{"0",           "1",           "[0,1]",           "[0,[0,1]]",
                                    "[1,[0,1]]",   "[0,[0,[0,1]]]", "[1,[0,[0,1]]]", "[1,[1,[0,1]]]"};
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(B[i]->key, expect[i]);
    std::vector<int> per_len(5, 0);
    for (const auto& b : B.elements()) ++per_len[b->length];
    EXPECT_EQ(per_len, (std::vector<int>{0, 2, 1, 2, 3}));
}

TEST(HallBasis, SingleLetter)
{
    auto B = build_hall_basis(1, 6);
    EXPECT_EQ(B.size(), 1u);
}

TEST(HallBasis, WittDimensionsAndAudit)
{
    auto B = build_hall_basis(2, 6);
    for (int n = 1; n <= 6; ++n) {
        long count = 0;
        for (const auto& b : B.elements()) count += b->length == n;
        EXPECT_EQ(count, witt_dimension(2, n)) << n;
        EXPECT_EQ(expansion_rank(B, n), witt_dimension(2, n)) << n;
    }
    std::string why;
    EXPECT_TRUE(hall_conditions_hold(B, &why)) << why;
    auto B3 = build_hall_basis(3, 4);
    EXPECT_TRUE(hall_conditions_hold(B3, &why)) << why;
    for (int n = 1; n <= 4; ++n) EXPECT_EQ(expansion_rank(B3, n), witt_dimension(3, n));
}

TEST(HallBasis, CustomOrderAndFilter)
{
    auto B = build_hall_basis(2, 7, OrderPolicy::custom, {1, 0});
    EXPECT_EQ(B[0]->key, "1");
    EXPECT_EQ(B[2]->key, "[1,0]");
    std::string why;
    EXPECT_TRUE(hall_conditions_hold(B, &why)) << why;

    auto F = build_hall_basis(2, 10, OrderPolicy::length_then_lex, {},
                              [](const std::vector<int>& c) { return c[1] <= 2 && c[0] <= 6; });
    EXPECT_TRUE(hall_conditions_hold(F, &why)) << why;
    for (const auto& b : F.elements()) {
        EXPECT_LE(b->count(1), 2);
        EXPECT_LE(b->count(0), 6);
    }
    // n1 = 1 part is exactly ad^k_{X0}(X1).
    int n1 = 0;
    for (const auto& b : F.elements()) n1 += b->count(1) == 1;
    EXPECT_EQ(n1, 7);
}

TEST(Expand, Examples)
{
    auto x1 = make_leaf(0, 2), x2 = make_leaf(1, 2);
    auto e = expand_to_words(*make_bracket(x1, x2), 3);
    EXPECT_EQ(e.coeff(make_word({0, 1})), 1);
    EXPECT_EQ(e.coeff(make_word({1, 0})), -1);
    EXPECT_TRUE(expand_to_words(*make_bracket(x1, x1), 3).empty());
    auto ad2 = expand_to_words(*make_ad(x1, 2, x2), 3);
    EXPECT_EQ(ad2.size(), 3u);
    EXPECT_EQ(ad2.coeff(make_word({0, 0, 1})), 1);
    EXPECT_EQ(ad2.coeff(make_word({0, 1, 0})), -2);
    EXPECT_EQ(ad2.coeff(make_word({1, 0, 0})), 1);
}

TEST(Decompose, WorkedExample)
{
    auto B = build_hall_basis(2, 4);
    auto x1 = make_leaf(0, 2), x2 = make_leaf(1, 2);
    auto t = make_bracket(x1, make_bracket(x2, make_bracket(x1, x2)));
    auto c = hall_decompose(expand_to_words(*t, 4), B);
    ASSERT_EQ(c.size(), 1u);
    EXPECT_EQ(B[c.begin()->first]->key, "[1,[0,[0,1]]]");
    EXPECT_EQ(c.begin()->second, 1);
}

TEST(Decompose, RoundTripAndErrors)
{
    auto B = build_hall_basis(2, 6);
    for (std::size_t i = 0; i < B.size(); ++i) {
        auto c = hall_decompose(B.expansion(i), B);
        ASSERT_EQ(c.size(), 1u);
        EXPECT_EQ(c.begin()->first, i);
        EXPECT_EQ(c.begin()->second, 1);
    }
    NCSeries notlie = NCSeries::monomial(6, make_word({0, 1}));
    EXPECT_THROW(hall_decompose(notlie, B), std::invalid_argument);
    auto B3 = build_hall_basis(2, 3);
    EXPECT_THROW(hall_decompose(B.expansion(B.size() - 1), B3), std::invalid_argument);
}

TEST(Decompose, JacobiConsistency)
{
    auto B = build_hall_basis(3, 5);
    std::mt19937 rng(17);
    for (int k = 0; k < 60; ++k) {
        auto t = random_tree(rng, 3, 1 + static_cast<int>(rng() % 5));
        NCSeries e = expand_to_words(*t, 5);
        auto c = hall_decompose(e, B);
        EXPECT_EQ(hall_recombine(c, B, 5), e);
    }
}

TEST(Malabar, Factorizations)
{
    auto B = build_hall_basis(2, 6);
    auto x0 = make_leaf(0, 2), x1 = make_leaf(1, 2);
    auto f = malabar_factorize(*make_ad(x0, 2, x1), B, 0);
    EXPECT_EQ(f.m, 2);
    EXPECT_EQ(f.mbar, 0);
    EXPECT_EQ(f.core->key, "1");
    auto g = malabar_factorize(*x1, B, 0);
    EXPECT_EQ(g.m, 0);
    EXPECT_EQ(g.core->key, "1");

    // X1 minimal: every element with one X1 other than X1 itself ends with X0.
    auto C = build_hall_basis(2, 6, OrderPolicy::custom, {1, 0});
    int checked = 0;
    for (const auto& b : C.elements()) {
        auto h = malabar_factorize(*b, C, 0);
        if (b->count(1) == 1 && b->length > 1) {
            EXPECT_GE(h.mbar, 1) << b->key;
            ++checked;
        }
        // Reassemble.
        BracketPtr r = h.core;
        for (int i = 0; i < h.mbar; ++i) r = make_bracket(r, x0);
        r = make_ad(x0, h.m, r);
        EXPECT_EQ(r->key, b->key);
    }
    EXPECT_EQ(checked, 5);
}

TEST(Factorize, SecondKindShape)
{
    auto x1 = make_leaf(0, 2), x2 = make_leaf(1, 2);
    auto b = make_ad(x1, 3, x2);
    auto f = ad_factorize(b);
    EXPECT_EQ(f.m, 3);
    EXPECT_EQ(f.b2->key, "1");
    auto c = make_bracket(x2, make_bracket(x1, x2));
    auto g = ad_factorize(c);
    EXPECT_EQ(g.m, 1);
    EXPECT_EQ(g.b2->key, "[0,1]");
}

TEST(Export, Json)
{
    auto B = build_hall_basis(2, 3);
    std::string js = basis_to_json(B, {"X1", "X2"});
    EXPECT_NE(js.find("\"[X1,[X1,X2]]\""), std::string::npos);
    EXPECT_NE(js.find("\"max_length\": 3"), std::string::npos);
}

TEST(StructureConstants, SmallDegrees)
{
    auto B = build_hall_basis(2, 5);
    auto rows = structure_constants(B, 5);
    EXPECT_FALSE(rows.empty());
    for (const auto& r : rows) {
        NCSeries lhs = nc_bracket(B.expansion(r.i), B.expansion(r.j));
        EXPECT_EQ(hall_recombine(r.coeffs, B, 5), lhs);
    }
}
