#include "flowexp/selftest.hpp"

#include "flowexp/coords.hpp"
#include "flowexp/expansions.hpp"
#include "flowexp/fixtures.hpp"

#include <fmt/format.h>

#include <chrono>
#include <random>
#include <stdexcept>

namespace flowexp {

bool SelftestReport::all_pass() const
{
    return first_failure() == 0;
}

int SelftestReport::first_failure() const
{
    for (const auto& s : suites)
        if (!s.pass) return s.index;
    return 0;
}

namespace {

using Rng = std::mt19937;

// Thrown by a suite to report the first failing check.
struct CheckFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void check(bool ok, const std::string& what)
{
    if (!ok) throw CheckFailed(what);
}

NCSeries random_polynomial(Rng& rng, int q, int n, int degree)
{
    std::uniform_int_distribution<int> c(-5, 5);
    NCSeries p(degree);
    for (const auto& w : word_enumerate(q, n)) p.add(w, c(rng));
    return p;
}

NCSeries random_lie(Rng& rng, const HallBasis& B, int n, int degree)
{
    std::uniform_int_distribution<int> c(-4, 4);
    NCSeries a(degree);
    for (std::size_t i = 0; i < B.size(); ++i)
        if (B[i]->length == n) a += B.expansion(i).retruncated(degree) * Rational(c(rng));
    return a;
}

std::map<Word, long> shuffle(const Word& u, const Word& v)
{
    std::map<Word, long> out;
    if (u.empty()) {
        out[v] = 1;
        return out;
    }
    if (v.empty()) {
        out[u] = 1;
        return out;
    }
    for (const auto& [w, c] : shuffle(u.substr(0, u.size() - 1), v)) out[w + u.back()] += c;
    for (const auto& [w, c] : shuffle(u, v.substr(0, v.size() - 1))) out[w + v.back()] += c;
    return out;
}

std::string dynkin_idempotence(Rng& rng)
{
    int checks = 0;
    for (int q : {2, 3})
        for (int n = 1; n <= (q == 2 ? 6 : 4); ++n)
            for (int trial = 0; trial < 6; ++trial) {
                NCSeries p = random_polynomial(rng, q, n, n);
                NCSeries th = dynkin_beta(p) * Rational(1, n);
                check(dynkin_beta(th) * Rational(1, n) == th, fmt::format("theta not idempotent (q={}, n={})", q, n));
                check(is_lie_element_friedrichs(th), fmt::format("theta(p) not primitive (q={}, n={})", q, n));
                ++checks;
            }
    HallBasis B = build_hall_basis(2, 6);
    for (int n = 1; n <= 6; ++n) {
        NCSeries a = random_lie(rng, B, n, 6);
        check(dynkin_beta(a) == a * Rational(n), fmt::format("Lie element not an eigenvector (n={})", n));
        ++checks;
    }
    return fmt::format("{} checks", checks);
}

std::string friedrichs_agreement(Rng& rng)
{
    HallBasis B = build_hall_basis(2, 5);
    int lie = 0, other = 0;
    for (int n = 1; n <= 5; ++n)
        for (int trial = 0; trial < 5; ++trial) {
            NCSeries a = random_lie(rng, B, n, 5);
            check(is_lie_element_dynkin(a) && is_lie_element_friedrichs(a), "Lie element rejected");
            ++lie;
            NCSeries p = random_polynomial(rng, 2, n, 5);
            check(is_lie_element_dynkin(p) == is_lie_element_friedrichs(p), "Dynkin and Friedrichs tests disagree");
            other += !is_lie_element_dynkin(p);
        }
    ControlTuple a{random_pl_control(rng, Rational(1), 3), random_pl_control(rng, Rational(1), 3)};
    NCSeries L = nc_log(word_series(a, Rational(3, 4), 5));
    check(is_lie_element(L, true), "log of a word series is not Lie");
    return fmt::format("{} Lie, {} non-Lie samples", lie, other);
}

std::string shuffle_identity(Rng& rng)
{
    const int N = 6;
    ControlTuple a{random_pl_control(rng, Rational(1), 3), random_pl_control(rng, Rational(1), 2, 3, true)};
    NCSeries S = word_series(a, Rational(2, 3), N);
    check(grouplike_check(S), "word series is not group-like");
    std::vector<Word> words;
    for (int n = 1; n <= 3; ++n)
        for (const auto& w : word_enumerate(2, n)) words.push_back(w);
    int pairs = 0;
    for (const auto& u : words)
        for (const auto& v : words) {
            if (static_cast<int>(u.size() + v.size()) > N) continue;
            Rational rhs = 0;
            for (const auto& [w, c] : shuffle(u, v)) rhs += S.coeff(w) * c;
            check(S.coeff(u) * S.coeff(v) == rhs, "shuffle identity fails for " + word_to_text(u) + "," + word_to_text(v));
            ++pairs;
        }
    return fmt::format("{} word pairs", pairs);
}

std::string witt_dimensions(Rng&)
{
    std::string detail;
    for (auto [q, L] : std::vector<std::pair<int, int>>{{2, 6}, {3, 4}}) {
        HallBasis B = build_hall_basis(q, L);
        for (int n = 1; n <= L; ++n) {
            long count = 0;
            for (std::size_t i = 0; i < B.size(); ++i) count += B[i]->length == n;
            long w = witt_dimension(q, n);
            check(count == w, fmt::format("q={} n={}: {} elements, Witt gives {}", q, n, count, w));
            check(expansion_rank(B, n) == w, fmt::format("q={} n={}: expansions are not independent", q, n));
        }
        detail += fmt::format("q={}: {} elements; ", q, B.size());
    }
    return detail;
}

std::string hall_audit(Rng&)
{
    std::string witness;
    std::vector<HallBasis> bases{build_hall_basis(2, 7), build_hall_basis(3, 4),
                                 build_hall_basis(2, 5, OrderPolicy::custom, {1, 0}),
                                 build_hall_basis(2, 8, OrderPolicy::length_then_lex, {},
                                                  [](const std::vector<int>& c) { return c[1] <= 2; })};
    for (const auto& B : bases) check(hall_conditions_hold(B, &witness), "Hall condition violated at " + witness);
    return fmt::format("{} bases", bases.size());
}

std::string jacobi_antisymmetry(Rng& rng)
{
    HallBasis B = build_hall_basis(2, 6);
    int checks = 0;
    for (int trial = 0; trial < 10; ++trial) {
        std::uniform_int_distribution<int> deg(1, 2);
        NCSeries x = random_lie(rng, B, deg(rng), 6), y = random_lie(rng, B, deg(rng), 6),
                 z = random_lie(rng, B, deg(rng), 6);
        NCSeries j = nc_bracket(x, nc_bracket(y, z)) + nc_bracket(y, nc_bracket(z, x)) + nc_bracket(z, nc_bracket(x, y));
        check(j.empty(), "Jacobi identity fails in the free algebra");
        check(nc_bracket(x, y) == -nc_bracket(y, x), "bracket not antisymmetric");
        ++checks;
    }
    for (const auto& f : {cubic_drift_system(), divergent_pair(), optimal_pair()}) {
        VectorField a = f[0], b = f[1], c = lie_bracket(f[0], f[1]);
        VectorField j = lie_bracket(a, lie_bracket(b, c)) + lie_bracket(b, lie_bracket(c, a)) +
                        lie_bracket(c, lie_bracket(a, b));
        check(j.is_zero(), "Jacobi identity fails on fields");
        check(lie_bracket(a, b) + lie_bracket(b, a) == VectorField(std::vector<MPoly>(a.dim(), MPoly(a.dim()))),
              "field bracket not antisymmetric");
        ++checks;
    }
    return fmt::format("{} checks", checks);
}

std::string fixture_tables(Rng&)
{
    HallBasis B = build_hall_basis(2, 8);
    // Only finitely many brackets survive on the cubic drift system.
    auto rows = nonzero_brackets(B, cubic_drift_system());
    for (const auto& r : rows) check(B[r.index]->count(1) <= 3, "normal-form-3d: unexpected bracket " + r.label);
    auto x0 = make_leaf(0, 2), x1 = make_leaf(1, 2);
    auto f = cubic_drift_system();
    check(rows.size() == 8, fmt::format("normal-form-3d: {} nonzero brackets, expected 8", rows.size()));
    VectorField e2 = constant_field(3, 1);
    check(substitute_bracket(*make_bracket(x1, make_bracket(x0, x1)), f) == e2 * Rational(-2),
          "normal-form-3d: [X1,[X0,X1]] != -2 e2");
    check(substitute_bracket(*make_ad(x0, 3, x1), f).is_zero(), "normal-form-3d: ad^3 X0 X1 != 0");
    // Optimal pair: brackets with f1 twice vanish.
    for (const auto& r : nonzero_brackets(B, optimal_pair()))
        check(B[r.index]->count(1) <= 1, "optimal-pair: unexpected bracket " + r.label);
    HallBasis B3 = build_hall_basis(3, 4);
    for (const auto& r : nonzero_brackets(B3, nilpotent_trio()))
        check(B3[r.index]->length <= 2, "nilpotent-trio: long bracket " + r.label);
    check(matrix_sussmann_divergence(4).pattern_ok, "so3-complex: A_{b_k} pattern");
    return fmt::format("{} nonzero brackets on normal-form-3d up to length 8", rows.size());
}

std::string cbhd_table(Rng&)
{
    HallBasis B = build_hall_basis(2, 7);
    CoordTable T = cbhd_coeffs(2, B, 4);
    check(T.value("[0,1]") == Rational(1, 2), "1/2 [y1,y2]");
    check(T.value("[0,[0,1]]") == Rational(1, 12), "1/12 [y1,[y1,y2]]");
    check(T.value("[1,[0,1]]") == Rational(-1, 12), "1/12 [y2,[y2,y1]]");
    check(T.value("[1,[0,[0,1]]]") == Rational(-1, 24), "-1/24 [y2,[y1,[y1,y2]]]");
    check(T.value("[0,[0,[0,1]]]") == 0 && T.value("[1,[1,[0,1]]]") == 0, "vanishing degree-4 pieces");
    ControlTuple a{Control::indicator(1, 2, 2), Control::indicator(0, 1, 2)};
    CoordTable Z = coord_first_kind(B, a, 2, 7);
    Rational fact = 1;
    std::string key = "1";
    for (int k = 0; k <= 6; ++k) {
        if (k > 0) {
            fact *= k;
            key = "[0," + key + "]";
        }
        check(Z.value(key) == bernoulli(k) / fact, fmt::format("ad^{} coefficient of log(e^X1 e^X0)", k));
    }
    return "degree <= 4 table and ad^k, k <= 6";
}

using SuiteFn = std::string (*)(Rng&);
const std::vector<std::pair<std::string, SuiteFn>>& suites()
{
    static const std::vector<std::pair<std::string, SuiteFn>> s{
        {"dynkin-idempotence", dynkin_idempotence},   {"friedrichs-agreement", friedrichs_agreement},
        {"shuffle-identity", shuffle_identity},       {"witt-dimensions", witt_dimensions},
        {"hall-audit", hall_audit},                   {"jacobi-antisymmetry", jacobi_antisymmetry},
        {"fixture-tables", fixture_tables},           {"cbhd-table", cbhd_table},
    };
    return s;
}

}  // namespace

std::vector<std::string> selftest_suite_names()
{
    std::vector<std::string> n;
    for (const auto& [name, fn] : suites()) n.push_back(name);
    return n;
}

SelftestReport run_selftest(unsigned seed, const std::string& only,
                            const std::function<void(const SuiteResult&)>& progress)
{
    SelftestReport rep;
    rep.seed = seed;
    Rng rng(seed);
    int index = 0;
    for (const auto& [name, fn] : suites()) {
        ++index;
        if (!only.empty() && only != name) continue;
        SuiteResult r;
        r.index = index;
        r.name = name;
        auto t0 = std::chrono::steady_clock::now();
        try {
            r.detail = fn(rng);
            r.pass = true;
        } catch (const std::exception& e) {
            r.detail = e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (progress) progress(r);
        rep.suites.push_back(r);
    }
    if (!only.empty() && rep.suites.empty()) throw std::invalid_argument("unknown suite: " + only);
    return rep;
}

}  // namespace flowexp
