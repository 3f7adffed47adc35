#include "flowexp/coords.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace flowexp {

std::vector<Rational> bernoulli_table(int n)
{
    if (n < 0) throw std::invalid_argument("bernoulli: negative index");
    // sum_{k<m} C(m,k) B_k = 0 for m >= 2, solved for B_{m-1}
    std::vector<Rational> B(n + 1);
    B[0] = 1;
    for (int m = 2; m <= n + 1; ++m) {
        Rational s = 0;
        Rational binom = 1;  // C(m, k)
        for (int k = 0; k < m - 1; ++k) {
            s += binom * B[k];
            binom = binom * (m - k) / (k + 1);
        }
        // binom is now C(m, m-1) = m
        B[m - 1] = -s / binom;
        B[m - 1].canonicalize();
    }
    return B;
}

Rational bernoulli(int n)
{
    static std::mutex mu;
    static std::vector<Rational> cache;
    std::lock_guard<std::mutex> lock(mu);
    if (n < 0) throw std::invalid_argument("bernoulli: negative index");
    if (static_cast<int>(cache.size()) <= n) cache = bernoulli_table(std::max(n, 2 * static_cast<int>(cache.size())));
    return cache[n];
}

std::string to_string(CoordKind k)
{
    switch (k) {
    case CoordKind::first: return "first";
    case CoordKind::second: return "second";
    case CoordKind::pseudo_first: return "pseudo_first";
    }
    return "?";
}

const CoordEntry* CoordTable::find(const std::string& key) const
{
    for (const auto& e : entries)
        if (e.b->key == key) return &e;
    return nullptr;
}

Rational CoordTable::value(const std::string& key) const
{
    const CoordEntry* e = find(key);
    return e ? e->value : Rational(0);
}

std::string CoordTable::to_csv(const std::vector<std::string>& names) const
{
    std::ostringstream os;
    os << "bracket,length,n,n0,value,decimal\n";
    for (const auto& e : entries) {
        int n0 = e.b->count(0);
        os << '"' << bracket_label(*e.b, names) << "\"," << e.b->length << ',' << e.b->length - n0 << ',' << n0
           << ',' << e.value.get_str() << ',' << fmt::format("{:.17g}", e.value.get_d()) << '\n';
    }
    return os.str();
}

namespace {

CoordTable table_from_decomposition(CoordKind kind, const HallBasis& basis, const std::map<std::size_t, Rational>& c,
                                    const std::function<bool(const Bracket&)>& in_table)
{
    CoordTable T;
    T.kind = kind;
    for (std::size_t i = 0; i < basis.size(); ++i) {
        if (!in_table(*basis[i])) continue;
        auto it = c.find(i);
        T.entries.push_back({i, basis[i], it == c.end() ? Rational(0) : it->second});
    }
    return T;
}

}  // namespace

CoordTable coord_first_kind(const HallBasis& basis, const ControlTuple& a, const Rational& t, int M)
{
    if (M > basis.max_length()) throw std::invalid_argument("coord_first_kind: M exceeds the basis length");
    if (static_cast<int>(a.size()) != basis.alphabet_size())
        throw std::invalid_argument("coord_first_kind: channel count differs from alphabet size");
    NCSeries L = nc_log(word_series(a, t, M));
    if (!is_lie_element(L)) throw std::logic_error("coord_first_kind: log of the word series is not Lie");
    auto c = hall_decompose(L.retruncated(basis.max_length()), basis);
    CoordTable T = table_from_decomposition(CoordKind::first, basis, c, [M](const Bracket& b) { return b.length <= M; });
    T.t = t;
    T.M = M;
    return T;
}

CoordTable cbhd_coeffs(int n_args, const HallBasis& basis, int M)
{
    if (n_args < 2) throw std::invalid_argument("cbhd_coeffs: need at least two arguments");
    ControlTuple a;
    for (int j = 1; j <= n_args; ++j) a.push_back(Control::indicator(j - 1, j, n_args));
    CoordTable T = coord_first_kind(basis, a, n_args, M);
    T.control_id = fmt::format("cbhd{}", n_args);
    return T;
}

NCSeries cbhd_piece(const CoordTable& alpha, const HallBasis& basis, const std::vector<int>& h, int degree)
{
    NCSeries r(degree);
    for (const auto& e : alpha.entries) {
        if (e.value == 0) continue;
        std::vector<int> c(h.size());
        for (std::size_t l = 0; l < h.size(); ++l) c[l] = e.b->count(static_cast<int>(l));
        if (c != h || e.b->length > degree) continue;
        r += basis.expansion(e.index).retruncated(degree) * e.value;
    }
    return r;
}

Rational first_kind_ad_closed_form(int k, const Control& a0, const Control& a1, const Rational& t)
{
    Control A0 = a0.primitive(), A1 = a1.primitive();
    Rational A0t = A0(t);
    Rational fact = 1;
    for (int i = 2; i <= k; ++i) fact *= i;
    Rational sign = k % 2 == 0 ? 1 : -1;
    Rational pw = 1;
    for (int i = 0; i < k; ++i) pw *= A0t;
    Rational r = sign * pw * bernoulli(k) / fact * A1(t);
    ControlTuple ch{A1 * a0, a0};
    for (int l = 1; l <= k; ++l) {
        Word w(1, 0);
        w += Word(l - 1, 1);
        Rational J = iterated_word_integral(w, ch, t);
        Rational p = 1, f = 1;
        for (int i = 0; i < k - l; ++i) {
            p *= A0t;
            f *= i + 1;
        }
        r += sign * p * bernoulli(k - l) / f * J;
    }
    r.canonicalize();
    return r;
}

SecondKindFunctions coord_second_kind_functions(const HallBasis& basis, const ControlTuple& a0)
{
    if (static_cast<int>(a0.size()) != basis.alphabet_size())
        throw std::invalid_argument("coord_second_kind: channel count differs from alphabet size");
    ControlTuple a = common_grid(a0);
    SecondKindFunctions F;
    F.xi.resize(basis.size());
    F.xi_dot.resize(basis.size());
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const BracketPtr& b = basis[i];
        if (b->is_leaf()) {
            F.xi_dot[i] = a[b->letter];
        } else {
            AdFactor f = ad_factorize(b);
            int i1 = basis.find(*f.b1), i2 = basis.find(*f.b2);
            if (i1 < 0 || i2 < 0) throw std::invalid_argument("coord_second_kind: factor outside the basis: " + b->key);
            Rational fact = 1;
            for (int j = 2; j <= f.m; ++j) fact *= j;
            F.xi_dot[i] = F.xi[i1].power(f.m) * F.xi_dot[i2] * Rational(1 / fact);
        }
        F.xi[i] = F.xi_dot[i].primitive();
    }
    return F;
}

CoordTable coord_second_kind(const HallBasis& basis, const ControlTuple& a, const Rational& t)
{
    auto F = coord_second_kind_functions(basis, a);
    CoordTable T;
    T.kind = CoordKind::second;
    T.t = t;
    T.M = basis.max_length();
    for (std::size_t i = 0; i < basis.size(); ++i) T.entries.push_back({i, basis[i], F.xi[i](t)});
    return T;
}

ControlTuple extended_controls(const ControlTuple& u, const Rational& t, int N0)
{
    ControlTuple g;
    for (int k = 0; k <= N0; ++k)
        for (const auto& ui : u) g.push_back(ui.times_poly(Poly1::shifted_power(t, k)));
    return g;
}

NCSeries extended_letter_image(int k, int i, int m, int degree)
{
    BracketPtr b = make_ad(make_leaf(0, m + 1), k, make_leaf(i, m + 1));
    return expand_to_words(*b, degree);
}

CoordTable coord_pseudo_first_kind(const HallBasis& basis, const ControlTuple& u, const Rational& t, int M, int N0)
{
    const int m = static_cast<int>(u.size());
    if (basis.alphabet_size() != m + 1) throw std::invalid_argument("coord_pseudo_first_kind: basis must be over X0..Xm");
    if (M < 1 || N0 < 0) throw std::invalid_argument("coord_pseudo_first_kind: need M >= 1 and N0 >= 0");
    const int D = std::min(M + N0, basis.max_length());

    auto ysum = [m](const Word& w) {
        int s = 0;
        for (char c : w) s += static_cast<int>(c) / m;
        return s;
    };
    auto keepY = [&](const Word& w) { return ysum(w) <= N0; };
    NCSeries S = word_series(extended_controls(u, t, N0), t, M, keepY);
    NCSeries L = nc_log(S, keepY);

    std::vector<NCSeries> images;
    for (int k = 0; k <= N0; ++k)
        for (int i = 1; i <= m; ++i) images.push_back(extended_letter_image(k, i, m, D));
    auto keepX = [&](const Word& w) {
        int n0 = static_cast<int>(std::count(w.begin(), w.end(), char(0)));
        return n0 <= N0 && static_cast<int>(w.size()) - n0 <= M;
    };
    NCSeries Z = nc_substitute(L.retruncated(M), images, D, keepX);
    auto c = hall_decompose(Z, basis);
    CoordTable T = table_from_decomposition(CoordKind::pseudo_first, basis, c, [&](const Bracket& b) {
        int n0 = b.count(0);
        return b.length - n0 <= M && n0 <= N0 && b.length <= D;
    });
    T.t = t;
    T.M = M;
    T.N0 = N0;
    return T;
}

double pseudo_first_bound_constant(const CoordTable& table, const ControlTuple& u)
{
    double L = 0;
    for (const auto& ui : u) L += ui.l1_norm(table.t);
    double t = table.t.get_d(), C = 0;
    for (const auto& e : table.entries) {
        int n0 = e.b->count(0), n = e.b->length - n0;
        if (n == 0) continue;
        double den = std::pow(t, n0) * std::pow(L, n);
        double v = std::abs(e.value.get_d());
        if (den <= 0) {
            if (v > 0) return INFINITY;
            continue;
        }
        C = std::max(C, std::pow(v * std::tgamma(e.b->length + 1.0) / den, 1.0 / e.b->length));
    }
    return C;
}

std::string BoundAuditReport::summary() const
{
    std::string s = ok ? "ok" : "violated at " + witness;
    s += fmt::format("; worst ratio {:.3g}", worst_ratio);
    for (const auto& [k, c] : drift_c) s += fmt::format("; c_{}={:.4g}", k, c);
    for (const auto& [k, c] : x1_min_c) s += fmt::format("; c'_{}={:.4g}", k, c);
    return s;
}

BoundAuditReport coord_bound_audit(const CoordTable& table, const ControlTuple& a, int drift)
{
    if (table.kind != CoordKind::second) throw std::invalid_argument("coord_bound_audit: table must be of the second kind");
    BoundAuditReport R;
    const Rational& t = table.t;
    double L = 0, Lu = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double li = a[i].l1_norm(t);
        L += li;
        if (static_cast<int>(i) != drift) Lu += li;
    }
    const double slack = 1 + 1e-12;
    auto fail = [&](const CoordEntry& e, const char* what) {
        if (R.ok) R.witness = e.b->key + " (" + what + ")";
        R.ok = false;
    };
    for (const auto& e : table.entries) {
        double v = std::abs(e.value.get_d());
        double bound = std::pow(L, e.b->length);
        if (v > bound * slack + 1e-300) fail(e, "|xi_b| <= ||a||^|b|");
        if (bound > 0) R.worst_ratio = std::max(R.worst_ratio, v / bound);
    }
    if (drift < 0) return R;

    double td = t.get_d();
    bool x1_minimal = a.size() == 2 && drift == 0 && !table.entries.empty() && table.entries[0].b->is_leaf() &&
                      table.entries[0].b->letter == 1;
    Control U;
    if (x1_minimal) U = a[1].primitive();
    for (const auto& e : table.entries) {
        int n0 = e.b->count(drift);
        int k = e.b->length - n0;
        if (k == 0) continue;
        double v = std::abs(e.value.get_d());
        double uk = std::pow(Lu, k);
        if (n0 == 0) {
            if (v > uk * slack + 1e-300) fail(e, "|xi_b| <= ||u||^n(b)");
        } else if (uk > 0 && td > 0) {
            double c = std::pow(v * std::tgamma(n0 + 1.0) / (uk * std::pow(td, n0)), 1.0 / n0);
            double& slot = R.drift_c[k];
            slot = std::max({slot, 1.0, c});
        }
        if (x1_minimal && !e.b->is_leaf() && n0 >= 1 && td > 0) {
            double Uk = U.power(k).l1_norm(t);
            if (Uk <= 0) {
                if (v > 1e-300) fail(e, "|xi_b| vanishes with ||U||");
                continue;
            }
            double c = std::pow(v * std::tgamma(static_cast<double>(n0)) / (Uk * std::pow(td, n0 - 1)), 1.0 / n0);
            double& slot = R.x1_min_c[k];
            slot = std::max({slot, 1.0, c});
        }
    }
    return R;
}

}  // namespace flowexp
