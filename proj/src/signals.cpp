#include "flowexp/signals.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flowexp {

Poly1::Poly1(std::vector<Rational> c) : c_(std::move(c))
{
    for (auto& x : c_) x.canonicalize();
    trim();
}

Poly1 Poly1::constant(const Rational& a)
{
    return Poly1(std::vector<Rational>{a});
}

Poly1 Poly1::monomial(int deg, const Rational& a)
{
    std::vector<Rational> c(deg + 1);
    c[deg] = a;
    return Poly1(std::move(c));
}

Poly1 Poly1::shifted_power(const Rational& s, int k)
{
    Poly1 r = constant(1);
    Poly1 lin(std::vector<Rational>{-s, 1});
    Rational fact = 1;
    for (int i = 1; i <= k; ++i) {
        r = r * lin;
        fact *= i;
    }
    return r * Rational(1 / fact);
}

void Poly1::trim()
{
    while (!c_.empty() && c_.back() == 0) c_.pop_back();
}

Rational Poly1::operator()(const Rational& t) const
{
    Rational r = 0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) r = r * t + *it;
    return r;
}

double Poly1::operator()(double t) const
{
    double r = 0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) r = r * t + it->get_d();
    return r;
}

Poly1 Poly1::derivative() const
{
    if (c_.size() <= 1) return Poly1();
    std::vector<Rational> d(c_.size() - 1);
    for (std::size_t i = 1; i < c_.size(); ++i) d[i - 1] = c_[i] * static_cast<long>(i);
    return Poly1(std::move(d));
}

Poly1 Poly1::antiderivative() const
{
    if (c_.empty()) return Poly1();
    std::vector<Rational> d(c_.size() + 1);
    for (std::size_t i = 0; i < c_.size(); ++i) d[i + 1] = c_[i] / static_cast<long>(i + 1);
    return Poly1(std::move(d));
}

Poly1 Poly1::scaled_argument(const Rational& a) const
{
    std::vector<Rational> d(c_);
    Rational p = 1;
    for (auto& x : d) {
        x *= p;
        p *= a;
    }
    return Poly1(std::move(d));
}

Poly1& Poly1::operator+=(const Poly1& o)
{
    if (o.c_.size() > c_.size()) c_.resize(o.c_.size());
    for (std::size_t i = 0; i < o.c_.size(); ++i) c_[i] += o.c_[i];
    trim();
    return *this;
}

Poly1& Poly1::operator-=(const Poly1& o)
{
    if (o.c_.size() > c_.size()) c_.resize(o.c_.size());
    for (std::size_t i = 0; i < o.c_.size(); ++i) c_[i] -= o.c_[i];
    trim();
    return *this;
}

Poly1& Poly1::operator*=(const Rational& s)
{
    Rational f(s);
    f.canonicalize();
    for (auto& x : c_) x *= f;
    trim();
    return *this;
}

Poly1 operator*(const Poly1& a, const Poly1& b)
{
    if (a.is_zero() || b.is_zero()) return Poly1();
    std::vector<Rational> c(a.c_.size() + b.c_.size() - 1);
    for (std::size_t i = 0; i < a.c_.size(); ++i)
        for (std::size_t j = 0; j < b.c_.size(); ++j) c[i + j] += a.c_[i] * b.c_[j];
    Poly1 r;
    r.c_ = std::move(c);
    r.trim();
    return r;
}

// ---------------------------------------------------------------------------

Control::Control(std::vector<Rational> breakpoints, std::vector<Poly1> pieces, std::string label)
    : bp_(std::move(breakpoints)), pieces_(std::move(pieces)), label_(std::move(label))
{
    if (bp_.size() < 2 || pieces_.size() + 1 != bp_.size())
        throw std::invalid_argument("Control: need K+1 breakpoints for K pieces");
    for (auto& b : bp_) b.canonicalize();
    if (bp_.front() != 0) throw std::invalid_argument("Control: first breakpoint must be 0");
    for (std::size_t i = 1; i < bp_.size(); ++i)
        if (!(bp_[i - 1] < bp_[i])) throw std::invalid_argument("Control: breakpoints must increase");
}

Control Control::constant(const Rational& c, const Rational& T)
{
    return Control({0, T}, {Poly1::constant(c)});
}

Control Control::indicator(const Rational& a, const Rational& b, const Rational& T)
{
    std::vector<Rational> bp{0};
    std::vector<Poly1> pc;
    if (a > 0) {
        bp.push_back(a);
        pc.push_back(Poly1());
    }
    bp.push_back(b);
    pc.push_back(Poly1::constant(1));
    if (b < T) {
        bp.push_back(T);
        pc.push_back(Poly1());
    }
    return Control(bp, pc);
}

Control Control::from_poly(const Poly1& p, const Rational& T)
{
    return Control({0, T}, {p});
}

std::size_t Control::piece_index(const Rational& t) const
{
    if (t < 0 || t > bp_.back()) throw std::out_of_range("Control: time outside [0, T]");
    auto it = std::upper_bound(bp_.begin(), bp_.end(), t);
    std::size_t k = static_cast<std::size_t>(it - bp_.begin());
    if (k == 0) return 0;
    return std::min(k - 1, pieces_.size() - 1);
}

Rational Control::operator()(const Rational& t) const
{
    return pieces_[piece_index(t)](t);
}

double Control::operator()(double t) const
{
    std::size_t k = 0;
    while (k + 1 < pieces_.size() && t >= bp_[k + 1].get_d()) ++k;
    return pieces_[k](t);
}

std::vector<Rational> merge_grids(const std::vector<Rational>& a, const std::vector<Rational>& b)
{
    std::vector<Rational> r;
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(r));
    r.erase(std::unique(r.begin(), r.end()), r.end());
    return r;
}

Control Control::refined(const std::vector<Rational>& grid) const
{
    if (grid.front() != 0 || grid.back() != bp_.back())
        throw std::invalid_argument("Control::refined: grid span mismatch");
    std::vector<Rational> g = merge_grids(grid, bp_);
    std::vector<Poly1> pc;
    for (std::size_t i = 0; i + 1 < g.size(); ++i) pc.push_back(pieces_[piece_index(g[i])]);
    return Control(g, pc, label_);
}

Control Control::primitive() const
{
    std::vector<Poly1> pc;
    Rational acc = 0;
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
        Poly1 P = pieces_[i].antiderivative();
        Poly1 Q = P + Poly1::constant(acc - P(bp_[i]));
        acc = Q(bp_[i + 1]);
        pc.push_back(std::move(Q));
    }
    return Control(bp_, pc);
}

Control Control::derivative() const
{
    std::vector<Poly1> pc;
    for (const auto& p : pieces_) pc.push_back(p.derivative());
    return Control(bp_, pc);
}

Rational Control::integral(const Rational& t) const
{
    return primitive()(t);
}

Control& Control::operator+=(const Control& o)
{
    if (o.horizon() != horizon()) throw std::invalid_argument("Control: horizon mismatch");
    auto g = merge_grids(bp_, o.bp_);
    Control a = refined(g), b = o.refined(g);
    for (std::size_t i = 0; i < a.pieces_.size(); ++i) a.pieces_[i] += b.pieces_[i];
    a.label_ = label_;
    *this = std::move(a);
    return *this;
}

Control& Control::operator*=(const Rational& s)
{
    for (auto& p : pieces_) p *= s;
    return *this;
}

Control operator*(const Control& x, const Control& y)
{
    if (x.horizon() != y.horizon()) throw std::invalid_argument("Control: horizon mismatch");
    auto g = merge_grids(x.bp_, y.bp_);
    Control a = x.refined(g), b = y.refined(g);
    for (std::size_t i = 0; i < a.pieces_.size(); ++i) a.pieces_[i] = a.pieces_[i] * b.pieces_[i];
    return a;
}

Control Control::times_poly(const Poly1& p) const
{
    Control r = *this;
    for (auto& q : r.pieces_) q = q * p;
    return r;
}

Control Control::power(int k) const
{
    Control r(bp_, std::vector<Poly1>(pieces_.size(), Poly1::constant(1)));
    for (int i = 0; i < k; ++i) r = r * *this;
    return r;
}

Control Control::time_rescale(const Rational& lambda) const
{
    if (!(lambda > 0 && lambda <= 1)) throw std::invalid_argument("time_rescale: need 0 < lambda <= 1");
    std::vector<Rational> bp;
    std::vector<Poly1> pc;
    Rational inv = 1 / lambda;
    for (std::size_t i = 0; i < bp_.size(); ++i) bp.push_back(bp_[i] * lambda);
    for (const auto& p : pieces_) pc.push_back(p.scaled_argument(inv));
    if (lambda < 1) {
        bp.push_back(bp_.back());
        pc.push_back(Poly1());
    }
    return Control(bp, pc, label_);
}

namespace {

double gauss_abs(const Poly1& p, double a, double b)
{
    static const double x[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                0.9061798459386640};
    static const double w[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                0.4786286704993665, 0.2369268850561891};
    double m = 0.5 * (a + b), h = 0.5 * (b - a), s = 0;
    for (int i = 0; i < 5; ++i) s += w[i] * p(m + h * x[i]);
    return std::abs(s * h);
}

}  // namespace

Rational Control::l1_norm_exact_pl(const Rational& t) const
{
    Rational total = 0;
    for (std::size_t i = 0; i < pieces_.size() && bp_[i] < t; ++i) {
        const Poly1& p = pieces_[i];
        if (p.degree() > 1) throw std::invalid_argument("l1_norm_exact_pl: piece of degree > 1");
        Rational a = bp_[i], b = std::min(bp_[i + 1], t);
        std::vector<Rational> cuts{a};
        if (p.degree() == 1) {
            Rational r = -p.coeff(0) / p.coeff(1);
            if (a < r && r < b) cuts.push_back(r);
        }
        cuts.push_back(b);
        Poly1 P = p.antiderivative();
        for (std::size_t k = 0; k + 1 < cuts.size(); ++k) total += abs(P(cuts[k + 1]) - P(cuts[k]));
    }
    return total;
}

double Control::l1_norm(const Rational& t) const
{
    bool pl = true;
    for (const auto& p : pieces_) pl = pl && p.degree() <= 1;
    if (pl) return l1_norm_exact_pl(t).get_d();
    double total = 0;
    for (std::size_t i = 0; i < pieces_.size() && bp_[i] < t; ++i) {
        const Poly1& p = pieces_[i];
        double a = bp_[i].get_d(), b = std::min(bp_[i + 1], t).get_d();
        const int n = 256;
        double prev = a;
        for (int k = 1; k <= n; ++k) {
            double x = a + (b - a) * k / n;
            double xl = prev;
            if (p(xl) * p(x) < 0) {
                double lo = xl, hi = x;
                for (int it = 0; it < 80; ++it) {
                    double mid = 0.5 * (lo + hi);
                    (p(lo) * p(mid) <= 0 ? hi : lo) = mid;
                }
                total += gauss_abs(p, xl, lo) + gauss_abs(p, lo, x);
            } else {
                total += gauss_abs(p, xl, x);
            }
            prev = x;
        }
    }
    return total;
}

double Control::linf_norm() const
{
    double m = 0;
    for (std::size_t i = 0; i < pieces_.size(); ++i) {
        double a = bp_[i].get_d(), b = bp_[i + 1].get_d();
        const int n = 512;
        for (int k = 0; k <= n; ++k) m = std::max(m, std::abs(pieces_[i](a + (b - a) * k / n)));
    }
    return m;
}

std::string Control::to_json() const
{
    nlohmann::json j;
    j["label"] = label_;
    std::vector<std::string> bp;
    for (const auto& b : bp_) bp.push_back(b.get_str());
    j["breakpoints"] = bp;
    nlohmann::json pcs = nlohmann::json::array();
    for (const auto& p : pieces_) {
        std::vector<std::string> c;
        for (const auto& x : p.coeffs()) c.push_back(x.get_str());
        pcs.push_back(c);
    }
    j["pieces"] = pcs;
    return j.dump();
}

Control Control::from_json(const std::string& text)
{
    auto j = nlohmann::json::parse(text);
    auto rat = [](const nlohmann::json& v) {
        Rational r = v.is_string() ? Rational(v.get<std::string>()) : Rational(v.get<long>());
        r.canonicalize();
        return r;
    };
    std::vector<Rational> bp;
    for (const auto& b : j.at("breakpoints")) bp.push_back(rat(b));
    std::vector<Poly1> pc;
    for (const auto& p : j.at("pieces")) {
        std::vector<Rational> c;
        for (const auto& x : p) c.push_back(rat(x));
        pc.emplace_back(c);
    }
    return Control(bp, pc, j.value("label", ""));
}

ControlTuple common_grid(const ControlTuple& a)
{
    if (a.empty()) return a;
    std::vector<Rational> g = a[0].breakpoints();
    for (const auto& c : a) {
        if (c.horizon() != a[0].horizon()) throw std::invalid_argument("ControlTuple: horizon mismatch");
        g = merge_grids(g, c.breakpoints());
    }
    ControlTuple r;
    for (const auto& c : a) r.push_back(c.refined(g));
    return r;
}

Control iterated_word_function(const Word& w, const ControlTuple& a0)
{
    ControlTuple a = common_grid(a0);
    if (a.empty()) throw std::invalid_argument("iterated_word_function: no channels");
    const auto& bp = a[0].breakpoints();
    Control I(bp, std::vector<Poly1>(bp.size() - 1, Poly1::constant(1)));
    for (char c : w) {
        int l = static_cast<int>(c);
        if (l < 0 || l >= static_cast<int>(a.size())) throw std::out_of_range("word letter outside channel range");
        I = (I * a[l]).primitive();
    }
    return I;
}

Rational iterated_word_integral(const Word& w, const ControlTuple& a, const Rational& t)
{
    if (a.empty()) throw std::invalid_argument("iterated_word_integral: no channels");
    if (t > a[0].horizon()) throw std::out_of_range("iterated_word_integral: t beyond horizon");
    return iterated_word_function(w, a)(t);
}

NCSeries word_series(const ControlTuple& a0, const Rational& t, int N, const std::function<bool(const Word&)>& keep)
{
    ControlTuple a = common_grid(a0);
    if (a.empty()) throw std::invalid_argument("word_series: no channels");
    if (t > a[0].horizon() || t < 0) throw std::out_of_range("word_series: t outside horizon");
    const int q = static_cast<int>(a.size());
    const auto& bp = a[0].breakpoints();
    NCSeries S(N);
    S.add(Word(), 1);
    struct Frame {
        Word w;
        Control I;
    };
    std::vector<Frame> stack{{Word(), Control(bp, std::vector<Poly1>(bp.size() - 1, Poly1::constant(1)))}};
    while (!stack.empty()) {
        Frame f = std::move(stack.back());
        stack.pop_back();
        if (static_cast<int>(f.w.size()) == N) continue;
        for (int l = q - 1; l >= 0; --l) {
            Word w = f.w + static_cast<char>(l);
            if (keep && !keep(w)) continue;
            Control I = (f.I * a[l]).primitive();
            S.add(w, I(t));
            stack.push_back({std::move(w), std::move(I)});
        }
    }
    return S;
}

Rational iterated_U_integral(const std::vector<int>& k, const Control& u, const Rational& t)
{
    Control U = u.primitive();
    ControlTuple ch;
    Word w;
    for (std::size_t j = 0; j < k.size(); ++j) {
        ch.push_back(U.power(k[j]));
        w.push_back(static_cast<char>(j));
    }
    if (ch.empty()) return 1;
    return iterated_word_integral(w, ch, t);
}

}  // namespace flowexp
