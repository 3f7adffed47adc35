#include "flowexp/fields.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace flowexp {

namespace {

Rational canon(Rational r)
{
    r.canonicalize();
    return r;
}

}  // namespace

MPoly MPoly::constant(int nvars, const Rational& c)
{
    MPoly p(nvars);
    p.add(Exp(nvars, 0), c);
    return p;
}

MPoly MPoly::variable(int nvars, int i, const Rational& c)
{
    Exp e(nvars, 0);
    e.at(i) = 1;
    return monomial(nvars, e, c);
}

MPoly MPoly::monomial(int nvars, const Exp& e, const Rational& c)
{
    if (static_cast<int>(e.size()) != nvars) throw std::invalid_argument("MPoly: exponent size mismatch");
    MPoly p(nvars);
    p.add(e, c);
    return p;
}

int MPoly::total_degree() const
{
    int d = -1;
    for (const auto& [e, c] : t_) {
        int s = 0;
        for (int x : e) s += x;
        d = std::max(d, s);
    }
    return d;
}

bool MPoly::is_constant() const
{
    return total_degree() <= 0;
}

void MPoly::add(const Exp& e, const Rational& c)
{
    if (static_cast<int>(e.size()) != n_) throw std::invalid_argument("MPoly: exponent size mismatch");
    if (c == 0) return;
    auto it = t_.find(e);
    if (it == t_.end()) {
        t_.emplace(e, canon(c));
        return;
    }
    it->second += c;
    if (it->second == 0) t_.erase(it);
}

Rational MPoly::operator()(const std::vector<Rational>& x) const
{
    Rational r = 0;
    for (const auto& [e, c] : t_) {
        Rational m = c;
        for (int i = 0; i < n_; ++i)
            for (int k = 0; k < e[i]; ++k) m *= x[i];
        r += m;
    }
    return r;
}

double MPoly::operator()(const double* x) const
{
    double r = 0;
    for (const auto& [e, c] : t_) {
        double m = c.get_d();
        for (int i = 0; i < n_; ++i)
            if (e[i]) m *= std::pow(x[i], e[i]);
        r += m;
    }
    return r;
}

MPoly MPoly::derivative(int i) const
{
    MPoly r(n_);
    for (const auto& [e, c] : t_) {
        if (e[i] == 0) continue;
        Exp f = e;
        --f[i];
        r.add(f, c * e[i]);
    }
    return r;
}

MPoly MPoly::abs_coeffs() const
{
    MPoly r(n_);
    for (const auto& [e, c] : t_) r.add(e, abs(c));
    return r;
}

MPoly& MPoly::operator+=(const MPoly& o)
{
    if (o.n_ != n_ && !o.t_.empty()) throw std::invalid_argument("MPoly: variable count mismatch");
    for (const auto& [e, c] : o.t_) add(e, c);
    return *this;
}

MPoly& MPoly::operator-=(const MPoly& o)
{
    if (o.n_ != n_ && !o.t_.empty()) throw std::invalid_argument("MPoly: variable count mismatch");
    for (const auto& [e, c] : o.t_) add(e, -c);
    return *this;
}

MPoly& MPoly::operator*=(const Rational& s)
{
    if (s == 0) {
        t_.clear();
        return *this;
    }
    Rational f = canon(s);
    for (auto& [e, c] : t_) c *= f;
    return *this;
}

MPoly operator*(const MPoly& a, const MPoly& b)
{
    if (a.n_ != b.n_) throw std::invalid_argument("MPoly: variable count mismatch");
    MPoly r(a.n_);
    MPoly::Exp e(a.n_);
    for (const auto& [ea, ca] : a.t_)
        for (const auto& [eb, cb] : b.t_) {
            for (int i = 0; i < a.n_; ++i) e[i] = ea[i] + eb[i];
            r.add(e, ca * cb);
        }
    return r;
}

MPoly mpoly_pow(const MPoly& p, int k)
{
    MPoly r = MPoly::constant(p.nvars(), 1);
    for (int i = 0; i < k; ++i) r = r * p;
    return r;
}

std::string MPoly::to_string(const std::vector<std::string>& names) const
{
    if (t_.empty()) return "0";
    std::ostringstream os;
    bool first = true;
    for (auto it = t_.rbegin(); it != t_.rend(); ++it) {
        const auto& [e, c] = *it;
        os << (first ? "" : " + ") << c.get_str();
        for (int i = 0; i < n_; ++i) {
            if (!e[i]) continue;
            os << '*' << (i < static_cast<int>(names.size()) ? names[i] : "x" + std::to_string(i + 1));
            if (e[i] > 1) os << '^' << e[i];
        }
        first = false;
    }
    return os.str();
}

namespace {

bool depends_only_on_x1(const MPoly& q)
{
    for (const auto& [e, c] : q.terms())
        for (std::size_t i = 1; i < e.size(); ++i)
            if (e[i]) return false;
    return true;
}

// Exact division of p by q when q only involves x1. Returns false if q does
// not divide p.
bool divide_by_x1_poly(const MPoly& p, const MPoly& q, MPoly& out)
{
    const int n = p.nvars();
    std::vector<Rational> qc(q.total_degree() + 1);
    for (const auto& [e, c] : q.terms()) qc[e[0]] = c;
    const int dq = static_cast<int>(qc.size()) - 1;
    // Group p by the exponents of x2..xn.
    std::map<MPoly::Exp, std::map<int, Rational>> groups;
    for (const auto& [e, c] : p.terms()) {
        MPoly::Exp rest(e.begin() + 1, e.end());
        groups[rest][e[0]] = c;
    }
    out = MPoly(n);
    for (auto& [rest, g] : groups) {
        int dp = g.rbegin()->first;
        if (dp < dq) return false;
        std::vector<Rational> r(dp + 1);
        for (auto& [k, c] : g) r[k] = c;
        for (int k = dp - dq; k >= 0; --k) {
            Rational lead = r[k + dq] / qc[dq];
            if (lead == 0) continue;
            for (int j = 0; j <= dq; ++j) r[k + j] -= lead * qc[j];
            MPoly::Exp e(n);
            e[0] = k;
            std::copy(rest.begin(), rest.end(), e.begin() + 1);
            out.add(e, lead);
        }
        for (const auto& x : r)
            if (x != 0) return false;
    }
    return true;
}

}  // namespace

VectorField::VectorField(std::vector<MPoly> num, MPoly base, int power)
    : num_(std::move(num)), base_(std::move(base)), power_(power)
{
    if (num_.empty()) throw std::invalid_argument("VectorField: zero dimension");
    const int d = dim();
    for (const auto& p : num_)
        if (p.nvars() != d) throw std::invalid_argument("VectorField: component variable count mismatch");
    if (base_.nvars() == 0 && base_.is_zero()) base_ = MPoly::constant(d, 1);
    if (base_.nvars() != d) throw std::invalid_argument("VectorField: base variable count mismatch");
    if (base_.is_zero()) throw std::invalid_argument("VectorField: zero denominator");
    if (power_ < 0) throw std::invalid_argument("VectorField: negative power");
    normalize();
}

void VectorField::normalize()
{
    const int d = dim();
    if (power_ == 0 || is_zero()) {
        power_ = 0;
        base_ = MPoly::constant(d, 1);
        return;
    }
    if (base_.is_constant()) {
        Rational c = base_.terms().begin()->second;
        Rational s = 1;
        for (int i = 0; i < power_; ++i) s /= c;
        for (auto& p : num_) p *= s;
        power_ = 0;
        base_ = MPoly::constant(d, 1);
        return;
    }
    if (!depends_only_on_x1(base_)) return;
    while (power_ > 0) {
        std::vector<MPoly> q(num_.size());
        bool ok = true;
        for (std::size_t i = 0; i < num_.size() && ok; ++i) ok = divide_by_x1_poly(num_[i], base_, q[i]);
        if (!ok) break;
        num_ = std::move(q);
        --power_;
    }
    if (power_ == 0) base_ = MPoly::constant(d, 1);
}

bool VectorField::is_zero() const
{
    for (const auto& p : num_)
        if (!p.is_zero()) return false;
    return true;
}

std::vector<Rational> VectorField::operator()(const std::vector<Rational>& x) const
{
    if (static_cast<int>(x.size()) != dim()) throw std::invalid_argument("VectorField: point dimension mismatch");
    Rational q = 1;
    if (power_ > 0) {
        Rational b = base_(x);
        if (b == 0) throw std::domain_error("VectorField: pole hit");
        for (int i = 0; i < power_; ++i) q *= b;
    }
    std::vector<Rational> r;
    for (const auto& p : num_) r.push_back(canon(p(x) / q));
    return r;
}

Eigen::VectorXd VectorField::eval(const Eigen::VectorXd& x) const
{
    return FieldEval(*this).value(x);
}

namespace {

// Brings both fields to a common base; throws if they use different ones.
const MPoly& common_base(const VectorField& f, const VectorField& g)
{
    if (f.dim() != g.dim()) throw std::invalid_argument("VectorField: dimension mismatch");
    if (f.power() > 0 && g.power() > 0 && !(f.base() == g.base()))
        throw std::invalid_argument("VectorField: operands have different denominators; class not closed");
    return f.power() > 0 ? f.base() : g.base();
}

std::vector<MPoly> raise(const std::vector<MPoly>& num, const MPoly& q, int from, int to)
{
    MPoly m = mpoly_pow(q, to - from);
    std::vector<MPoly> r;
    for (const auto& p : num) r.push_back(p * m);
    return r;
}

}  // namespace

bool VectorField::operator==(const VectorField& o) const
{
    if (dim() != o.dim()) return false;
    if (power_ == o.power_ && base_ == o.base_) return num_ == o.num_;
    for (int i = 0; i < dim(); ++i) {
        MPoly lhs = num_[i] * mpoly_pow(o.base_, o.power_);
        MPoly rhs = o.num_[i] * mpoly_pow(base_, power_);
        if (!(lhs == rhs)) return false;
    }
    return true;
}

VectorField& VectorField::operator+=(const VectorField& o)
{
    const MPoly q = common_base(*this, o);
    int p = std::max(power_, o.power_);
    auto a = raise(num_, q, power_, p), b = raise(o.num_, q, o.power_, p);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    *this = VectorField(std::move(a), q, p);
    return *this;
}

VectorField& VectorField::operator*=(const Rational& s)
{
    for (auto& p : num_) p *= s;
    normalize();
    return *this;
}

VectorField VectorField::directional(const VectorField& g) const
{
    // D(N/q^a) g = (DN g q - a N (Dq g)) / (q^{a+1}) combined with g = M / q^b.
    const MPoly q = common_base(*this, g);
    const int d = dim(), a = power_, b = g.power_;
    std::vector<MPoly> out(d, MPoly(d));
    MPoly dq_g(d);
    if (a > 0)
        for (int j = 0; j < d; ++j) dq_g += q.derivative(j) * g.num_[j];
    for (int i = 0; i < d; ++i) {
        MPoly s(d);
        for (int j = 0; j < d; ++j) s += num_[i].derivative(j) * g.num_[j];
        if (a > 0) s = s * q - num_[i] * dq_g * Rational(a);
        out[i] = std::move(s);
    }
    return VectorField(std::move(out), q, a > 0 ? a + b + 1 : b);
}

VectorField lie_bracket(const VectorField& f, const VectorField& g)
{
    VectorField r = g.directional(f);
    r += f.directional(g) * Rational(-1);
    return r;
}

VectorField constant_field(int dim, int i, const Rational& c)
{
    std::vector<MPoly> num(dim, MPoly(dim));
    num.at(i) = MPoly::constant(dim, c);
    return VectorField(std::move(num));
}

VectorField linear_field(const std::vector<std::vector<Rational>>& A)
{
    const int d = static_cast<int>(A.size());
    std::vector<MPoly> num(d, MPoly(d));
    for (int i = 0; i < d; ++i) {
        if (static_cast<int>(A[i].size()) != d) throw std::invalid_argument("linear_field: matrix must be square");
        for (int j = 0; j < d; ++j) num[i] += MPoly::variable(d, j, A[i][j]);
    }
    return VectorField(std::move(num));
}

VectorField univariate_rational_field(int dim, int j, const std::vector<Rational>& num, const std::vector<Rational>& den,
                                      int power)
{
    auto lift = [dim](const std::vector<Rational>& c) {
        MPoly p(dim);
        for (std::size_t k = 0; k < c.size(); ++k) {
            MPoly::Exp e(dim, 0);
            e[0] = static_cast<int>(k);
            p.add(e, c[k]);
        }
        return p;
    };
    std::vector<MPoly> n(dim, MPoly(dim));
    n.at(j) = lift(num);
    return VectorField(std::move(n), lift(den), power);
}

VectorField substitute_bracket(const Bracket& b, const std::vector<VectorField>& generators)
{
    if (b.is_leaf()) {
        if (b.letter >= static_cast<int>(generators.size()))
            throw std::invalid_argument("substitute_bracket: unmapped letter");
        return generators[b.letter];
    }
    return lie_bracket(substitute_bracket(*b.left, generators), substitute_bracket(*b.right, generators));
}

std::vector<VectorField> substitute_basis(const HallBasis& basis, const std::vector<VectorField>& generators)
{
    std::vector<VectorField> r(basis.size());
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const auto& b = basis[i];
        if (b->is_leaf()) {
            if (b->letter >= static_cast<int>(generators.size()))
                throw std::invalid_argument("substitute_basis: unmapped letter");
            r[i] = generators[b->letter];
        } else {
            r[i] = lie_bracket(r[basis.left_index(i)], r[basis.right_index(i)]);
        }
    }
    return r;
}

std::vector<VectorField> optimal_pair()
{
    return {constant_field(2, 0), univariate_rational_field(2, 1, {1}, {1, -1}, 1)};
}

std::vector<VectorField> divergent_pair()
{
    std::vector<MPoly> n(2, MPoly(2));
    n[0] = MPoly::variable(2, 1);
    return {VectorField(std::move(n)), univariate_rational_field(2, 1, {1}, {1, -1}, 1)};
}

std::vector<VectorField> cubic_drift_system()
{
    std::vector<MPoly> n(3, MPoly(3));
    n[1] = MPoly::variable(3, 0) + MPoly::monomial(3, {2, 0, 0});
    n[2] = MPoly::monomial(3, {1, 1, 0});
    return {VectorField(std::move(n)), constant_field(3, 0)};
}

namespace {

nlohmann::json poly_json(const MPoly& p)
{
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [e, c] : p.terms()) a.push_back({{"c", c.get_str()}, {"e", e}});
    return a;
}

MPoly poly_from_json(const nlohmann::json& j, int d)
{
    MPoly p(d);
    for (const auto& t : j) {
        const auto& c = t.at("c");
        Rational r = c.is_string() ? Rational(c.get<std::string>()) : Rational(c.get<long>());
        p.add(t.at("e").get<std::vector<int>>(), canon(r));
    }
    return p;
}

std::vector<Rational> rats(const nlohmann::json& j)
{
    std::vector<Rational> r;
    for (const auto& c : j) r.push_back(canon(c.is_string() ? Rational(c.get<std::string>()) : Rational(c.get<long>())));
    return r;
}

}  // namespace

std::string VectorField::to_json() const
{
    nlohmann::json j;
    j["dimension"] = dim();
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& p : num_) comps.push_back(poly_json(p));
    j["components"] = comps;
    if (power_ > 0) {
        j["denominator"] = poly_json(base_);
        j["power"] = power_;
    }
    return j.dump();
}

VectorField VectorField::from_json(const std::string& text)
{
    auto j = nlohmann::json::parse(text);
    const int d = j.at("dimension").get<int>();
    if (j.contains("family")) {
        // Tagged members of the rational family.
        std::string tag = j.at("family");
        if (tag == "e1") return constant_field(d, 0);
        if (tag == "x2e1") {
            std::vector<MPoly> n(d, MPoly(d));
            n[0] = MPoly::variable(d, 1);
            return VectorField(std::move(n));
        }
        if (tag == "rational_e2")
            return univariate_rational_field(d, 1, rats(j.at("numerator")), rats(j.at("denominator")),
                                             j.value("power", 1));
        throw std::invalid_argument("VectorField: unknown family tag " + tag);
    }
    std::vector<MPoly> num;
    for (const auto& c : j.at("components")) num.push_back(poly_from_json(c, d));
    if (static_cast<int>(num.size()) != d) throw std::invalid_argument("VectorField: component count mismatch");
    MPoly base = j.contains("denominator") ? poly_from_json(j.at("denominator"), d) : MPoly::constant(d, 1);
    return VectorField(std::move(num), base, j.value("power", 0));
}

std::string VectorField::to_string(const std::vector<std::string>& names) const
{
    std::ostringstream os;
    os << '(';
    for (int i = 0; i < dim(); ++i) os << (i ? ", " : "") << num_[i].to_string(names);
    os << ')';
    if (power_ > 0) os << " / (" << base_.to_string(names) << ")^" << power_;
    return os.str();
}

// ---------------------------------------------------------------------------

FieldEval::CPoly FieldEval::compile(const MPoly& p)
{
    CPoly r;
    for (const auto& [e, c] : p.terms()) r.push_back({c.get_d(), e});
    return r;
}

double FieldEval::eval(const CPoly& p, const Eigen::VectorXd& x)
{
    double s = 0;
    for (const auto& t : p) {
        double m = t.c;
        for (std::size_t i = 0; i < t.e.size(); ++i)
            for (int k = 0; k < t.e[i]; ++k) m *= x[static_cast<Eigen::Index>(i)];
        s += m;
    }
    return s;
}

FieldEval::FieldEval(const VectorField& f) : d_(f.dim()), k_(f.power())
{
    for (int i = 0; i < d_; ++i) {
        const MPoly& N = f.numerators()[i];
        n_.push_back(compile(N));
        dn_.emplace_back();
        ddn_.emplace_back();
        for (int j = 0; j < d_; ++j) {
            MPoly Nj = N.derivative(j);
            dn_[i].push_back(compile(Nj));
            ddn_[i].emplace_back();
            for (int l = 0; l < d_; ++l) ddn_[i][j].push_back(compile(Nj.derivative(l)));
        }
    }
    q_ = compile(f.base());
    for (int j = 0; j < d_; ++j) {
        MPoly qj = f.base().derivative(j);
        dq_.push_back(compile(qj));
        ddq_.emplace_back();
        for (int l = 0; l < d_; ++l) ddq_[j].push_back(compile(qj.derivative(l)));
    }
}

double FieldEval::inv_base(const Eigen::VectorXd& x, double& q) const
{
    if (k_ == 0) {
        q = 1;
        return 1;
    }
    q = eval(q_, x);
    if (q == 0 || !std::isfinite(q)) throw std::domain_error("FieldEval: pole hit");
    return 1 / q;
}

Eigen::VectorXd FieldEval::value(const Eigen::VectorXd& x) const
{
    double q;
    double iq = inv_base(x, q);
    double s = std::pow(iq, k_);
    Eigen::VectorXd r(d_);
    for (int i = 0; i < d_; ++i) r[i] = eval(n_[i], x) * s;
    return r;
}

Eigen::MatrixXd FieldEval::jacobian(const Eigen::VectorXd& x) const
{
    double q;
    double iq = inv_base(x, q);
    double s = std::pow(iq, k_);
    Eigen::MatrixXd J(d_, d_);
    std::vector<double> dq(d_, 0.0);
    if (k_ > 0)
        for (int j = 0; j < d_; ++j) dq[j] = eval(dq_[j], x);
    for (int i = 0; i < d_; ++i) {
        double N = k_ > 0 ? eval(n_[i], x) : 0;
        for (int j = 0; j < d_; ++j) J(i, j) = s * (eval(dn_[i][j], x) - k_ * N * dq[j] * iq);
    }
    return J;
}

std::vector<Eigen::MatrixXd> FieldEval::hessian(const Eigen::VectorXd& x) const
{
    double q;
    double iq = inv_base(x, q);
    double s = std::pow(iq, k_);
    std::vector<double> dq(d_, 0.0);
    Eigen::MatrixXd ddq = Eigen::MatrixXd::Zero(d_, d_);
    if (k_ > 0)
        for (int j = 0; j < d_; ++j) {
            dq[j] = eval(dq_[j], x);
            for (int l = 0; l < d_; ++l) ddq(j, l) = eval(ddq_[j][l], x);
        }
    std::vector<Eigen::MatrixXd> H(d_, Eigen::MatrixXd(d_, d_));
    const double k = k_;
    for (int i = 0; i < d_; ++i) {
        double N = k_ > 0 ? eval(n_[i], x) : 0;
        std::vector<double> dN(d_);
        for (int j = 0; j < d_; ++j) dN[j] = k_ > 0 ? eval(dn_[i][j], x) : 0;
        for (int j = 0; j < d_; ++j)
            for (int l = 0; l < d_; ++l) {
                double v = eval(ddn_[i][j][l], x);
                if (k_ > 0)
                    v += -k * iq * (dN[j] * dq[l] + dN[l] * dq[j]) +
                         k * N * ((k + 1) * iq * iq * dq[j] * dq[l] - iq * ddq(j, l));
                H[i](j, l) = s * v;
            }
    }
    return H;
}

// ---------------------------------------------------------------------------

MajorantNorms majorant_norms(const VectorField& f, int k, const Rational& delta, const Rational& r)
{
    if (!f.is_polynomial()) throw std::invalid_argument("majorant_norms: polynomial field required");
    const int d = f.dim();
    std::vector<Rational> at(d, delta);
    MajorantNorms out{0, 0};
    for (const auto& comp : f.numerators()) {
        // Walk every multi-index alpha reachable by differentiation.
        std::map<MPoly::Exp, MPoly> level{{MPoly::Exp(d, 0), comp}};
        int order = 0;
        Rational rp = 1;
        while (!level.empty()) {
            std::map<MPoly::Exp, MPoly> next;
            for (const auto& [alpha, p] : level) {
                Rational fact = 1;
                for (int a : alpha)
                    for (int i = 2; i <= a; ++i) fact *= i;
                Rational maj = p.abs_coeffs()(at) / fact;
                if (order <= k) out.ck_upper += maj;
                out.analytic_upper += rp * maj;
                // Differentiate only in coordinates >= the last one used, so each
                // alpha is generated once.
                int last = 0;
                for (int j = 0; j < d; ++j)
                    if (alpha[j]) last = j;
                for (int i = last; i < d; ++i) {
                    MPoly q = p.derivative(i);
                    if (q.is_zero()) continue;
                    MPoly::Exp b = alpha;
                    ++b[i];
                    next.emplace(b, std::move(q));
                }
            }
            level = std::move(next);
            ++order;
            rp *= r;
        }
    }
    out.ck_upper.canonicalize();
    out.analytic_upper.canonicalize();
    return out;
}

}  // namespace flowexp
