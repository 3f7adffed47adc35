#include "flowexp/expansions.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace flowexp {

namespace {

using nlohmann::json;

Rational rat(long p, long q = 1)
{
    Rational r(p, q);
    r.canonicalize();
    return r;
}

Rational factorial(int n)
{
    Rational f = 1;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

VectorField zero_field(int d)
{
    return VectorField(std::vector<MPoly>(d, MPoly(d)));
}

VectorField identity_field(int d)
{
    std::vector<std::vector<Rational>> I(d, std::vector<Rational>(d, 0));
    for (int i = 0; i < d; ++i) I[i][i] = 1;
    return linear_field(I);
}

std::vector<double> to_vec(const Eigen::VectorXd& x)
{
    return std::vector<double>(x.data(), x.data() + x.size());
}

Eigen::VectorXd from_vec(const std::vector<double>& v)
{
    Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) x[static_cast<Eigen::Index>(i)] = v[i];
    return x;
}

Eigen::VectorXd eval_exact(const VectorField& f, const Eigen::VectorXd& p)
{
    return FieldEval(f).value(p);
}

Eigen::VectorXd flow(const VectorField& g, const Eigen::VectorXd& x, double tol)
{
    if (g.is_zero()) return x;
    return autonomous_flow(g, x, tol).x;
}

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w)
{
    x.assign(n, 0);
    w.assign(n, 0);
    for (int i = 0; i < n; ++i) {
        double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1, p1 = z;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            double dp = n * (z * p1 - p0) / (z * z - 1);
            double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) {
                x[i] = z;
                w[i] = 2 / ((1 - z * z) * dp * dp);
                break;
            }
        }
        if (n == 1) {
            x[i] = 0;
            w[i] = 2;
        }
    }
    std::reverse(x.begin(), x.end());
    std::reverse(w.begin(), w.end());
}

std::vector<double> control_breaks(const ControlTuple& u, double t)
{
    std::vector<double> br{0.0, t};
    for (const auto& c : u)
        for (const auto& b : c.breakpoints()) {
            double v = b.get_d();
            if (v > 0 && v < t) br.push_back(v);
        }
    std::sort(br.begin(), br.end());
    br.erase(std::unique(br.begin(), br.end()), br.end());
    return br;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string ErrorReport::to_json() const
{
    json j;
    j["method"] = method;
    j["M"] = M;
    j["N0"] = N0;
    j["basis"] = basis_id;
    j["scale_name"] = scale_name;
    j["scale"] = scale;
    j["approx"] = to_vec(approx);
    j["oracle"] = to_vec(oracle);
    j["error"] = error;
    j["series"] = json::array();
    for (const auto& [s, e] : series) j["series"].push_back({s, e});
    j["extra"] = json::object();
    for (const auto& [k, v] : extra) j["extra"][k] = v;
    return j.dump();
}

ErrorReport ErrorReport::from_json(const std::string& text)
{
    json j = json::parse(text);
    ErrorReport r;
    r.method = j.at("method").get<std::string>();
    r.M = j.at("M").get<int>();
    r.N0 = j.at("N0").get<int>();
    r.basis_id = j.at("basis").get<std::string>();
    r.scale_name = j.at("scale_name").get<std::string>();
    r.scale = j.at("scale").get<double>();
    r.approx = from_vec(j.at("approx").get<std::vector<double>>());
    r.oracle = from_vec(j.at("oracle").get<std::vector<double>>());
    r.error = j.at("error").get<double>();
    for (const auto& p : j.at("series")) r.series.emplace_back(p[0].get<double>(), p[1].get<double>());
    for (const auto& [k, v] : j.at("extra").items()) r.extra[k] = v.get<double>();
    return r;
}

std::string OrderFit::to_json() const
{
    json j;
    j["slope"] = slope;
    j["intercept"] = intercept;
    j["residual"] = residual;
    j["scale_min"] = scale_min;
    j["scale_max"] = scale_max;
    j["points"] = points;
    return j.dump();
}

OrderFit order_fit(const std::vector<std::pair<double, double>>& pairs, double floor)
{
    std::vector<std::pair<double, double>> pts;
    for (const auto& [s, e] : pairs)
        if (s > 0 && e > floor && std::isfinite(e)) pts.emplace_back(std::log(s), std::log(e));
    if (pts.size() < 4) throw std::invalid_argument("order_fit: fewer than 4 usable points");
    double n = static_cast<double>(pts.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [x, y] : pts) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double den = n * sxx - sx * sx;
    if (den == 0) throw std::invalid_argument("order_fit: scales are not distinct");
    OrderFit f;
    f.slope = (n * sxy - sx * sy) / den;
    f.intercept = (sy - f.slope * sx) / n;
    double r = 0;
    for (const auto& [x, y] : pts) r += std::pow(y - f.intercept - f.slope * x, 2);
    f.residual = std::sqrt(r / n);
    f.scale_min = std::exp(pts.front().first);
    f.scale_max = f.scale_min;
    for (const auto& [x, y] : pts) {
        f.scale_min = std::min(f.scale_min, std::exp(x));
        f.scale_max = std::max(f.scale_max, std::exp(x));
    }
    f.points = static_cast<int>(pts.size());
    return f;
}

bool Truncation::keep(const Word& w) const
{
    if (drift < 0 || N0 < 0) return static_cast<int>(w.size()) <= M;
    int n0 = count_letter(w, drift);
    return static_cast<int>(w.size()) - n0 <= M && n0 <= N0;
}

bool Truncation::keep(const Bracket& b) const
{
    if (drift < 0 || N0 < 0) return b.length <= M;
    int n0 = b.count(drift);
    return b.length - n0 <= M && n0 <= N0;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd control_oracle(const std::vector<VectorField>& f, const ControlTuple& a, const Eigen::VectorXd& p,
                               double t, double tol)
{
    if (f.size() != a.size()) throw std::invalid_argument("control_oracle: one control per field");
    OdeProblem prob;
    for (std::size_t i = 0; i < f.size(); ++i) prob.inputs.push_back({Channel::from_control(a[i]), f[i]});
    prob.p = p;
    prob.t = t;
    prob.tol = tol;
    return solve_reference(prob).x;
}

Eigen::VectorXd chen_fliess_eval(const std::vector<VectorField>& f, const ControlTuple& a, const Eigen::VectorXd& p,
                                 const Rational& t, const Truncation& tr)
{
    const int d = static_cast<int>(p.size());
    if (f.size() != a.size()) throw std::invalid_argument("chen_fliess_eval: one control per field");
    int N = tr.M;
    if (tr.drift >= 0 && tr.N0 >= 0) N = tr.M + tr.N0;
    auto keep = [&](const Word& w) { return tr.keep(w); };
    NCSeries S = word_series(a, t, N, keep);
    // h_w = (f_w1 . grad) ... (f_wn . grad) Id, built from the suffix.
    std::map<Word, VectorField> memo;
    memo.emplace(Word(), identity_field(d));
    std::function<const VectorField&(const Word&)> op = [&](const Word& w) -> const VectorField& {
        auto it = memo.find(w);
        if (it != memo.end()) return it->second;
        VectorField h = op(w.substr(1)).directional(f[static_cast<unsigned char>(w[0])]);
        return memo.emplace(w, std::move(h)).first->second;
    };
    Eigen::VectorXd x = p;
    for (const auto& [w, c] : S.terms()) {
        if (w.empty() || c == 0) continue;
        x += c.get_d() * eval_exact(op(w), p);
    }
    return x;
}

ErrorReport chen_fliess_report(const std::vector<VectorField>& f, const ControlTuple& a, const Eigen::VectorXd& p,
                               const Rational& t, const Truncation& tr, double tol)
{
    ErrorReport r;
    r.method = "chen-fliess";
    r.M = tr.M;
    r.N0 = tr.N0;
    r.scale_name = "t";
    r.scale = t.get_d();
    r.approx = chen_fliess_eval(f, a, p, t, tr);
    r.oracle = control_oracle(f, a, p, t.get_d(), tol);
    r.error = (r.approx - r.oracle).norm();
    return r;
}

VectorField magnus_field(const HallBasis& basis, const std::vector<VectorField>& f, const ControlTuple& a,
                         const Rational& t, const Truncation& tr)
{
    int len = tr.M;
    if (tr.drift >= 0 && tr.N0 >= 0) len = tr.M + tr.N0;
    len = std::min(len, basis.max_length());
    CoordTable z = coord_first_kind(basis, a, t, len);
    auto fb = substitute_basis(basis, f);
    VectorField Z = zero_field(f.at(0).dim());
    for (const auto& e : z.entries) {
        if (e.value == 0 || !tr.keep(*e.b) || fb[e.index].is_zero()) continue;
        Z += fb[e.index] * e.value;
    }
    return Z;
}

ErrorReport magnus_eval(const HallBasis& basis, const std::vector<VectorField>& f, const ControlTuple& a,
                        const Eigen::VectorXd& p, const Rational& t, const Truncation& tr, double tol,
                        VectorField* z_out)
{
    ErrorReport r;
    r.method = "magnus";
    r.M = tr.M;
    r.N0 = tr.N0;
    r.basis_id = fmt::format("hall(q={},len={})", basis.alphabet_size(), basis.max_length());
    r.scale_name = "t";
    r.scale = t.get_d();
    VectorField Z = magnus_field(basis, f, a, t, tr);
    r.approx = flow(Z, p, tol);
    r.oracle = control_oracle(f, a, p, t.get_d(), tol);
    r.error = (r.approx - r.oracle).norm();
    if (z_out) *z_out = Z;
    return r;
}

ErrorReport cbhd_eval(const std::vector<VectorField>& f, const Rational& eps, const Eigen::VectorXd& p, int M,
                      double tol)
{
    const int n = static_cast<int>(f.size());
    HallBasis B = build_hall_basis(n, M);
    CoordTable alpha = cbhd_coeffs(n, B, M);
    auto fb = substitute_basis(B, f);
    VectorField Z = zero_field(f.at(0).dim());
    for (const auto& e : alpha.entries) {
        if (e.value == 0 || fb[e.index].is_zero()) continue;
        Rational s = e.value;
        for (int i = 0; i < e.b->length; ++i) s *= eps;
        Z += fb[e.index] * s;
    }
    ErrorReport r;
    r.method = "cbhd";
    r.M = M;
    r.basis_id = fmt::format("hall(q={},len={})", n, M);
    r.scale_name = "eps";
    r.scale = eps.get_d();
    r.approx = flow(Z, p, tol);
    Eigen::VectorXd x = p;
    for (const auto& g : f) x = flow(g * eps, x, tol);
    r.oracle = x;
    r.error = (r.approx - r.oracle).norm();
    return r;
}

Eigen::MatrixXd cbhd_matrix(const std::vector<Eigen::MatrixXd>& A, int M)
{
    const int n = static_cast<int>(A.size());
    HallBasis B = build_hall_basis(n, M);
    CoordTable alpha = cbhd_coeffs(n, B, M);
    std::vector<Eigen::MatrixXd> img(B.size());
    Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(A.at(0).rows(), A.at(0).cols());
    for (std::size_t i = 0; i < B.size(); ++i) {
        if (B[i]->is_leaf())
            img[i] = A[B[i]->letter];
        else {
            const auto& l = img[B.left_index(i)];
            const auto& r = img[B.right_index(i)];
            img[i] = l * r - r * l;
        }
    }
    for (const auto& e : alpha.entries) Z += e.value.get_d() * img[e.index];
    return Z;
}

// ---------------------------------------------------------------------------

Eigen::VectorXd interaction_log_field(const VectorField& f0, const std::vector<VectorField>& f, const ControlTuple& u,
                                      double t, int M, const Eigen::VectorXd& y, double tol, int nodes)
{
    if (M < 1 || M > 2) throw std::invalid_argument("interaction_log_field: only M = 1, 2");
    const int d = static_cast<int>(y.size());
    std::vector<Channel> ch;
    for (const auto& c : u) ch.push_back(Channel::from_control(c));
    std::vector<double> gx, gw;
    gauss_legendre(nodes, gx, gw);
    auto br = control_breaks(u, t);

    // Within-piece integration matrix S(j,k) = int_a^{x_j} l_k, from Gauss on [a, x_j].
    Eigen::MatrixXd S(nodes, nodes);
    for (int j = 0; j < nodes; ++j) {
        double xj = gx[j];
        for (int k = 0; k < nodes; ++k) {
            double acc = 0;
            for (int q = 0; q < nodes; ++q) {
                double s = -1 + (xj + 1) * (gx[q] + 1) / 2;
                double lk = 1;
                for (int m = 0; m < nodes; ++m)
                    if (m != k) lk *= (s - gx[m]) / (gx[k] - gx[m]);
                acc += gw[q] * (xj + 1) / 2 * lk;
            }
            S(j, k) = acc;
        }
    }

    Eigen::VectorXd Z1 = Eigen::VectorXd::Zero(d), Z2 = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd Gacc = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd DGacc = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t piece = 0; piece + 1 < br.size(); ++piece) {
        double a = br[piece], b = br[piece + 1], half = (b - a) / 2, mid = (a + b) / 2;
        std::vector<Eigen::VectorXd> G(nodes);
        std::vector<Eigen::MatrixXd> DG(nodes);
        for (int j = 0; j < nodes; ++j) {
            double s = mid + half * gx[j];
            G[j] = Eigen::VectorXd::Zero(d);
            DG[j] = Eigen::MatrixXd::Zero(d, d);
            for (std::size_t i = 0; i < f.size(); ++i) {
                double ui = ch[i].f(s, mid);
                if (ui == 0) continue;
                if (M == 1) {
                    G[j] += ui * pushforward_eval(f0, f[i], t, s, y, tol);
                } else {
                    auto [g, Dg] = pushforward_eval_d(f0, f[i], t, s, y, tol);
                    G[j] += ui * g;
                    DG[j] += ui * Dg;
                }
            }
        }
        for (int j = 0; j < nodes; ++j) {
            double w = gw[j] * half;
            Z1 += w * G[j];
            if (M == 2) {
                Eigen::VectorXd Gt = Gacc;
                Eigen::MatrixXd DGt = DGacc;
                for (int k = 0; k < nodes; ++k) {
                    Gt += half * S(j, k) * G[k];
                    DGt += half * S(j, k) * DG[k];
                }
                Z2 += 0.5 * w * (DG[j] * Gt - DGt * G[j]);
            }
        }
        for (int j = 0; j < nodes; ++j) {
            Gacc += gw[j] * half * G[j];
            DGacc += gw[j] * half * DG[j];
        }
    }
    return Z1 + Z2;
}

InteractionResult interaction_magnus_eval(const VectorField& f0, const std::vector<VectorField>& f,
                                          const ControlTuple& u, const Eigen::VectorXd& p, const Rational& t, int M,
                                          int N0, double tol, bool second_route)
{
    if (f.size() != u.size()) throw std::invalid_argument("interaction_magnus_eval: one control per field");
    const int m = static_cast<int>(f.size());
    std::vector<VectorField> gens{f0};
    gens.insert(gens.end(), f.begin(), f.end());
    HallBasis B = build_hall_basis(m + 1, M + N0, OrderPolicy::length_then_lex, {}, [&](const std::vector<int>& c) {
        int n0 = c[0], n = 0;
        for (std::size_t i = 1; i < c.size(); ++i) n += c[i];
        return n <= M && n0 <= N0;
    });
    CoordTable eta = coord_pseudo_first_kind(B, u, t, M, N0);
    auto fb = substitute_basis(B, gens);
    InteractionResult out;
    out.z = zero_field(f0.dim());
    for (const auto& e : eta.entries)
        if (e.value != 0 && !fb[e.index].is_zero()) out.z += fb[e.index] * e.value;

    ErrorReport& r = out.report;
    r.method = "interaction";
    r.M = M;
    r.N0 = N0;
    r.basis_id = fmt::format("hall(q={},n<={},n0<={})", m + 1, M, N0);
    r.scale_name = "u_l1";
    double l1 = 0;
    for (const auto& c : u) l1 += c.l1_norm(t);
    r.scale = l1;
    Eigen::VectorXd x0 = flow(f0 * t, p, tol);
    r.approx = flow(out.z, x0, tol);
    std::vector<VectorField> all{f0};
    all.insert(all.end(), f.begin(), f.end());
    ControlTuple a{Control::constant(1, u.at(0).horizon())};
    a.insert(a.end(), u.begin(), u.end());
    r.oracle = control_oracle(all, a, p, t.get_d(), tol);
    r.error = (r.approx - r.oracle).norm();
    if (second_route) {
        const double td = t.get_d();
        const double itol = std::max(tol, 1e-12);
        OdeRhs rhs = [&](double, double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
            dy = interaction_log_field(f0, f, u, td, M, y, itol);
        };
        OdeOptions opt;
        opt.tol = 1e-10;
        out.route_ii = integrate(rhs, x0, 0, 1, opt);
        out.route_gap = (out.route_ii - r.approx).norm();
        r.extra["route_gap"] = out.route_gap;
    }
    return out;
}

// ---------------------------------------------------------------------------

ErrorReport sussmann_eval(const HallBasis& basis, const std::vector<VectorField>& f, const ControlTuple& a,
                          const Eigen::VectorXd& p, const Rational& t, SussmannFilter filter, int M, int N0,
                          double tol)
{
    CoordTable xi = coord_second_kind(basis, a, t);
    auto fb = substitute_basis(basis, f);
    auto kept = [&](const Bracket& b) {
        if (filter == SussmannFilter::length) return b.length <= M;
        int n0 = b.count(0);
        return b.length - n0 <= M && n0 <= N0;
    };
    std::vector<const CoordEntry*> order;
    for (const auto& e : xi.entries) order.push_back(&e);
    std::sort(order.begin(), order.end(), [](auto* x, auto* y) { return x->index > y->index; });
    Eigen::VectorXd x = p;
    double tail = 0;
    int used = 0;
    for (const auto* e : order) {
        if (!kept(*e->b) || e->value == 0 || fb[e->index].is_zero()) continue;
        x = flow(fb[e->index] * e->value, x, tol);
        tail += std::abs(e->value.get_d());
        ++used;
    }
    ErrorReport r;
    r.method = "sussmann";
    r.M = M;
    r.N0 = filter == SussmannFilter::control_degree ? N0 : -1;
    r.basis_id = fmt::format("hall(q={},len={})", basis.alphabet_size(), basis.max_length());
    r.scale_name = "u_l1";
    double l1 = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (filter == SussmannFilter::length || i != 0) l1 += a[i].l1_norm(t);
    r.scale = l1;
    r.approx = x;
    r.oracle = control_oracle(f, a, p, t.get_d(), tol);
    r.error = (r.approx - r.oracle).norm();
    r.extra["factors"] = used;
    r.extra["sum_abs_xi"] = tail;
    return r;
}

ErrorReport sussmann_matrix_eval(const HallBasis& basis, const std::vector<Eigen::MatrixXd>& A, const ControlTuple& a,
                                 const Eigen::VectorXd& p, const Rational& t, std::size_t prefix, double tol)
{
    if (A.size() != a.size()) throw std::invalid_argument("sussmann_matrix_eval: one control per matrix");
    prefix = std::min(prefix, basis.size());
    CoordTable xi = coord_second_kind(basis, a, t);
    std::vector<double> xiv(basis.size(), 0);
    for (const auto& e : xi.entries) xiv[e.index] = e.value.get_d();
    // Images as linear fields: [Ax, Bx] = (BA - AB) x.
    std::vector<Eigen::MatrixXd> img(basis.size());
    for (std::size_t i = 0; i < basis.size(); ++i) {
        if (basis[i]->is_leaf())
            img[i] = A[basis[i]->letter];
        else {
            const auto& l = img[basis.left_index(i)];
            const auto& r = img[basis.right_index(i)];
            img[i] = r * l - l * r;
        }
    }
    Eigen::VectorXd x = p;
    double tail = 0;
    for (std::size_t i = prefix; i-- > 0;) {
        x = matrix_exp(Eigen::MatrixXd(xiv[i] * img[i])) * x;
        tail += std::abs(xiv[i]) * img[i].norm();
    }
    const int d = static_cast<int>(p.size());
    std::vector<Channel> ch;
    OdeOptions opt;
    opt.tol = tol;
    for (const auto& c : a) {
        ch.push_back(Channel::from_control(c));
        opt.breaks.insert(opt.breaks.end(), ch.back().breaks.begin(), ch.back().breaks.end());
    }
    OdeRhs rhs = [&](double s, double in, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(d, d);
        for (std::size_t i = 0; i < A.size(); ++i) K += ch[i].f(s, in) * A[i];
        dy = K * y;
    };
    ErrorReport r;
    r.method = "sussmann-matrix";
    r.M = static_cast<int>(prefix);
    r.basis_id = fmt::format("hall(q={},len={})", basis.alphabet_size(), basis.max_length());
    r.scale_name = "u_l1";
    double l1 = 0;
    for (const auto& c : a) l1 += c.l1_norm(t);
    r.scale = l1;
    r.approx = x;
    r.oracle = integrate(rhs, p, 0, t.get_d(), opt);
    r.error = (r.approx - r.oracle).norm();
    r.extra["tail_sum"] = tail;
    return r;
}

Eigen::MatrixXcd matrix_bracket_image(const Bracket& b, const std::vector<Eigen::MatrixXcd>& A)
{
    if (b.is_leaf()) return A.at(b.letter);
    Eigen::MatrixXcd l = matrix_bracket_image(*b.left, A), r = matrix_bracket_image(*b.right, A);
    return l * r - r * l;
}

// ---------------------------------------------------------------------------

namespace {

// Letters W_{l,k} -> ad^l_{f0} ad^k_{f1}(f0), id l*K + (k-1).
struct WAlphabet {
    int L = 0, K = 0;
    int size() const { return (L + 1) * K; }
    int id(int l, int k) const { return l * K + (k - 1); }
    int l_of(int id) const { return id / K; }
    int k_of(int id) const { return id % K + 1; }
};

ControlTuple w_controls(const WAlphabet& W, const Control& u, const Rational& t)
{
    Control U = u.primitive();
    ControlTuple c;
    for (int l = 0; l <= W.L; ++l)
        for (int k = 1; k <= W.K; ++k) c.push_back(U.power(k).times_poly(Poly1::shifted_power(t, l)) * (1 / factorial(k)));
    return c;
}

// log of the W-alphabet word series, keeping sum k <= K and sum (l + shift) <= lcap.
NCSeries w_log(const WAlphabet& W, const Control& u, const Rational& t, int shift, int lcap)
{
    auto keep = [&](const Word& w) {
        int sk = 0, sl = 0;
        for (char c : w) {
            sk += W.k_of(static_cast<unsigned char>(c));
            sl += W.l_of(static_cast<unsigned char>(c)) + shift;
        }
        return sk <= W.K && sl <= lcap;
    };
    NCSeries S = word_series(w_controls(W, u, t), t, W.K, keep);
    return nc_log(S, keep);
}

}  // namespace

VectorField scalar_refined_field(const VectorField& f0, const VectorField& f1, const Control& u, const Rational& t,
                                 int M, int L)
{
    WAlphabet W{L, M};
    NCSeries Y = w_log(W, u, t, 0, L);
    HallBasis B = build_hall_basis(W.size(), M, OrderPolicy::length_then_lex, {}, [&](const std::vector<int>& c) {
        int sk = 0, sl = 0;
        for (int i = 0; i < static_cast<int>(c.size()); ++i) {
            sk += c[i] * W.k_of(i);
            sl += c[i] * W.l_of(i);
        }
        return sk <= M && sl <= L;
    });
    auto coeffs = hall_decompose(Y, B);
    std::vector<VectorField> gens;
    for (int id = 0; id < W.size(); ++id) {
        VectorField g = f0;
        for (int k = 0; k < W.k_of(id); ++k) g = lie_bracket(f1, g);
        for (int l = 0; l < W.l_of(id); ++l) g = lie_bracket(f0, g);
        gens.push_back(g);
    }
    auto fb = substitute_basis(B, gens);
    VectorField Z = zero_field(f0.dim());
    for (const auto& [i, c] : coeffs)
        if (c != 0 && !fb[i].is_zero()) Z += fb[i] * c;
    return Z;
}

ErrorReport scalar_refined_eval(const VectorField& f0, const VectorField& f1, const Control& u,
                                const Eigen::VectorXd& p, const Rational& t, int M, int L, double tol)
{
    VectorField Y = scalar_refined_field(f0, f1, u, t, M, L);
    Rational Ut = u.primitive()(t);
    Eigen::VectorXd x = flow(f0 * t, p, tol);
    x = flow(Y, x, tol);
    x = flow(f1 * Ut, x, tol);
    ErrorReport r;
    r.method = "scalar-refined";
    r.M = M;
    r.N0 = L;
    r.scale_name = "U_linf";
    r.scale = u.primitive().linf_norm();
    r.approx = x;
    r.oracle = control_oracle({f0, f1}, {Control::constant(1, u.horizon()), u}, p, t.get_d(), tol);
    r.error = (r.approx - r.oracle).norm();
    r.extra["U_t"] = Ut.get_d();
    return r;
}

Eigen::VectorXd chen_fliess_U_eval(const VectorField& f0, const VectorField& f1, const Control& u,
                                   const Eigen::VectorXd& p, const Rational& t, int M, int n0cap)
{
    const int d = f0.dim();
    std::vector<VectorField> g{f0};
    for (int k = 1; k <= M; ++k) g.push_back(lie_bracket(f1, g.back()));
    Rational Ut = u.primitive()(t);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
    VectorField base = identity_field(d);
    for (int l = 0; l <= M; ++l) {
        if (l > 0) base = base.directional(f1);
        Rational ul = 1;
        for (int i = 0; i < l; ++i) ul *= Ut;
        ul /= factorial(l);
        // sequences k_1..k_n, built from the last element backwards
        std::vector<int> seq;
        std::function<void(const VectorField&, int, int)> rec = [&](const VectorField& h, int budget, int zeros) {
            std::vector<int> k(seq.rbegin(), seq.rend());
            Rational c = ul;
            for (int ki : k) c /= factorial(ki);
            if (!k.empty()) c *= iterated_U_integral(k, u, t);
            if (c != 0) x += c.get_d() * eval_exact(h, p);
            for (int kk = 0; kk <= budget; ++kk) {
                if (kk == 0 && zeros >= n0cap) continue;
                if (g[kk].is_zero()) continue;
                seq.push_back(kk);
                rec(h.directional(g[kk]), budget - kk, zeros + (kk == 0));
                seq.pop_back();
            }
        };
        rec(base, M - l, 0);
    }
    return x;
}

IdentityCheck formal_zm_cbh_identity(const Control& u, const Rational& t, int r, int nu)
{
    if (r < 0 || nu < 0) throw std::invalid_argument("formal_zm_cbh_identity: negative degree");
    const int N = std::max(1, r + nu);
    auto keepX = [&](const Word& w) {
        int n0 = count_letter(w, 0);
        return n0 <= nu && static_cast<int>(w.size()) - n0 <= r;
    };
    auto project = [&](const NCSeries& s) {
        NCSeries o(N);
        for (const auto& [w, c] : s.terms()) {
            int n0 = count_letter(w, 0);
            if (n0 == nu && static_cast<int>(w.size()) - n0 == r) o.add(w, c);
        }
        return o;
    };
    // Z side: log(e^{-t X0} S(t)).
    NCSeries S = word_series({Control::constant(1, u.horizon()), u}, t, N, keepX);
    NCSeries E = nc_exp(NCSeries::letter(N, 0, -t)).filtered(keepX);
    NCSeries Z = nc_log(nc_mul(E, S).filtered(keepX), keepX);

    // Y side: W letters with n0 = l + 1 <= nu and k <= r.
    NCSeries Y(N);
    if (r >= 1 && nu >= 1) {
        WAlphabet W{nu - 1, r};
        NCSeries LW = w_log(W, u, t, 1, nu);
        std::vector<NCSeries> images;
        auto x0 = make_leaf(0, 2), x1 = make_leaf(1, 2);
        for (int id = 0; id < W.size(); ++id) {
            auto b = make_ad(x0, W.l_of(id), make_ad(x1, W.k_of(id), x0));
            images.push_back(expand_to_words(*b, N));
        }
        Y = nc_substitute(LW, images, N, keepX);
    }
    NCSeries UX = NCSeries::letter(N, 1, u.primitive()(t));
    NCSeries C = nc_log(nc_mul(nc_exp(Y).filtered(keepX), nc_exp(UX).filtered(keepX)).filtered(keepX), keepX);
    IdentityCheck out;
    out.lhs = project(Z);
    out.rhs = project(C);
    out.equal = out.lhs == out.rhs;
    return out;
}

// ---------------------------------------------------------------------------

CbhDivergence cbh_divergence(const Rational& eps, int Mp_max, int numeric_M, double tol)
{
    if (!(eps > 0 && eps < 1)) throw std::invalid_argument("cbh_divergence: need 0 < eps < 1");
    auto B = bernoulli_table(2 * Mp_max + 2);
    CbhDivergence out;
    Rational theta = 1 - eps / 2;
    theta.canonicalize();
    Rational e2 = eps * eps, pw = 1;
    Rational one_minus = 1 - eps;
    Rational inv2 = 1 / (one_minus * one_minus), invpw = 1;
    Rational flow_rat = -eps / 2 * (1 / one_minus - 1);
    flow_rat.canonicalize();
    const double ln_part = -std::log1p(-eps.get_d());
    for (int Mp = 0; Mp <= Mp_max; ++Mp) {
        ThetaRow row;
        row.Mp = Mp;
        if (Mp > 0) {
            pw *= e2;
            invpw *= inv2;
            Rational term = B[2 * Mp] * pw;
            term.canonicalize();
            theta += term;
            row.term = term;
            flow_rat += B[2 * Mp] / (2 * Mp) * pw * (invpw - 1);
            flow_rat.canonicalize();
        }
        theta.canonicalize();
        row.theta = theta;
        row.flow_x2 = ln_part + flow_rat.get_d();
        out.rows.push_back(row);
    }
    // k*: from here on every ratio |term_{k+1} / term_k| exceeds 1.
    for (int k = Mp_max - 1; k >= 1; --k) {
        Rational ratio = out.rows[k + 1].term / out.rows[k].term;
        if (abs(ratio) > 1)
            out.k_star = k;
        else
            break;
    }
    if (Mp_max >= 10) {
        Rational ref = abs(out.rows[10].theta) * 1000000;
        for (int Mp = 10; Mp <= Mp_max; ++Mp)
            if (abs(out.rows[Mp].theta) > ref) {
                out.first_million = Mp;
                break;
            }
    }
    if (numeric_M > 0) {
        auto F = optimal_pair();
        for (int M = 1; M <= numeric_M; ++M) {
            auto rep = cbhd_eval({F[1], F[0]}, eps, Eigen::VectorXd::Zero(2), M, tol);
            out.small_M_errors.emplace_back(M, rep.error);
        }
    }
    return out;
}

std::vector<MagnusControlTerm> usual_magnus_control_counterexample(const Rational& t, int n_max)
{
    auto F = divergent_pair();
    Control a0 = Control::constant(1, t), a1 = Control::from_poly(Poly1({0, 1}), t);
    std::vector<MagnusControlTerm> out;
    VectorField ad = F[1];
    FieldEval E;
    for (int k = 0; k <= n_max; ++k) {
        if (k > 0) ad = lie_bracket(F[0], ad);
        MagnusControlTerm term;
        term.k = k;
        term.zeta = first_kind_ad_closed_form(k, a0, a1, t);
        term.center = term.zeta * ad({rat(0), rat(1, 2)})[1];
        term.vanishes_on_axis = k >= 1 && ad({rat(1, 5), rat(0)})[1] == 0 && ad({rat(-1, 7), rat(0)})[1] == 0;
        E = FieldEval(ad);
        double z = term.zeta.get_d(), sup = 0;
        for (int s = 0; s < 64; ++s) {
            double th = 2 * M_PI * s / 64;
            for (double rad : {0.05, 0.1}) {
                Eigen::VectorXd x(2);
                x << rad * std::cos(th), 0.5 + rad * std::sin(th);
                sup = std::max(sup, std::abs(z * E.value(x)[1]));
            }
        }
        term.ball_sup = std::max(sup, std::abs(term.center.get_d()));
        out.push_back(term);
    }
    return out;
}

std::vector<Eigen::MatrixXd> cross_product_matrices()
{
    std::vector<Eigen::MatrixXd> F(3, Eigen::MatrixXd::Zero(3, 3));
    for (int j = 0; j < 3; ++j)
        for (int c = 0; c < 3; ++c) {
            Eigen::Vector3d e = Eigen::Vector3d::Zero(), x = Eigen::Vector3d::Zero();
            e[j] = 1;
            x[c] = 1;
            F[j].col(c) = e.cross(x);
        }
    return F;
}

MatrixSussmannDivergence matrix_sussmann_divergence(int k_max, double t_over_gamma)
{
    // xi_b = c_b t^{|b|} under u = (1, 1). For b = ad^m_{b1}(b2):
    // xi_b' = xi_{b1}^m / m! xi_{b2}', so c_b = c1^m c2 |b2| / (m! |b|).
    struct Node {
        BracketPtr b;
        Rational c;
    };
    auto leaf1 = make_leaf(0, 2), leaf2 = make_leaf(1, 2);
    Node n1{leaf1, 1}, n2{leaf2, 1};
    MatrixSussmannDivergence out;
    auto record = [&](int k, const std::string& which, const Node& n) {
        MatrixSussmannRow row;
        row.k = k;
        row.which = which;
        row.length = n.b->length;
        row.alpha = 1 / (n.c * n.b->length);
        row.alpha.canonicalize();
        row.gamma_k = std::exp(std::log(row.alpha.get_d() * row.length) / row.length);
        out.rows.push_back(row);
    };
    std::vector<Node> chain1{n1}, chain2{n2};
    record(0, "b1", n1);
    record(0, "b2", n2);
    for (int k = 0; k < k_max; ++k) {
        const Node &p = chain1.back(), &q = chain2.back();
        Node c{make_bracket(p.b, q.b), p.c * q.c * q.b->length / (p.b->length + q.b->length)};
        // b^1_{k+1} = [b^2_k, c] = ad_{b^2_k}(c); b^2_{k+1} = [b^1_k, c] = ad^2_{b^1_k}(b^2_k)
        Node next1{make_bracket(q.b, c.b), q.c * c.c * c.b->length / (q.b->length + c.b->length)};
        int len2 = 2 * p.b->length + q.b->length;
        Node next2{make_bracket(p.b, c.b), p.c * p.c * q.c * q.b->length / (2 * len2)};
        next1.c.canonicalize();
        next2.c.canonicalize();
        chain1.push_back(next1);
        chain2.push_back(next2);
        record(k + 1, "b1", next1);
        record(k + 1, "b2", next2);
    }
    for (const auto& r : out.rows)
        if (r.which == "b1") out.gamma = std::max(out.gamma, r.gamma_k);
    out.t = t_over_gamma * out.gamma;

    auto F = cross_product_matrices();
    const std::complex<double> I(0, 1), rot = std::exp(I * (M_PI / 6));
    std::vector<Eigen::MatrixXcd> A{rot * F[0].cast<std::complex<double>>(), rot * F[1].cast<std::complex<double>>()};
    out.pattern_ok = true;
    for (int k = 0; k <= k_max; ++k) {
        Eigen::MatrixXcd A1 = matrix_bracket_image(*chain1[k].b, A);
        Eigen::MatrixXcd A2 = matrix_bracket_image(*chain2[k].b, A);
        if (k >= 1) {
            Eigen::MatrixXcd e1 = (k % 2 ? 1.0 : -1.0) * I * F[0].cast<std::complex<double>>();
            Eigen::MatrixXcd e2 = -I * F[1].cast<std::complex<double>>();
            if ((A1 - e1).norm() > 1e-9 || (A2 - e2).norm() > 1e-9) out.pattern_ok = false;
        }
        double xi = chain1[k].c.get_d() * std::pow(out.t, chain1[k].b->length);
        if (!std::isfinite(xi) || xi * A1.norm() > 700) {
            out.exp_dist.push_back(INFINITY);
            continue;
        }
        Eigen::MatrixXcd Ex = Eigen::MatrixXcd(xi * A1).exp();
        Eigen::MatrixXcd D = Ex - Eigen::MatrixXcd::Identity(3, 3);
        out.exp_dist.push_back(D.norm());
    }
    return out;
}

ErrorReport intrinsic_repr_eval(const HallBasis& basis, const std::vector<VectorField>& f, const ControlTuple& a,
                                const Rational& t, const Truncation& tr, double tol)
{
    const int d = f.at(0).dim();
    VectorField Z = magnus_field(basis, f, a, t, tr);
    ErrorReport r;
    r.method = "intrinsic";
    r.M = tr.M;
    r.N0 = tr.N0;
    r.scale_name = "t";
    r.scale = t.get_d();
    r.approx = eval_exact(Z, Eigen::VectorXd::Zero(d));
    r.oracle = control_oracle(f, a, Eigen::VectorXd::Zero(d), t.get_d(), tol);
    r.error = (r.approx - r.oracle).norm();
    double td = t.get_d();
    r.extra["ratio"] = r.error / (std::pow(td, tr.M + 1) + td * r.oracle.norm());
    return r;
}

MultiInputResult multi_input_failure(int n, double T, double tol)
{
    const double nn = n, w = nn * nn;
    OdeRhs rhs = [&](double s, double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        double u = nn * std::cos(w * s), v = nn * std::sin(w * s);
        dy.resize(4);
        dy[0] = u;
        dy[1] = v * y[0];
        dy[2] = u;  // U
        dy[3] = v;  // V
    };
    OdeOptions opt;
    opt.tol = tol;
    const int grid = 200 * n * n;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(4);
    MultiInputResult r;
    r.n = n;
    r.T = T;
    for (int i = 0; i < grid; ++i) {
        y = integrate(rhs, y, T * i / grid, T * (i + 1) / grid, opt);
        r.U_linf = std::max(r.U_linf, std::abs(y[2]));
        r.V_linf = std::max(r.V_linf, std::abs(y[3]));
    }
    r.x2 = y[1];
    return r;
}

// ---------------------------------------------------------------------------

std::string SweepResult::to_csv() const
{
    std::string s = "scale,error,slope_so_far\n";
    std::vector<std::pair<double, double>> acc;
    for (const auto& r : reports) {
        acc.emplace_back(r.scale, r.error);
        std::string slope;
        try {
            slope = fmt::format("{:.6f}", order_fit(acc).slope);
        } catch (const std::invalid_argument&) {
        }
        s += fmt::format("{:.17g},{:.17g},{}\n", r.scale, r.error, slope);
    }
    return s;
}

namespace {

struct SweepSystem {
    std::vector<VectorField> f;  // f[0] is the drift
    Eigen::VectorXd p;
};

SweepSystem sweep_system(const std::string& name, bool drift_is_f1)
{
    SweepSystem s;
    if (name == "normal-form-3d") {
        s.f = cubic_drift_system();
        s.p = Eigen::Vector3d(0.1, 0.2, 0.3);
    } else if (name == "optimal-pair") {
        s.f = optimal_pair();
        if (drift_is_f1) std::swap(s.f[0], s.f[1]);
        s.p = Eigen::Vector2d(0.1, 0.2);
    } else {
        throw std::invalid_argument("unknown sweep system: " + name);
    }
    return s;
}

// Fixed shape on [0,1]: w(s) = 4 (1 - 3s + s^2).
Poly1 sweep_shape()
{
    return Poly1({Rational(4), Rational(-12), Rational(4)});
}

}  // namespace

SweepResult order_sweep(const std::string& method, const std::string& system, int M,
                        const std::vector<double>& scales_in, double tol)
{
    std::vector<double> scales = scales_in;
    if (scales.empty())
        for (int k = 3; k <= 8; ++k) scales.push_back(std::ldexp(1.0, -k));
    SweepResult out;
    out.method = method;
    out.system = system;
    out.M = M;
    const bool u_sweep = method == "interaction" || method == "sussmann";
    SweepSystem sys = sweep_system(system, u_sweep);
    const Rational one = 1;

    if (method == "cf" || method == "magnus" || method == "intrinsic") {
        // Controls keep their shape on [0, t]: a0 = 1, a1(s) = w(s / t).
        Control w = Control::from_poly(sweep_shape(), one);
        HallBasis B = build_hall_basis(2, M);
        Truncation tr{M, -1, -1};
        for (double sc : scales) {
            Rational t(sc);
            ControlTuple a{Control::constant(1, one), w.time_rescale(t)};
            ErrorReport r;
            if (method == "cf")
                r = chen_fliess_report(sys.f, a, sys.p, t, tr, tol);
            else if (method == "magnus")
                r = magnus_eval(B, sys.f, a, sys.p, t, tr, tol);
            else
                r = intrinsic_repr_eval(B, sys.f, a, t, tr, tol);
            out.reports.push_back(r);
        }
    } else if (method == "cbhd") {
        for (double sc : scales) out.reports.push_back(cbhd_eval(sys.f, Rational(sc), sys.p, M, tol));
    } else if (u_sweep) {
        const Rational t0 = rat(1, 2);
        const int N0 = 8;
        Control w = Control::from_poly(sweep_shape(), t0);
        HallBasis B;
        if (method == "sussmann")
            B = build_hall_basis(2, M + N0, OrderPolicy::length_then_lex, {},
                                 [&](const std::vector<int>& c) { return c[1] <= M && c[0] <= N0; });
        for (double sc : scales) {
            Control u = w * Rational(sc);
            ErrorReport r;
            if (method == "interaction")
                r = interaction_magnus_eval(sys.f[0], {sys.f[1]}, {u}, sys.p, t0, M, N0, tol).report;
            else
                r = sussmann_eval(B, sys.f, {Control::constant(1, t0), u}, sys.p, t0, SussmannFilter::control_degree,
                                  M, N0, tol);
            out.reports.push_back(r);
        }
    } else if (method == "refined") {
        const Rational t0 = rat(1, 4);
        Control w = Control::from_poly(sweep_shape(), t0);
        for (double sc : scales)
            out.reports.push_back(scalar_refined_eval(sys.f[0], sys.f[1], w * Rational(sc), sys.p, t0, M, 6, tol));
    } else {
        throw std::invalid_argument("unknown sweep method: " + method);
    }

    std::vector<std::pair<double, double>> pts;
    for (const auto& r : out.reports) pts.emplace_back(r.scale, r.error);
    for (auto& r : out.reports) r.series = pts;
    try {
        out.fit = order_fit(pts, 100 * tol);
        out.fit_ok = true;
    } catch (const std::invalid_argument& e) {
        out.note = e.what();
    }
    return out;
}

}  // namespace flowexp
