#include "flowexp/flows.hpp"

#include <json.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flowexp {

namespace {

long double to_ld(const Rational& r)
{
    return static_cast<long double>(r.get_num().get_d()) / static_cast<long double>(r.get_den().get_d());
}

// Coefficients of p(a + s) in powers of s.
std::vector<Rational> taylor_shift(const Poly1& p, const Rational& a)
{
    const auto& c = p.coeffs();
    std::vector<Rational> out(c.size());
    // Horner: q <- q*(a + s) + c_i
    for (auto it = c.rbegin(); it != c.rend(); ++it) {
        std::vector<Rational> next(out.size());
        for (std::size_t j = 0; j < out.size(); ++j) {
            if (out[j] == 0) continue;
            next[j] += out[j] * a;
            if (j + 1 < next.size()) next[j + 1] += out[j];
        }
        next[0] += *it;
        out = std::move(next);
    }
    return out;
}

}  // namespace

Channel Channel::from_control(const Control& u)
{
    struct Piece {
        double a;
        std::vector<double> c;  // local coefficients in (t - a)
    };
    auto pieces = std::make_shared<std::vector<Piece>>();
    const auto& bp = u.breakpoints();
    for (std::size_t k = 0; k < u.piece_count(); ++k) {
        Piece pc{bp[k].get_d(), {}};
        for (const auto& x : taylor_shift(u.pieces()[k], bp[k])) pc.c.push_back(x.get_d());
        pieces->push_back(std::move(pc));
    }
    Channel ch;
    for (const auto& b : bp) ch.breaks.push_back(b.get_d());
    ch.f = [pieces](double t, double inside) {
        std::size_t k = 0;
        while (k + 1 < pieces->size() && inside >= (*pieces)[k + 1].a) ++k;
        const auto& pc = (*pieces)[k];
        double s = t - pc.a, r = 0;
        for (auto it = pc.c.rbegin(); it != pc.c.rend(); ++it) r = r * s + *it;
        return r;
    };
    return ch;
}

Channel Channel::smooth(std::function<double(double)> g)
{
    Channel ch;
    ch.f = [g = std::move(g)](double t, double) { return g(t); };
    return ch;
}

Eigen::VectorXd integrate(const OdeRhs& rhs, const Eigen::VectorXd& y0, double t0, double t1, const OdeOptions& opt,
                          OdeStats* stats)
{
    static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static const double a21 = 1.0 / 5;
    static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
    static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static const double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                        e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                        e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

    if (!(opt.tol > 0)) throw std::invalid_argument("integrate: tolerance must be positive");
    OdeStats local;
    OdeStats& st = stats ? *stats : local;
    Eigen::VectorXd y = y0;
    if (t0 == t1) return y;
    const double dir = t1 > t0 ? 1 : -1;

    std::vector<double> cuts{t0};
    std::vector<double> inner;
    for (double b : opt.breaks)
        if ((b - t0) * dir > 0 && (t1 - b) * dir > 0) inner.push_back(b);
    std::sort(inner.begin(), inner.end(), [dir](double a, double b) { return a * dir < b * dir; });
    inner.erase(std::unique(inner.begin(), inner.end()), inner.end());
    cuts.insert(cuts.end(), inner.begin(), inner.end());
    cuts.push_back(t1);

    const Eigen::Index n = y.size();
    Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), yt(n), ynew(n), err(n);
    double h = 0;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
        const double a = cuts[s], b = cuts[s + 1];
        const double inside = 0.5 * (a + b);
        double t = a;
        const double span = std::abs(b - a);
        if (h == 0) h = std::min(span, 1e-3 * std::max(span, 1e-3));
        h = std::min(h, span);
        if (opt.max_step > 0) h = std::min(h, opt.max_step);
        rhs(t, inside, y, k1);
        while ((b - t) * dir > 0) {
            if (++st.steps > opt.max_steps) throw std::runtime_error("integrate: too many steps");
            double hs = std::min(h, std::abs(b - t));
            bool last = hs >= std::abs(b - t) * (1 - 1e-14);
            if (last) hs = std::abs(b - t);
            double hh = dir * hs;
            yt = y + hh * a21 * k1;
            rhs(t + c2 * hh, inside, yt, k2);
            yt = y + hh * (a31 * k1 + a32 * k2);
            rhs(t + c3 * hh, inside, yt, k3);
            yt = y + hh * (a41 * k1 + a42 * k2 + a43 * k3);
            rhs(t + c4 * hh, inside, yt, k4);
            yt = y + hh * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
            rhs(t + c5 * hh, inside, yt, k5);
            yt = y + hh * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
            double tn = last ? b : t + hh;
            rhs(tn, inside, yt, k6);
            ynew = y + hh * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            rhs(tn, inside, ynew, k7);
            err = hh * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
            double en = 0, eabs = 0;
            for (Eigen::Index i = 0; i < n; ++i) {
                double sc = opt.tol * (1 + std::max(std::abs(y[i]), std::abs(ynew[i])));
                en = std::max(en, std::abs(err[i]) / sc);
                eabs = std::max(eabs, std::abs(err[i]));
            }
            if (!std::isfinite(en)) en = 1e10;
            if (en <= 1) {
                t = tn;
                y = ynew;
                k1 = k7;
                st.max_error = std::max(st.max_error, eabs);
                if (!y.allFinite()) throw std::runtime_error("integrate: solution blew up");
            } else {
                ++st.rejected;
            }
            double fac = en == 0 ? 5 : std::min(5.0, std::max(0.2, 0.9 * std::pow(en, -0.2)));
            h = hs * fac;
            if (opt.max_step > 0) h = std::min(h, opt.max_step);
            if (h < 1e-14 * std::max(1.0, std::abs(t))) throw std::runtime_error("integrate: step size underflow");
        }
    }
    return y;
}

namespace {

std::vector<double> problem_breaks(const OdeProblem& prob)
{
    std::vector<double> br;
    for (const auto& [ch, f] : prob.inputs) br.insert(br.end(), ch.breaks.begin(), ch.breaks.end());
    return br;
}

int problem_dim(const OdeProblem& prob)
{
    if (prob.drift) return prob.drift->dim();
    if (prob.inputs.empty()) return static_cast<int>(prob.p.size());
    return prob.inputs.front().second.dim();
}

}  // namespace

FlowResult solve_reference(const OdeProblem& prob, bool with_jacobian)
{
    const int d = problem_dim(prob);
    if (prob.p.size() != d) throw std::invalid_argument("solve_reference: initial point dimension mismatch");
    for (const auto& [ch, f] : prob.inputs)
        if (f.dim() != d) throw std::invalid_argument("solve_reference: fields must share the dimension");
    std::optional<FieldEval> drift;
    if (prob.drift) drift.emplace(*prob.drift);
    std::vector<FieldEval> fe;
    for (const auto& [ch, f] : prob.inputs) fe.emplace_back(f);

    OdeRhs rhs = [&](double t, double inside, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        Eigen::VectorXd x = y.head(d);
        dy.setZero(y.size());
        Eigen::MatrixXd J;
        if (with_jacobian) J = Eigen::MatrixXd::Zero(d, d);
        if (drift) {
            dy.head(d) += drift->value(x);
            if (with_jacobian) J += drift->jacobian(x);
        }
        for (std::size_t i = 0; i < fe.size(); ++i) {
            double u = prob.inputs[i].first.f(t, inside);
            if (u == 0) continue;
            dy.head(d) += u * fe[i].value(x);
            if (with_jacobian) J += u * fe[i].jacobian(x);
        }
        if (with_jacobian) {
            Eigen::Map<const Eigen::MatrixXd> R(y.data() + d, d, d);
            Eigen::Map<Eigen::MatrixXd> dR(dy.data() + d, d, d);
            dR = J * R;
        }
    };
    Eigen::VectorXd y0(with_jacobian ? d + d * d : d);
    y0.head(d) = prob.p;
    if (with_jacobian) Eigen::Map<Eigen::MatrixXd>(y0.data() + d, d, d).setIdentity();
    OdeOptions opt;
    opt.tol = prob.tol;
    opt.breaks = problem_breaks(prob);
    FlowResult r;
    Eigen::VectorXd y = integrate(rhs, y0, 0, prob.t, opt, &r.stats);
    r.x = y.head(d);
    if (with_jacobian) r.jacobian = Eigen::Map<const Eigen::MatrixXd>(y.data() + d, d, d);
    return r;
}

FlowResult autonomous_flow(const VectorField& g, const Eigen::VectorXd& p, double tol, double t)
{
    OdeProblem prob;
    prob.drift = g;
    prob.p = p;
    prob.t = t;
    prob.tol = tol;
    return solve_reference(prob, false);
}

FlowResult flow_with_jacobian(const VectorField& g, const Eigen::VectorXd& p, double t, double tol)
{
    OdeProblem prob;
    prob.drift = g;
    prob.p = p;
    prob.t = t;
    prob.tol = tol;
    return solve_reference(prob, true);
}

std::string FlowResult::to_json() const
{
    nlohmann::json j;
    j["x"] = std::vector<double>(x.data(), x.data() + x.size());
    if (jacobian) {
        std::vector<std::vector<double>> J;
        for (Eigen::Index i = 0; i < jacobian->rows(); ++i) {
            J.emplace_back();
            for (Eigen::Index k = 0; k < jacobian->cols(); ++k) J.back().push_back((*jacobian)(i, k));
        }
        j["jacobian"] = J;
    }
    j["steps"] = stats.steps;
    j["rejected"] = stats.rejected;
    j["max_error"] = stats.max_error;
    return j.dump();
}

Eigen::VectorXd pushforward_eval(const VectorField& f0, const VectorField& f1, double t, double tau,
                                 const Eigen::VectorXd& y, double tol)
{
    FieldEval F1(f1);
    if (tau == t || f0.is_zero()) return F1.value(y);
    FlowResult r = flow_with_jacobian(f0, y, tau - t, tol);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(*r.jacobian);
    if (!(std::abs(lu.determinant()) > 1e-300)) throw std::runtime_error("pushforward_eval: singular Jacobian");
    return lu.solve(F1.value(r.x));
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> pushforward_eval_d(const VectorField& f0, const VectorField& f1, double t,
                                                               double tau, const Eigen::VectorXd& y, double tol)
{
    const int d = f0.dim();
    FieldEval F0(f0), F1(f1);
    if (tau == t) return {F1.value(y), F1.jacobian(y)};
    // State: x (d), R (d x d, column-major), S (d x d x d) with S[i + d*(j + d*k)] = d^2 x_i / dy_j dy_k.
    OdeRhs rhs = [&](double, double, const Eigen::VectorXd& s, Eigen::VectorXd& ds) {
        Eigen::VectorXd x = s.head(d);
        ds.setZero(s.size());
        ds.head(d) = F0.value(x);
        Eigen::MatrixXd J = F0.jacobian(x);
        auto H = F0.hessian(x);
        Eigen::Map<const Eigen::MatrixXd> R(s.data() + d, d, d);
        Eigen::Map<Eigen::MatrixXd>(ds.data() + d, d, d) = J * R;
        const double* S = s.data() + d + d * d;
        double* dS = ds.data() + d + d * d;
        for (int k = 0; k < d; ++k) {
            Eigen::Map<const Eigen::MatrixXd> Sk(S + d * d * k, d, d);
            Eigen::Map<Eigen::MatrixXd> dSk(dS + d * d * k, d, d);
            dSk = J * Sk;
            for (int i = 0; i < d; ++i) dSk.row(i) += (H[i] * R.col(k)).transpose() * R;
        }
    };
    Eigen::VectorXd s0 = Eigen::VectorXd::Zero(d + d * d + d * d * d);
    s0.head(d) = y;
    Eigen::Map<Eigen::MatrixXd>(s0.data() + d, d, d).setIdentity();
    OdeOptions opt;
    opt.tol = tol;
    Eigen::VectorXd s = integrate(rhs, s0, 0, tau - t, opt);
    Eigen::VectorXd x = s.head(d);
    Eigen::MatrixXd R = Eigen::Map<const Eigen::MatrixXd>(s.data() + d, d, d);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(R);
    if (!(std::abs(lu.determinant()) > 1e-300)) throw std::runtime_error("pushforward_eval: singular Jacobian");
    Eigen::VectorXd g = lu.solve(F1.value(x));
    Eigen::MatrixXd DF1 = F1.jacobian(x);
    Eigen::MatrixXd Dg(d, d);
    for (int k = 0; k < d; ++k) {
        Eigen::Map<const Eigen::MatrixXd> Sk(s.data() + d + d * d + d * d * k, d, d);
        Dg.col(k) = lu.solve(DF1 * R.col(k) - Sk * g);
    }
    return {g, Dg};
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd matrix_exp(const Eigen::MatrixXd& A)
{
    return A.exp();
}

MatLD matrix_exp(const MatLD& A)
{
    return A.exp();
}

Eigen::MatrixXd matrix_ad_series(const Eigen::MatrixXd& H0, const Eigen::MatrixXd& H1, int K)
{
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(H1.rows(), H1.cols());
    Eigen::MatrixXd ad = H1;
    double f = 1;
    for (int k = 0; k < K; ++k) {
        if (k > 0) {
            ad = H0 * ad - ad * H0;
            f *= k;
        }
        sum += ad / f;
    }
    return sum;
}

namespace {

// Piecewise polynomial in long double, written in the local variable s - bp[k]
// on each piece. Degrees are capped; the dropped tail is of factorial size
// for the entire functions handled here.
constexpr int kDegreeCap = 72;

struct PPoly {
    const std::vector<long double>* bp = nullptr;
    std::vector<std::vector<long double>> c;  // one coefficient vector per piece

    static PPoly zero(const std::vector<long double>& bp)
    {
        PPoly p;
        p.bp = &bp;
        p.c.assign(bp.size() - 1, {});
        return p;
    }
    static PPoly constant(const std::vector<long double>& bp, long double v)
    {
        PPoly p = zero(bp);
        for (auto& x : p.c) x = {v};
        return p;
    }
    bool is_zero() const
    {
        for (const auto& x : c)
            for (long double v : x)
                if (v != 0) return false;
        return true;
    }
    void axpy(long double a, const PPoly& o)
    {
        for (std::size_t k = 0; k < c.size(); ++k) {
            if (o.c[k].size() > c[k].size()) c[k].resize(o.c[k].size(), 0);
            for (std::size_t j = 0; j < o.c[k].size(); ++j) c[k][j] += a * o.c[k][j];
        }
    }
    PPoly operator*(const PPoly& o) const
    {
        PPoly r = zero(*bp);
        for (std::size_t k = 0; k < c.size(); ++k) {
            if (c[k].empty() || o.c[k].empty()) continue;
            std::size_t deg = std::min<std::size_t>(c[k].size() + o.c[k].size() - 2, kDegreeCap);
            r.c[k].assign(deg + 1, 0);
            for (std::size_t i = 0; i < c[k].size(); ++i) {
                if (c[k][i] == 0) continue;
                for (std::size_t j = 0; j < o.c[k].size() && i + j <= deg; ++j) r.c[k][i + j] += c[k][i] * o.c[k][j];
            }
        }
        return r;
    }
    long double eval_piece(std::size_t k, long double s) const
    {
        long double r = 0;
        for (auto it = c[k].rbegin(); it != c[k].rend(); ++it) r = r * s + *it;
        return r;
    }
    PPoly primitive() const
    {
        PPoly r = zero(*bp);
        long double acc = 0;
        for (std::size_t k = 0; k < c.size(); ++k) {
            std::size_t deg = std::min<std::size_t>(c[k].size(), kDegreeCap);
            r.c[k].assign(deg + 1, 0);
            r.c[k][0] = acc;
            for (std::size_t j = 0; j + 1 <= deg && j < c[k].size(); ++j) r.c[k][j + 1] = c[k][j] / (j + 1);
            acc = r.eval_piece(k, (*bp)[k + 1] - (*bp)[k]);
        }
        return r;
    }
    long double operator()(long double t) const
    {
        std::size_t k = 0;
        while (k + 1 < c.size() && t > (*bp)[k + 1]) ++k;
        return eval_piece(k, t - (*bp)[k]);
    }
};

using PMat = std::vector<PPoly>;  // row-major d x d

PMat pmat_mul(const PMat& A, const PMat& B, int d)
{
    PMat C(d * d, PPoly::zero(*A[0].bp));
    for (int i = 0; i < d; ++i)
        for (int k = 0; k < d; ++k) {
            const PPoly& a = A[i * d + k];
            if (a.is_zero()) continue;
            for (int j = 0; j < d; ++j) {
                const PPoly& b = B[k * d + j];
                if (b.is_zero()) continue;
                C[i * d + j].axpy(1, a * b);
            }
        }
    return C;
}

struct MatrixSetup {
    int d = 0;
    std::vector<long double> bp;
    PMat B;  // the generator in the chosen picture
    MatLD H0;
    long double t = 0;
};

MatrixSetup setup_matrix(const MatrixControl& A, const Rational& t, MagnusMode mode, const Eigen::MatrixXd& H0d)
{
    MatrixSetup S;
    S.d = static_cast<int>(A.size());
    const int d = S.d;
    if (d == 0) throw std::invalid_argument("matrix control is empty");
    std::vector<Rational> grid = A[0][0].breakpoints();
    for (const auto& row : A) {
        if (static_cast<int>(row.size()) != d) throw std::invalid_argument("matrix control must be square");
        for (const auto& c : row) grid = merge_grids(grid, c.breakpoints());
    }
    if (t > grid.back() || t < 0) throw std::out_of_range("matrix_magnus: t outside the horizon");
    for (const auto& g : grid) S.bp.push_back(to_ld(g));
    S.t = to_ld(t);
    S.H0 = MatLD::Zero(d, d);
    if (mode == MagnusMode::interaction) {
        if (H0d.rows() != d || H0d.cols() != d) throw std::invalid_argument("matrix_magnus: H0 has the wrong size");
        S.H0 = H0d.cast<long double>();
    }
    // Entries in local coordinates.
    std::vector<PPoly> a(d * d, PPoly::zero(S.bp));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            Control r = A[i][j].refined(grid);
            for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
                auto loc = taylor_shift(r.pieces()[k], grid[k]);
                for (const auto& x : loc) a[i * d + j].c[k].push_back(to_ld(x));
            }
        }
    for (auto& p : a) p.bp = &S.bp;
    if (mode == MagnusMode::plain) {
        S.B = std::move(a);
        return S;
    }
    // B(s) = sum_k (t-s)^k/k! ad^k_{H0}(A(s)), truncated where the ad-series
    // remainder drops below 1e-24.
    long double nu = 2 * S.H0.norm() * S.t;
    int K = 1;
    long double term = nu, fk = 1;
    while (K < 80) {
        fk *= K + 1;
        term = std::pow(nu, K + 1) / fk * std::exp(nu);
        ++K;
        if (term < 1e-24L) break;
    }
    // adk[k][ij] = ad^k_{H0}(E_ij)
    std::vector<std::vector<MatLD>> adk(K + 1, std::vector<MatLD>(d * d));
    for (int ij = 0; ij < d * d; ++ij) {
        MatLD E = MatLD::Zero(d, d);
        E(ij / d, ij % d) = 1;
        adk[0][ij] = E;
        for (int k = 1; k <= K; ++k) adk[k][ij] = S.H0 * adk[k - 1][ij] - adk[k - 1][ij] * S.H0;
    }
    S.B.assign(d * d, PPoly::zero(S.bp));
    for (std::size_t piece = 0; piece + 1 < S.bp.size(); ++piece) {
        long double off = S.t - S.bp[piece];  // (t - s) = off - sigma
        for (int k = 0; k <= K; ++k) {
            // w_k(sigma) = (off - sigma)^k / k!
            std::vector<long double> w(k + 1, 0);
            long double binom = 1, fact = 1;
            for (int i = 2; i <= k; ++i) fact *= i;
            for (int j = 0; j <= k; ++j) {
                w[j] = binom * std::pow(off, k - j) * (j % 2 ? -1 : 1) / fact;
                binom = binom * (k - j) / (j + 1);
            }
            for (int ij = 0; ij < d * d; ++ij) {
                const auto& h = a[ij].c[piece];
                if (h.empty()) continue;
                std::vector<long double> wh(std::min<std::size_t>(w.size() + h.size() - 1, kDegreeCap + 1), 0);
                for (std::size_t p = 0; p < w.size(); ++p)
                    for (std::size_t q = 0; q < h.size() && p + q < wh.size(); ++q) wh[p + q] += w[p] * h[q];
                for (int pq = 0; pq < d * d; ++pq) {
                    long double m = adk[k][ij](pq / d, pq % d);
                    if (m == 0) continue;
                    auto& dst = S.B[pq].c[piece];
                    if (dst.size() < wh.size()) dst.resize(wh.size(), 0);
                    for (std::size_t j = 0; j < wh.size(); ++j) dst[j] += m * wh[j];
                }
            }
        }
    }
    return S;
}

// D_n(t) for n = 0..N with D_n' = B D_{n-1}.
std::vector<MatLD> dyson_terms(const MatrixSetup& S, int N)
{
    const int d = S.d;
    std::vector<MatLD> out;
    PMat D(d * d, PPoly::zero(S.bp));
    for (int i = 0; i < d; ++i) D[i * d + i] = PPoly::constant(S.bp, 1);
    out.push_back(MatLD::Identity(d, d));
    for (int n = 1; n <= N; ++n) {
        PMat P = pmat_mul(S.B, D, d);
        for (auto& p : P) p = p.primitive();
        D = std::move(P);
        MatLD M(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) M(i, j) = D[i * d + j](S.t);
        out.push_back(M);
    }
    return out;
}

}  // namespace

MatLD MatrixMagnus::Z(int R) const
{
    if (R > static_cast<int>(terms.size())) throw std::out_of_range("MatrixMagnus: order not computed");
    MatLD z = MatLD::Zero(H0.rows(), H0.cols());
    for (int r = 0; r < R; ++r) z += terms[r];
    return z;
}

MatLD MatrixMagnus::propagator(int R) const
{
    MatLD e = matrix_exp(Z(R));
    if (H0.norm() != 0) e = e * matrix_exp(MatLD(H0 * t));
    return e;
}

MatrixMagnus matrix_magnus_terms(const MatrixControl& A, const Rational& t, int R, MagnusMode mode,
                                 const Eigen::MatrixXd& H0)
{
    if (R < 1) throw std::invalid_argument("matrix_magnus: R must be positive");
    MatrixSetup S = setup_matrix(A, t, mode, H0);
    const int d = S.d;
    MatrixMagnus out;
    out.H0 = S.H0;
    out.t = S.t;
    out.dyson = dyson_terms(S, R);
    // Graded logarithm of I + sum_n D_n: P[m][n] is the degree-n part of X^m.
    std::vector<std::vector<MatLD>> P(R + 1, std::vector<MatLD>(R + 1, MatLD::Zero(d, d)));
    for (int n = 1; n <= R; ++n) P[1][n] = out.dyson[n];
    for (int m = 2; m <= R; ++m)
        for (int n = m; n <= R; ++n)
            for (int j = 1; j <= n - m + 1; ++j) P[m][n] += P[m - 1][n - j] * out.dyson[j];
    for (int r = 1; r <= R; ++r) {
        MatLD z = MatLD::Zero(d, d);
        for (int m = 1; m <= r; ++m) z += P[m][r] * ((m % 2 ? 1.0L : -1.0L) / m);
        out.terms.push_back(z);
    }
    return out;
}

Eigen::MatrixXd matrix_magnus(const MatrixControl& A, const Rational& t, int R, MagnusMode mode,
                              const Eigen::MatrixXd& H0)
{
    return matrix_magnus_terms(A, t, R, mode, H0).Z(R).cast<double>();
}

MatLD fundamental_solution_dyson(const MatrixControl& A, const Rational& t, int N, MagnusMode mode,
                                 const Eigen::MatrixXd& H0)
{
    MatrixSetup S = setup_matrix(A, t, mode, H0);
    auto D = dyson_terms(S, N);
    MatLD Y = MatLD::Zero(S.d, S.d);
    for (const auto& m : D) Y += m;
    if (mode == MagnusMode::interaction) Y = Y * matrix_exp(MatLD(S.H0 * S.t));
    return Y;
}

Eigen::MatrixXd fundamental_solution_oracle(const MatrixControl& A, double t, double tol, const Eigen::MatrixXd& H0)
{
    const int d = static_cast<int>(A.size());
    std::vector<Channel> ch;
    OdeOptions opt;
    opt.tol = tol;
    for (const auto& row : A)
        for (const auto& c : row) {
            ch.push_back(Channel::from_control(c));
            opt.breaks.insert(opt.breaks.end(), ch.back().breaks.begin(), ch.back().breaks.end());
        }
    Eigen::MatrixXd H = H0.size() ? H0 : Eigen::MatrixXd::Zero(d, d);
    OdeRhs rhs = [&](double s, double inside, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        Eigen::MatrixXd M = H;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) M(i, j) += ch[i * d + j].f(s, inside);
        Eigen::Map<const Eigen::MatrixXd> Y(y.data(), d, d);
        dy.resize(y.size());
        Eigen::Map<Eigen::MatrixXd>(dy.data(), d, d) = M * Y;
    };
    Eigen::VectorXd y0(d * d);
    Eigen::Map<Eigen::MatrixXd>(y0.data(), d, d).setIdentity();
    Eigen::VectorXd y = integrate(rhs, y0, 0, t, opt);
    return Eigen::Map<const Eigen::MatrixXd>(y.data(), d, d);
}

double matrix_control_l1(const MatrixControl& A, const Rational& t)
{
    const int d = static_cast<int>(A.size());
    std::vector<Rational> grid = A[0][0].breakpoints();
    for (const auto& row : A)
        for (const auto& c : row) grid = merge_grids(grid, c.breakpoints());
    static const double x[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                0.9061798459386640};
    static const double w[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                0.4786286704993665, 0.2369268850561891};
    double total = 0;
    for (std::size_t k = 0; k + 1 < grid.size() && grid[k] < t; ++k) {
        double a = grid[k].get_d(), b = std::min(grid[k + 1], t).get_d();
        const int n = 64;
        for (int s = 0; s < n; ++s) {
            double lo = a + (b - a) * s / n, hi = a + (b - a) * (s + 1) / n;
            double m = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
            double inside = 0.5 * (a + b);
            for (int q = 0; q < 5; ++q) {
                Eigen::MatrixXd M(d, d);
                double tau = m + h * x[q];
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j) {
                        // piece-aware: the quadrature nodes are interior
                        (void)inside;
                        M(i, j) = A[i][j](tau);
                    }
                total += w[q] * h * M.norm();
            }
        }
    }
    return total;
}

}  // namespace flowexp
