#include "flowexp/coords.hpp"
#include "flowexp/expansions.hpp"
#include "flowexp/fixtures.hpp"
#include "flowexp/selftest.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

using namespace flowexp;
using nlohmann::json;

namespace {

enum Exit { ok = 0, usage = 1, numeric = 2, invariant = 3 };

// Thrown for malformed input that CLI11 cannot see (bad files, bad names).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvariantError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

double default_tol()
{
    if (const char* s = std::getenv("FLOWEXP_TOL")) {
        char* end = nullptr;
        double v = std::strtod(s, &end);
        if (end == s || *end != '\0' || !(v > 0)) throw UsageError(fmt::format("FLOWEXP_TOL is not a positive number: {}", s));
        return v;
    }
    return 1e-12;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_out(const std::string& path, const std::string& text)
{
    if (path.empty() || path == "-") {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
    if (!text.empty() && text.back() != '\n') out << '\n';
}

Rational parse_rational(const std::string& s)
{
    try {
        Rational r(s);
        r.canonicalize();
        return r;
    } catch (const std::invalid_argument&) {
        throw UsageError("not a rational number: " + s);
    }
}

ControlTuple load_controls(const std::string& path)
{
    json j = json::parse(read_file(path));
    if (!j.is_array() || j.empty()) throw UsageError(path + ": expected a nonempty JSON array of controls");
    ControlTuple a;
    for (const auto& c : j) a.push_back(Control::from_json(c.dump()));
    return a;
}

std::vector<VectorField> load_fields(const std::string& spec)
{
    for (const auto& n : fixture_names())
        if (n == spec) {
            auto fx = load_fixture(spec);
            if (fx.fields.empty()) throw UsageError("fixture " + spec + " has no vector fields");
            return fx.fields;
        }
    json j = json::parse(read_file(spec));
    if (!j.is_array() || j.empty()) throw UsageError(spec + ": expected a nonempty JSON array of fields");
    std::vector<VectorField> f;
    for (const auto& x : j) f.push_back(VectorField::from_json(x.dump()));
    return f;
}

std::vector<std::string> letter_names(int q)
{
    std::vector<std::string> n;
    for (int i = 0; i < q; ++i) n.push_back(fmt::format("X{}", i));
    return n;
}

Eigen::VectorXd parse_point(const std::string& s, int d)
{
    Eigen::VectorXd p = Eigen::VectorXd::Zero(d);
    if (s.empty()) return p;
    std::stringstream ss(s);
    std::string item;
    int i = 0;
    while (std::getline(ss, item, ',')) {
        if (i >= d) throw UsageError("point has too many components");
        p[i++] = parse_rational(item).get_d();
    }
    if (i != d) throw UsageError("point has too few components");
    return p;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Exact and numerical Lie-series expansions for control-affine systems"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string out_path;
    app.add_option("-o,--output", out_path, "Output file (default: standard output)");

    // hall
    auto* hall = app.add_subcommand("hall", "Export a Hall basis");
    int hq = 2, hmax = 4;
    std::string hformat = "json";
    hall->add_option("--q", hq, "Alphabet size")->check(CLI::Range(1, 9));
    hall->add_option("--maxlen", hmax, "Maximal bracket length")->check(CLI::Range(1, 12));
    hall->add_option("--format", hformat)->check(CLI::IsMember({"json", "text"}));

    // cbhd
    auto* cbhd = app.add_subcommand("cbhd", "CBHD coefficient table of log(e^{y1}...e^{yn})");
    int cargs = 2, corder = 4;
    cbhd->add_option("--args", cargs, "Number of exponentials")->check(CLI::Range(1, 5));
    cbhd->add_option("--order", corder, "Truncation order")->check(CLI::Range(1, 9));

    // coords
    auto* coords = app.add_subcommand("coords", "Coordinates of the first, second or pseudo-first kind");
    std::string kind = "first", ctl_file, tstr = "1";
    int cmax = 4, cM = 2, cN0 = 3;
    coords->add_option("--kind", kind)->check(CLI::IsMember({"first", "second", "pseudo"}));
    coords->add_option("--controls", ctl_file, "JSON array of controls (default: a0 = 1, a1 = s)");
    coords->add_option("--t", tstr, "Final time (rational)");
    coords->add_option("--maxlen", cmax)->check(CLI::Range(1, 10));
    coords->add_option("--M", cM, "Input degree for the pseudo-first kind")->check(CLI::Range(1, 4));
    coords->add_option("--N0", cN0, "Drift cap for the pseudo-first kind")->check(CLI::Range(0, 12));

    // eval
    auto* eval = app.add_subcommand("eval", "One expansion at one scale, as a JSON report");
    std::string emethod = "magnus", esystem = "normal-form-3d", escale = "1/8", epoint, ectl;
    int eM = 2, eN0 = 8;
    eval->add_option("--method", emethod)
        ->check(CLI::IsMember({"cf", "magnus", "cbhd", "interaction", "sussmann", "refined", "intrinsic"}));
    eval->add_option("--system", esystem, "Fixture name or JSON file with an array of fields");
    eval->add_option("--M", eM)->check(CLI::Range(0, 6));
    eval->add_option("--N0", eN0)->check(CLI::Range(0, 16));
    eval->add_option("--scale", escale, "t (cf, magnus, intrinsic, interaction, sussmann, refined) or eps (cbhd)");
    eval->add_option("--point", epoint, "Comma-separated initial point (default: origin)");
    eval->add_option("--controls", ectl, "JSON array of controls, one per field");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Order study: CSV of scale, error, slope so far");
    std::string smethod = "magnus", ssystem = "normal-form-3d", sformat = "csv";
    int sM = 2;
    std::vector<double> sscales;
    bool sempty = false;
    sweep->add_option("--method", smethod)
        ->check(CLI::IsMember({"cf", "magnus", "cbhd", "interaction", "sussmann", "refined", "intrinsic"}));
    sweep->add_option("--system", ssystem)->check(CLI::IsMember({"normal-form-3d", "optimal-pair"}));
    sweep->add_option("--M", sM)->check(CLI::Range(1, 4));
    sweep->add_option("--scales", sscales, "Explicit scales (default 2^-3 .. 2^-8)");
    sweep->add_flag("--no-scales", sempty, "Emit the header only");
    sweep->add_option("--format", sformat)->check(CLI::IsMember({"csv", "json"}));

    // counterexample
    auto* cex = app.add_subcommand("counterexample", "Named divergence and failure fixtures");
    std::string cname;
    int cn = 16, cmaxk = 40;
    cex->add_option("name", cname)
        ->required()
        ->check(CLI::IsMember({"cbh-divergence", "magnus-control", "matrix-sussmann", "multi-input-failure"}));
    cex->add_option("--n", cn, "Frequency for multi-input-failure")->check(CLI::Range(1, 64));
    cex->add_option("--kmax", cmaxk, "Largest index")->check(CLI::Range(1, 200));

    // identity
    auto* ident = app.add_subcommand("identity", "Formal Z = CBHD(Y, U(t) X1) check on one bidegree");
    int ir = 2, inu = 2, ipieces = 3;
    unsigned iseed = kDefaultSeed;
    ident->add_option("--r", ir)->check(CLI::Range(0, 3));
    ident->add_option("--nu", inu)->check(CLI::Range(0, 4));
    ident->add_option("--seed", iseed);
    ident->add_option("--pieces", ipieces)->check(CLI::Range(1, 8));

    // selftest
    auto* self = app.add_subcommand("selftest", "Run every algebra invariant suite");
    unsigned sseed = kDefaultSeed;
    std::string ssuite;
    self->add_option("--seed", sseed);
    self->add_option("--suite", ssuite, "Run a single suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? Exit::ok : Exit::usage;
    }

    try {
        const double tol = default_tol();

        if (*hall) {
            HallBasis B = build_hall_basis(hq, hmax);
            if (hformat == "json") {
                write_out(out_path, basis_to_json(B, letter_names(hq)));
            } else {
                std::string s;
                for (std::size_t i = 0; i < B.size(); ++i)
                    s += fmt::format("{} {}\n", i, bracket_label(*B[i], letter_names(hq)));
                write_out(out_path, s);
            }
            return Exit::ok;
        }

        if (*cbhd) {
            HallBasis B = build_hall_basis(cargs, corder);
            CoordTable T = cbhd_coeffs(cargs, B, corder);
            std::vector<std::string> names;
            for (int i = 1; i <= cargs; ++i) names.push_back(fmt::format("y{}", i));
            write_out(out_path, T.to_csv(names));
            return Exit::ok;
        }

        if (*coords) {
            Rational t = parse_rational(tstr);
            ControlTuple a = ctl_file.empty()
                                 ? ControlTuple{Control::constant(1, t), Control::from_poly(Poly1({Rational(0), Rational(1)}), t)}
                                 : load_controls(ctl_file);
            CoordTable T;
            if (kind == "first") {
                HallBasis B = build_hall_basis(static_cast<int>(a.size()), cmax);
                T = coord_first_kind(B, a, t, cmax);
            } else if (kind == "second") {
                HallBasis B = build_hall_basis(static_cast<int>(a.size()), cmax);
                T = coord_second_kind(B, a, t);
            } else {
                // a holds the inputs u_1..u_m; letter 0 is the drift.
                const int m = static_cast<int>(a.size());
                HallBasis B = build_hall_basis(m + 1, cM + cN0, OrderPolicy::length_then_lex, {},
                                               [&](const std::vector<int>& c) {
                                                   int n = 0;
                                                   for (int i = 1; i <= m; ++i) n += c[i];
                                                   return n <= cM && c[0] <= cN0;
                                               });
                T = coord_pseudo_first_kind(B, a, t, cM, cN0);
            }
            auto audit = coord_bound_audit(T, a);
            std::cerr << "bound audit: " << audit.summary() << "\n";
            write_out(out_path, T.to_csv());
            return audit.ok || kind == "pseudo" ? Exit::ok : Exit::invariant;
        }

        if (*eval) {
            auto f = load_fields(esystem);
            Rational s = parse_rational(escale);
            const int d = f[0].dim();
            Eigen::VectorXd p = parse_point(epoint, d);
            ControlTuple a;
            if (!ectl.empty()) {
                a = load_controls(ectl);
            } else {
                a.push_back(Control::constant(1, std::max(s, Rational(1))));
                for (std::size_t i = 1; i < f.size(); ++i)
                    a.push_back(Control::from_poly(Poly1({Rational(1), Rational(1)}), std::max(s, Rational(1))));
            }
            if (a.size() != f.size()) throw UsageError("one control per field is required");
            ErrorReport r;
            if (emethod == "cf") {
                r = chen_fliess_report(f, a, p, s, Truncation{eM}, tol);
            } else if (emethod == "magnus") {
                r = magnus_eval(build_hall_basis(static_cast<int>(f.size()), std::max(eM, 1)), f, a, p, s, Truncation{eM}, tol);
            } else if (emethod == "intrinsic") {
                r = intrinsic_repr_eval(build_hall_basis(static_cast<int>(f.size()), std::max(eM, 1)), f, a, s, Truncation{eM}, tol);
            } else if (emethod == "cbhd") {
                r = cbhd_eval(f, s, p, std::max(eM, 1), tol);
            } else {
                std::vector<VectorField> rest(f.begin() + 1, f.end());
                ControlTuple u(a.begin() + 1, a.end());
                if (emethod == "interaction") {
                    r = interaction_magnus_eval(f[0], rest, u, p, s, std::max(eM, 1), eN0, tol).report;
                } else if (emethod == "sussmann") {
                    int Mi = std::max(eM, 1);
                    HallBasis B = build_hall_basis(static_cast<int>(f.size()), Mi + eN0, OrderPolicy::length_then_lex, {},
                                                   [&](const std::vector<int>& c) {
                                                       int n = 0;
                                                       for (std::size_t i = 1; i < c.size(); ++i) n += c[i];
                                                       return n <= Mi && c[0] <= eN0;
                                                   });
                    r = sussmann_eval(B, f, a, p, s, SussmannFilter::control_degree, Mi, eN0, tol);
                } else {
                    if (f.size() != 2) throw UsageError("refined needs exactly one input field");
                    r = scalar_refined_eval(f[0], f[1], u[0], p, s, std::max(eM, 1), 6, tol);
                }
            }
            write_out(out_path, r.to_json());
            return std::isfinite(r.error) ? Exit::ok : Exit::numeric;
        }

        if (*sweep) {
            SweepResult res;
            if (sempty) {
                res.method = smethod;
                res.system = ssystem;
                res.M = sM;
            } else {
                res = order_sweep(smethod, ssystem, sM, sscales, tol);
            }
            if (sformat == "csv") {
                write_out(out_path, res.to_csv());
            } else {
                json j;
                j["method"] = res.method;
                j["system"] = res.system;
                j["M"] = res.M;
                j["reports"] = json::array();
                for (const auto& r : res.reports) j["reports"].push_back(json::parse(r.to_json()));
                if (res.fit_ok) j["fit"] = json::parse(res.fit.to_json());
                j["note"] = res.note;
                write_out(out_path, j.dump(2));
            }
            if (!res.reports.empty()) {
                if (res.fit_ok)
                    std::cerr << fmt::format("fitted slope {:.4f} over {} points (expected about {})\n", res.fit.slope,
                                             res.fit.points, sM + 1);
                else
                    std::cerr << "no slope: " << res.note << "\n";
            }
            return sempty || res.fit_ok ? Exit::ok : Exit::numeric;
        }

        if (*cex) {
            json j;
            j["name"] = cname;
            bool holds = true;
            if (cname == "cbh-divergence") {
                auto d = cbh_divergence(Rational(1, 10), std::max(cmaxk, 10), 3, tol);
                j["eps"] = "1/10";
                j["k_star"] = d.k_star;
                j["first_million"] = d.first_million;
                for (const auto& r : d.rows)
                    j["rows"].push_back({{"Mp", r.Mp},
                                         {"theta", r.theta.get_str()},
                                         {"theta_decimal", r.theta.get_d()},
                                         {"flow_x2", r.flow_x2}});
                for (const auto& [M, e] : d.small_M_errors) j["small_M_errors"].push_back({M, e});
                holds = d.k_star > 0;
            } else if (cname == "magnus-control") {
                auto terms = usual_magnus_control_counterexample(Rational(1), cmaxk);
                for (const auto& t : terms)
                    j["terms"].push_back({{"k", t.k},
                                          {"zeta", t.zeta.get_str()},
                                          {"center", t.center.get_str()},
                                          {"center_decimal", t.center.get_d()},
                                          {"ball_sup", t.ball_sup},
                                          {"vanishes_on_axis", t.vanishes_on_axis}});
                for (std::size_t k = 1; k < terms.size(); ++k) holds = holds && terms[k].vanishes_on_axis;
            } else if (cname == "matrix-sussmann") {
                auto d = matrix_sussmann_divergence(std::min(cmaxk, 5));
                j["gamma"] = d.gamma;
                j["t"] = d.t;
                j["pattern_ok"] = d.pattern_ok;
                for (const auto& r : d.rows)
                    j["rows"].push_back({{"k", r.k},
                                         {"which", r.which},
                                         {"length", r.length},
                                         {"alpha", r.alpha.get_str()},
                                         {"gamma_k", r.gamma_k}});
                for (double x : d.exp_dist) j["exp_dist"].push_back(std::isfinite(x) ? json(x) : json("inf"));
                holds = d.pattern_ok;
            } else {
                auto r = multi_input_failure(cn, 1, tol);
                j["n"] = r.n;
                j["T"] = r.T;
                j["x2"] = r.x2;
                j["U_linf"] = r.U_linf;
                j["V_linf"] = r.V_linf;
            }
            write_out(out_path, j.dump(2));
            if (!holds) throw InvariantError(cname + ": expected structure not reproduced");
            return Exit::ok;
        }

        if (*ident) {
            std::mt19937 rng(iseed);
            std::cerr << "seed " << iseed << "\n";
            Control u = random_pl_control(rng, Rational(1), ipieces);
            auto c = formal_zm_cbh_identity(u, Rational(1, 2), ir, inu);
            json j;
            j["r"] = ir;
            j["nu"] = inu;
            j["seed"] = iseed;
            j["control"] = json::parse(u.to_json());
            j["equal"] = c.equal;
            j["projection"] = c.lhs.to_text();
            write_out(out_path, j.dump(2));
            if (!c.equal) throw InvariantError("the two projections differ");
            return Exit::ok;
        }

        if (*self) {
            std::cerr << "seed " << sseed << "\n";
            auto rep = run_selftest(sseed, ssuite, [](const SuiteResult& s) {
                std::cout << fmt::format("[{}] {:<22} {}  {:.2f}s  {}\n", s.index, s.name, s.pass ? "PASS" : "FAIL",
                                         s.seconds, s.detail);
            });
            if (!rep.all_pass()) {
                std::cerr << "failing suite index " << rep.first_failure() << "\n";
                return Exit::invariant;
            }
            return Exit::ok;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return Exit::usage;
    } catch (const json::exception& e) {
        std::cerr << "error: malformed JSON input: " << e.what() << "\n";
        return Exit::usage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return Exit::usage;
    } catch (const InvariantError& e) {
        std::cerr << "invariant violation: " << e.what() << "\n";
        return Exit::invariant;
    } catch (const std::exception& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return Exit::numeric;
    }
    return Exit::usage;
}
