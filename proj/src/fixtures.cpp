#include "flowexp/fixtures.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

namespace flowexp {

std::vector<std::string> fixture_names()
{
    return {"optimal-pair", "normal-form-3d", "divergent-pair", "nilpotent-trio", "so3-complex", "oscillatory"};
}

std::vector<Eigen::MatrixXd> nilpotent_trio_matrices()
{
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3, 3), B = A, C = A;
    A(0, 1) = 1;
    B(1, 2) = 1;
    C(0, 1) = 1;
    C(0, 2) = -2;
    C(1, 2) = 3;
    return {A, B, C};
}

std::vector<VectorField> nilpotent_trio()
{
    std::vector<VectorField> out;
    for (const auto& A : nilpotent_trio_matrices()) {
        std::vector<std::vector<Rational>> R(3, std::vector<Rational>(3, 0));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) R[i][j] = Rational(A(i, j));
        out.push_back(linear_field(R));
    }
    return out;
}

Fixture load_fixture(const std::string& name, int n)
{
    Fixture fx;
    fx.name = name;
    if (name == "optimal-pair") {
        fx.description = "f0 = e1, f1 = e2/(1-x1) on R^2";
        fx.fields = optimal_pair();
        fx.p = Eigen::VectorXd::Zero(2);
    } else if (name == "normal-form-3d") {
        fx.description = "f0 = (0, x1 + x1^2, x1 x2), f1 = e1 on R^3";
        fx.fields = cubic_drift_system();
        fx.p = Eigen::VectorXd::Zero(3);
    } else if (name == "divergent-pair") {
        fx.description = "f0 = x2 e1, f1 = e2/(1-x1) on R^2";
        fx.fields = divergent_pair();
        fx.p = Eigen::Vector2d(0, 0.5);
    } else if (name == "nilpotent-trio") {
        fx.description = "three strictly upper-triangular linear fields on R^3";
        fx.fields = nilpotent_trio();
        for (const auto& A : nilpotent_trio_matrices()) fx.matrices.push_back(A.cast<std::complex<double>>());
        fx.p = Eigen::Vector3d(1, -1, 0.5);
    } else if (name == "so3-complex") {
        fx.description = "A1 = e^{i pi/6} F1, A2 = e^{i pi/6} F2, F_j x = e_j cross x";
        auto F = cross_product_matrices();
        const std::complex<double> rot = std::exp(std::complex<double>(0, M_PI / 6));
        fx.matrices = {rot * F[0].cast<std::complex<double>>(), rot * F[1].cast<std::complex<double>>()};
        fx.p = Eigen::Vector3d(1, 0, 0);
    } else if (name == "oscillatory") {
        fx.description = "x1' = u, x2' = v x1 with u = n cos(n^2 t), v = n sin(n^2 t)";
        const double nn = n;
        fx.channels = {Channel::smooth([nn](double t) { return nn * std::cos(nn * nn * t); }),
                       Channel::smooth([nn](double t) { return nn * std::sin(nn * nn * t); })};
        fx.p = Eigen::VectorXd::Zero(2);
    } else {
        throw std::invalid_argument("unknown fixture: " + name);
    }
    return fx;
}

std::vector<BracketRow> nonzero_brackets(const HallBasis& basis, const std::vector<VectorField>& f)
{
    auto fb = substitute_basis(basis, f);
    std::vector<BracketRow> out;
    for (std::size_t i = 0; i < basis.size(); ++i)
        if (!fb[i].is_zero()) out.push_back({i, bracket_label(*basis[i]), fb[i]});
    return out;
}

}  // namespace flowexp
