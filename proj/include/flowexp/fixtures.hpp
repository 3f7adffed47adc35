#pragma once

#include "flowexp/expansions.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace flowexp {

// Named fixtures shared by the command line, the self test and the acceptance checks.
struct Fixture {
    std::string name, description;
    std::vector<VectorField> fields;      // letter i <-> fields[i]
    std::vector<Eigen::MatrixXcd> matrices;
    std::vector<Channel> channels;        // only for the oscillatory family
    Eigen::VectorXd p;
};

std::vector<std::string> fixture_names();
// `n` is the frequency parameter of the oscillatory family.
Fixture load_fixture(const std::string& name, int n = 16);

// Strictly upper-triangular 3x3 trio; every product of three of them vanishes.
std::vector<Eigen::MatrixXd> nilpotent_trio_matrices();
std::vector<VectorField> nilpotent_trio();

struct BracketRow {
    std::size_t index;
    std::string label;
    VectorField field;
};
// Basis elements with a nonzero field image.
std::vector<BracketRow> nonzero_brackets(const HallBasis& basis, const std::vector<VectorField>& f);

}  // namespace flowexp
