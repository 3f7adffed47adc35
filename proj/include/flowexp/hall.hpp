#pragma once

#include "flowexp/freealg.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace flowexp {

struct Bracket;
using BracketPtr = std::shared_ptr<const Bracket>;

// Binary bracket tree over letters 0..q-1.
struct Bracket {
    int letter = -1;
    BracketPtr left, right;
    int length = 1;
    std::vector<int> counts;  // occurrences of each letter
    std::string key;          // canonical nested-array text, e.g. [0,[0,1]]

    bool is_leaf() const { return letter >= 0; }
    int count(int l) const { return l < static_cast<int>(counts.size()) ? counts[l] : 0; }
};

BracketPtr make_leaf(int letter, int alphabet_size);
BracketPtr make_bracket(const BracketPtr& a, const BracketPtr& b);
// ad^k_a(b) = [a,[a,...,[a,b]]]
BracketPtr make_ad(const BracketPtr& a, int k, const BracketPtr& b);
// Parses the nested-array text produced in Bracket::key.
BracketPtr parse_bracket(const std::string& text, int alphabet_size);
// Pretty form with letter names, e.g. [X0,[X0,X1]].
std::string bracket_label(const Bracket& b, const std::vector<std::string>& names = {});

NCSeries expand_to_words(const Bracket& b, int degree);

using CountFilter = std::function<bool(const std::vector<int>& counts)>;

enum class OrderPolicy { length_then_lex, custom };

// Length-compatible Hall set. Elements are stored in increasing order, so the
// position of an element is its rank. Ties within a length are broken by the
// lexicographic order on (rank of left factor, rank of right factor); the
// order of the letters is given by letter_order (smallest first).
class HallBasis {
public:
    int alphabet_size() const { return q_; }
    int max_length() const { return max_len_; }
    std::size_t size() const { return elems_.size(); }
    const BracketPtr& operator[](std::size_t i) const { return elems_[i]; }
    const std::vector<BracketPtr>& elements() const { return elems_; }
    const std::vector<int>& letter_order() const { return letter_order_; }
    const CountFilter& filter() const { return filter_; }

    // -1 when the bracket is not in the basis.
    int find(const Bracket& b) const;
    int find(const std::string& key) const;
    int leaf_index(int letter) const;
    int left_index(std::size_t i) const { return left_[i]; }
    int right_index(std::size_t i) const { return right_[i]; }

    // Word expansion with truncation degree equal to max_length.
    const NCSeries& expansion(std::size_t i) const { return expansions_[i]; }

    std::vector<std::size_t> with_counts(const std::vector<int>& counts) const;

    friend HallBasis build_hall_basis(int, int, OrderPolicy, std::vector<int>, CountFilter);

private:
    int q_ = 0;
    int max_len_ = 0;
    std::vector<int> letter_order_;
    CountFilter filter_;
    std::vector<BracketPtr> elems_;
    std::vector<int> left_, right_;
    std::vector<NCSeries> expansions_;
    std::unordered_map<std::string, int> index_;
    std::map<std::vector<int>, std::vector<std::size_t>> by_counts_;
};

// With OrderPolicy::custom, letter_order lists the letters from smallest to
// largest. The filter (if any) must be monotone: the counts of the factors
// of a kept bracket must be kept as well.
HallBasis build_hall_basis(int alphabet_size, int max_length,
                           OrderPolicy policy = OrderPolicy::length_then_lex,
                           std::vector<int> letter_order = {}, CountFilter filter = nullptr);

// Audits the three Hall-set conditions on every stored element.
bool hall_conditions_hold(const HallBasis& basis, std::string* witness = nullptr);

// Coefficients c_b with sum c_b expand(b) = a. Throws if a is not a Lie
// element or has a component outside the span of the basis.
std::map<std::size_t, Rational> hall_decompose(const NCSeries& a, const HallBasis& basis);

// Rebuilds sum c_b expand(b) with the given truncation degree.
NCSeries hall_recombine(const std::map<std::size_t, Rational>& coeffs, const HallBasis& basis, int degree);

struct Malabar {
    int m = 0;
    int mbar = 0;
    BracketPtr core;
};

// b = ad^m_{X0} adbar^{mbar}_{X0}(core), adbar being right bracketing by X0.
Malabar malabar_factorize(const Bracket& b, const HallBasis& basis, int x0 = 0);

// Second-kind factorization b = ad^m_{b1}(b2) with m maximal.
struct AdFactor {
    int m = 0;
    BracketPtr b1, b2;
};
AdFactor ad_factorize(const BracketPtr& b);

// Witt formula (1/n) sum_{d|n} mu(d) q^{n/d}.
long witt_dimension(int q, int n);

// Rank of the word expansions of the basis elements of length n.
long expansion_rank(const HallBasis& basis, int n);

// Structure constants of [b_i,b_j] on the basis, for |b_i|+|b_j| <= max_length.
struct StructureRow {
    std::size_t i, j;
    std::map<std::size_t, Rational> coeffs;
};
std::vector<StructureRow> structure_constants(const HallBasis& basis, int max_total_length);

std::string basis_to_json(const HallBasis& basis, const std::vector<std::string>& names = {});

}  // namespace flowexp
