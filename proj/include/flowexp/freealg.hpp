#pragma once

#include <gmpxx.h>

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace flowexp {

using Rational = mpq_class;

// A word is a string whose chars are letter indices (0, 1, 2, ...), not digits.
using Word = std::string;

Word make_word(std::initializer_list<int> letters);
Word make_word(const std::vector<int>& letters);
std::string word_to_text(const Word& w);
Word word_from_text(const std::string& s);

int count_letter(const Word& w, int letter);

std::vector<Word> word_enumerate(int alphabet_size, int degree);

// Truncated noncommutative series over the rationals. Words longer than the
// truncation degree are never stored, zero coefficients are never stored.
class NCSeries {
public:
    explicit NCSeries(int degree = 0) : N_(degree) {}

    static NCSeries one(int degree);
    static NCSeries letter(int degree, int i, const Rational& c = 1);
    static NCSeries monomial(int degree, const Word& w, const Rational& c = 1);

    int degree() const { return N_; }
    const std::map<Word, Rational>& terms() const { return c_; }
    bool empty() const { return c_.empty(); }
    std::size_t size() const { return c_.size(); }

    Rational coeff(const Word& w) const;
    Rational constant() const { return coeff(Word()); }

    // Adds c to the coefficient of w. Throws if |w| exceeds the degree.
    void add(const Word& w, const Rational& c);

    NCSeries homogeneous(int n) const;
    NCSeries filtered(const std::function<bool(const Word&)>& keep) const;
    // Explicit change of truncation degree (drops words when lowering).
    NCSeries retruncated(int degree) const;
    int max_length() const;

    NCSeries& operator+=(const NCSeries& o);
    NCSeries& operator-=(const NCSeries& o);
    NCSeries& operator*=(const Rational& s);

    friend NCSeries operator+(NCSeries a, const NCSeries& b) { return a += b; }
    friend NCSeries operator-(NCSeries a, const NCSeries& b) { return a -= b; }
    friend NCSeries operator*(NCSeries a, const Rational& s) { return a *= s; }
    friend NCSeries operator*(const Rational& s, NCSeries a) { return a *= s; }
    friend NCSeries operator-(NCSeries a) { return a *= -1; }

    bool operator==(const NCSeries& o) const { return N_ == o.N_ && c_ == o.c_; }
    bool operator!=(const NCSeries& o) const { return !(*this == o); }

    // One `word=p/q` line per stored word. The empty word is written as `e`.
    std::string to_text() const;
    static NCSeries from_text(const std::string& text, int degree);

private:
    int N_;
    std::map<Word, Rational> c_;
};

NCSeries nc_mul(const NCSeries& a, const NCSeries& b);
NCSeries nc_bracket(const NCSeries& a, const NCSeries& b);
NCSeries nc_exp(const NCSeries& a);
// `keep` drops words after every product; it must be monotone under
// concatenation (a word is dropped whenever one of its factors is).
NCSeries nc_log(const NCSeries& s, const std::function<bool(const Word&)>& keep = nullptr);
NCSeries nc_pow(const NCSeries& a, int m);

// Algebra morphism sending letter i to images[i]; the result has the given
// degree. `keep` prunes words of intermediate products (it must be stable
// under taking prefixes of the filtered statistic, e.g. letter counts).
NCSeries nc_substitute(const NCSeries& a, const std::vector<NCSeries>& images, int degree,
                       const std::function<bool(const Word&)>& keep = nullptr);

NCSeries dynkin_beta(const NCSeries& a);

// Tensor algebra element, pairs of words with total length at most degree.
struct Tensor2 {
    int degree = 0;
    std::map<std::pair<Word, Word>, Rational> c;

    void add(const Word& a, const Word& b, const Rational& v);
    bool operator==(const Tensor2& o) const { return degree == o.degree && c == o.c; }
};

Tensor2 coproduct(const NCSeries& a);
Tensor2 tensor_square(const NCSeries& a);

bool is_lie_element_dynkin(const NCSeries& a);
bool is_lie_element_friedrichs(const NCSeries& a);
// Dynkin test; with check_friedrichs also runs the coproduct test and throws
// std::logic_error if the two verdicts disagree.
bool is_lie_element(const NCSeries& a, bool check_friedrichs = false);
bool grouplike_check(const NCSeries& s);

}  // namespace flowexp
