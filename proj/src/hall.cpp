#include "flowexp/hall.hpp"

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace flowexp {

BracketPtr make_leaf(int letter, int alphabet_size)
{
    if (letter < 0 || letter >= alphabet_size) throw std::out_of_range("make_leaf: letter out of range");
    auto b = std::make_shared<Bracket>();
    b->letter = letter;
    b->length = 1;
    b->counts.assign(alphabet_size, 0);
    b->counts[letter] = 1;
    b->key = std::to_string(letter);
    return b;
}

BracketPtr make_bracket(const BracketPtr& a, const BracketPtr& c)
{
    if (a->counts.size() != c->counts.size()) throw std::invalid_argument("make_bracket: alphabet mismatch");
    auto b = std::make_shared<Bracket>();
    b->left = a;
    b->right = c;
    b->length = a->length + c->length;
    b->counts.resize(a->counts.size());
    for (std::size_t i = 0; i < b->counts.size(); ++i) b->counts[i] = a->counts[i] + c->counts[i];
    b->key = "[" + a->key + "," + c->key + "]";
    return b;
}

BracketPtr make_ad(const BracketPtr& a, int k, const BracketPtr& b)
{
    BracketPtr r = b;
    for (int i = 0; i < k; ++i) r = make_bracket(a, r);
    return r;
}

namespace {

BracketPtr parse_at(const std::string& s, std::size_t& i, int q)
{
    while (i < s.size() && s[i] == ' ') ++i;
    if (i >= s.size()) throw std::invalid_argument("parse_bracket: unexpected end");
    if (s[i] == '[') {
        ++i;
        BracketPtr a = parse_at(s, i, q);
        while (i < s.size() && s[i] == ' ') ++i;
        if (i >= s.size() || s[i] != ',') throw std::invalid_argument("parse_bracket: expected ','");
        ++i;
        BracketPtr b = parse_at(s, i, q);
        while (i < s.size() && s[i] == ' ') ++i;
        if (i >= s.size() || s[i] != ']') throw std::invalid_argument("parse_bracket: expected ']'");
        ++i;
        return make_bracket(a, b);
    }
    std::size_t j = i;
    while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
    if (j == i) throw std::invalid_argument("parse_bracket: expected letter");
    int l = std::stoi(s.substr(i, j - i));
    i = j;
    return make_leaf(l, q);
}

}  // namespace

BracketPtr parse_bracket(const std::string& text, int alphabet_size)
{
    std::size_t i = 0;
    BracketPtr b = parse_at(text, i, alphabet_size);
    while (i < text.size() && text[i] == ' ') ++i;
    if (i != text.size()) throw std::invalid_argument("parse_bracket: trailing characters");
    return b;
}

std::string bracket_label(const Bracket& b, const std::vector<std::string>& names)
{
    if (b.is_leaf())
        return b.letter < static_cast<int>(names.size()) ? names[b.letter] : "X" + std::to_string(b.letter);
    return "[" + bracket_label(*b.left, names) + "," + bracket_label(*b.right, names) + "]";
}

NCSeries expand_to_words(const Bracket& b, int degree)
{
    if (b.length > degree) throw std::invalid_argument("expand_to_words: bracket longer than degree");
    if (b.is_leaf()) return NCSeries::letter(degree, b.letter);
    return nc_bracket(expand_to_words(*b.left, degree), expand_to_words(*b.right, degree));
}

int HallBasis::find(const Bracket& b) const
{
    return find(b.key);
}

int HallBasis::find(const std::string& key) const
{
    auto it = index_.find(key);
    return it == index_.end() ? -1 : it->second;
}

int HallBasis::leaf_index(int letter) const
{
    return find(std::to_string(letter));
}

std::vector<std::size_t> HallBasis::with_counts(const std::vector<int>& counts) const
{
    auto it = by_counts_.find(counts);
    return it == by_counts_.end() ? std::vector<std::size_t>{} : it->second;
}

HallBasis build_hall_basis(int alphabet_size, int max_length, OrderPolicy policy,
                           std::vector<int> letter_order, CountFilter filter)
{
    if (alphabet_size < 1 || max_length < 1) throw std::invalid_argument("build_hall_basis: bad arguments");
    if (policy == OrderPolicy::length_then_lex || letter_order.empty()) {
        letter_order.resize(alphabet_size);
        std::iota(letter_order.begin(), letter_order.end(), 0);
    }
    {
        std::vector<int> chk = letter_order;
        std::sort(chk.begin(), chk.end());
        for (int i = 0; i < alphabet_size; ++i)
            if (static_cast<int>(chk.size()) != alphabet_size || chk[i] != i)
                throw std::invalid_argument("build_hall_basis: letter_order is not a permutation");
    }

    HallBasis B;
    B.q_ = alphabet_size;
    B.max_len_ = max_length;
    B.letter_order_ = letter_order;
    B.filter_ = filter;

    auto push = [&B, max_length](BracketPtr b, int l, int r) {
        int idx = static_cast<int>(B.elems_.size());
        B.index_.emplace(b->key, idx);
        B.by_counts_[b->counts].push_back(idx);
        B.left_.push_back(l);
        B.right_.push_back(r);
        if (b->is_leaf())
            B.expansions_.push_back(NCSeries::letter(max_length, b->letter));
        else
            B.expansions_.push_back(nc_bracket(B.expansions_[l], B.expansions_[r]));
        B.elems_.push_back(std::move(b));
    };

    for (int l : letter_order) {
        auto leaf = make_leaf(l, alphabet_size);
        if (filter && !filter(leaf->counts)) continue;
        push(leaf, -1, -1);
    }

    std::vector<std::vector<int>> of_length(max_length + 1);
    for (std::size_t i = 0; i < B.elems_.size(); ++i) of_length[1].push_back(static_cast<int>(i));

    for (int n = 2; n <= max_length; ++n) {
        std::vector<std::pair<int, int>> cand;
        for (int len2 = 1; len2 < n; ++len2) {
            int len1 = n - len2;
            for (int j : of_length[len2]) {
                const auto& b2 = B.elems_[j];
                int lam = b2->is_leaf() ? -1 : B.left_[j];
                for (int i : of_length[len1]) {
                    if (!(i < j)) continue;
                    if (lam >= 0 && !(lam <= i)) continue;
                    cand.emplace_back(i, j);
                }
            }
        }
        std::sort(cand.begin(), cand.end());
        for (auto [i, j] : cand) {
            auto b = make_bracket(B.elems_[i], B.elems_[j]);
            if (filter && !filter(b->counts)) continue;
            of_length[n].push_back(static_cast<int>(B.elems_.size()));
            push(b, i, j);
        }
    }
    return B;
}

bool hall_conditions_hold(const HallBasis& B, std::string* witness)
{
    auto fail = [witness](const std::string& msg) {
        if (witness) *witness = msg;
        return false;
    };
    for (int l = 0; l < B.alphabet_size(); ++l)
        if (B.leaf_index(l) < 0 && (!B.filter() || B.filter()(make_leaf(l, B.alphabet_size())->counts)))
            return fail("missing letter " + std::to_string(l));
    for (std::size_t k = 0; k < B.size(); ++k) {
        const auto& b = B[k];
        if (k > 0 && B[k - 1]->length > b->length) return fail("order not length-compatible at " + b->key);
        if (b->is_leaf()) continue;
        int i = B.find(*b->left), j = B.find(*b->right);
        if (i < 0 || j < 0) return fail("factor outside the basis: " + b->key);
        if (!(i < j)) return fail("left factor not smaller: " + b->key);
        if (!b->right->is_leaf()) {
            int lam = B.find(*b->right->left);
            if (!(lam <= i)) return fail("lambda(right) > left: " + b->key);
        }
        if (!(i < static_cast<int>(k))) return fail("left factor not below the bracket: " + b->key);
    }
    // Completeness of each length: every admissible bracket of stored factors is stored.
    for (std::size_t i = 0; i < B.size(); ++i)
        for (std::size_t j = i + 1; j < B.size(); ++j) {
            if (B[i]->length + B[j]->length > B.max_length()) continue;
            bool admissible = B[j]->is_leaf() || B.find(*B[j]->left) <= static_cast<int>(i);
            if (!admissible) continue;
            auto b = make_bracket(B[i], B[j]);
            if (B.filter() && !B.filter()(b->counts)) continue;
            if (B.find(*b) < 0) return fail("admissible bracket missing: " + b->key);
        }
    return true;
}

namespace {

// Fully reduced echelon form over the rationals, tracking combinations of
// the inserted columns.
struct Echelon {
    struct Row {
        Word pivot;
        std::map<Word, Rational> v;
        std::vector<Rational> comb;
    };
    std::size_t ncols = 0;
    std::vector<Row> rows;

    static void axpy(std::map<Word, Rational>& y, const Rational& a, const std::map<Word, Rational>& x)
    {
        for (const auto& [w, c] : x) {
            auto [it, ins] = y.try_emplace(w, 0);
            it->second += a * c;
            if (it->second == 0) y.erase(it);
        }
    }

    // Returns false if v is dependent on the previously inserted columns.
    bool insert(std::map<Word, Rational> v, std::size_t col)
    {
        std::vector<Rational> comb(ncols);
        comb[col] = 1;
        for (const auto& r : rows) {
            auto it = v.find(r.pivot);
            if (it == v.end()) continue;
            Rational f = -it->second;
            axpy(v, f, r.v);
            for (std::size_t k = 0; k < ncols; ++k) comb[k] += f * r.comb[k];
        }
        if (v.empty()) return false;
        Word p = v.begin()->first;
        Rational inv = 1 / v.begin()->second;
        for (auto& kv : v) kv.second *= inv;
        for (auto& c : comb) c *= inv;
        for (auto& r : rows) {
            auto it = r.v.find(p);
            if (it == r.v.end()) continue;
            Rational f = -it->second;
            axpy(r.v, f, v);
            for (std::size_t k = 0; k < ncols; ++k) r.comb[k] += f * comb[k];
        }
        rows.push_back({p, std::move(v), std::move(comb)});
        return true;
    }
};

std::map<Word, Rational> as_map(const NCSeries& s)
{
    return std::map<Word, Rational>(s.terms().begin(), s.terms().end());
}

std::vector<int> word_counts(const Word& w, int q)
{
    std::vector<int> c(q, 0);
    for (char l : w) {
        if (l < 0 || l >= q) throw std::out_of_range("word letter outside the basis alphabet");
        ++c[static_cast<int>(l)];
    }
    return c;
}

}  // namespace

std::map<std::size_t, Rational> hall_decompose(const NCSeries& a, const HallBasis& B)
{
    if (a.constant() != 0) throw std::invalid_argument("hall_decompose: nonzero constant term");
    if (a.max_length() > B.max_length()) throw std::invalid_argument("hall_decompose: degree exceeds basis");
    if (!is_lie_element(a)) throw std::invalid_argument("hall_decompose: not a Lie element");

    std::map<std::vector<int>, std::map<Word, Rational>> parts;
    for (const auto& [w, c] : a.terms()) parts[word_counts(w, B.alphabet_size())].emplace(w, c);

    std::map<std::size_t, Rational> out;
    for (auto& [counts, target] : parts) {
        auto cols = B.with_counts(counts);
        if (cols.empty()) throw std::invalid_argument("hall_decompose: component outside the basis span");
        Echelon E;
        E.ncols = cols.size();
        for (std::size_t k = 0; k < cols.size(); ++k)
            if (!E.insert(as_map(B.expansion(cols[k])), k))
                throw std::logic_error("hall_decompose: dependent basis expansions");
        std::vector<Rational> sol(cols.size());
        std::map<Word, Rational> resid = target;
        for (const auto& r : E.rows) {
            auto it = target.find(r.pivot);
            if (it == target.end()) continue;
            for (std::size_t k = 0; k < cols.size(); ++k) sol[k] += it->second * r.comb[k];
            Echelon::axpy(resid, -it->second, r.v);
        }
        if (!resid.empty()) throw std::invalid_argument("hall_decompose: component outside the basis span");
        for (std::size_t k = 0; k < cols.size(); ++k)
            if (sol[k] != 0) out[cols[k]] = sol[k];
    }
    return out;
}

NCSeries hall_recombine(const std::map<std::size_t, Rational>& coeffs, const HallBasis& B, int degree)
{
    NCSeries r(degree);
    for (const auto& [i, c] : coeffs) {
        if (B[i]->length > degree) continue;
        r += B.expansion(i).retruncated(degree) * c;
    }
    return r;
}

Malabar malabar_factorize(const Bracket& b, const HallBasis& B, int x0)
{
    if (B.find(b) < 0) throw std::invalid_argument("malabar_factorize: bracket not in basis");
    auto is_x0 = [x0](const BracketPtr& p) { return p->is_leaf() && p->letter == x0; };
    Malabar r;
    BracketPtr cur = B[B.find(b)];
    while (!cur->is_leaf() && is_x0(cur->left)) {
        ++r.m;
        cur = cur->right;
    }
    while (!cur->is_leaf() && is_x0(cur->right)) {
        ++r.mbar;
        cur = cur->left;
    }
    if (!cur->is_leaf() && (is_x0(cur->left) || is_x0(cur->right)))
        throw std::logic_error("malabar_factorize: core still contains an X0 factor");
    r.core = cur;
    return r;
}

AdFactor ad_factorize(const BracketPtr& b)
{
    if (b->is_leaf()) throw std::invalid_argument("ad_factorize: leaf");
    AdFactor f;
    f.b1 = b->left;
    BracketPtr cur = b;
    while (!cur->is_leaf() && cur->left->key == f.b1->key) {
        ++f.m;
        cur = cur->right;
    }
    f.b2 = cur;
    return f;
}

long witt_dimension(int q, int n)
{
    auto mobius = [](int d) {
        int r = 1;
        for (int p = 2; p * p <= d; ++p)
            if (d % p == 0) {
                d /= p;
                if (d % p == 0) return 0;
                r = -r;
            }
        if (d > 1) r = -r;
        return r;
    };
    long s = 0;
    for (int d = 1; d <= n; ++d)
        if (n % d == 0) {
            long p = 1;
            for (int k = 0; k < n / d; ++k) p *= q;
            s += mobius(d) * p;
        }
    return s / n;
}

long expansion_rank(const HallBasis& B, int n)
{
    Echelon E;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < B.size(); ++i)
        if (B[i]->length == n) idx.push_back(i);
    E.ncols = idx.size();
    long rank = 0;
    for (std::size_t k = 0; k < idx.size(); ++k)
        if (E.insert(as_map(B.expansion(idx[k])), k)) ++rank;
    return rank;
}

std::vector<StructureRow> structure_constants(const HallBasis& B, int max_total_length)
{
    std::vector<StructureRow> out;
    for (std::size_t i = 0; i < B.size(); ++i)
        for (std::size_t j = i + 1; j < B.size(); ++j) {
            if (B[i]->length + B[j]->length > std::min(max_total_length, B.max_length())) continue;
            NCSeries br = nc_bracket(B.expansion(i), B.expansion(j));
            out.push_back({i, j, hall_decompose(br, B)});
        }
    return out;
}

std::string basis_to_json(const HallBasis& B, const std::vector<std::string>& names)
{
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < B.size(); ++i) {
        const auto& b = B[i];
        nlohmann::json e;
        e["index"] = i;
        e["bracket"] = nlohmann::json::parse(b->key);
        e["label"] = bracket_label(*b, names);
        e["length"] = b->length;
        e["counts"] = b->counts;
        e["rank"] = i;
        arr.push_back(e);
    }
    nlohmann::json root;
    root["alphabet_size"] = B.alphabet_size();
    root["max_length"] = B.max_length();
    root["letter_order"] = B.letter_order();
    root["elements"] = arr;
    return root.dump(2);
}

}  // namespace flowexp
