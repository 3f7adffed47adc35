#include "flowexp/freealg.hpp"

#include <sstream>
#include <stdexcept>

namespace flowexp {

Word make_word(std::initializer_list<int> letters)
{
    return make_word(std::vector<int>(letters));
}

Word make_word(const std::vector<int>& letters)
{
    Word w;
    w.reserve(letters.size());
    for (int l : letters) {
        if (l < 0 || l > 120) throw std::invalid_argument("letter index out of range");
        w.push_back(static_cast<char>(l));
    }
    return w;
}

std::string word_to_text(const Word& w)
{
    if (w.empty()) return "e";
    std::string s;
    for (char c : w) {
        int l = static_cast<int>(c);
        if (l < 10)
            s.push_back(static_cast<char>('0' + l));
        else
            s += "(" + std::to_string(l) + ")";
    }
    return s;
}

Word word_from_text(const std::string& s)
{
    if (s == "e") return Word();
    Word w;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '(') {
            auto j = s.find(')', i);
            if (j == std::string::npos) throw std::invalid_argument("bad word text: " + s);
            w.push_back(static_cast<char>(std::stoi(s.substr(i + 1, j - i - 1))));
            i = j;
        } else if (s[i] >= '0' && s[i] <= '9') {
            w.push_back(static_cast<char>(s[i] - '0'));
        } else {
            throw std::invalid_argument("bad word text: " + s);
        }
    }
    return w;
}

int count_letter(const Word& w, int letter)
{
    int n = 0;
    for (char c : w)
        if (c == letter) ++n;
    return n;
}

std::vector<Word> word_enumerate(int alphabet_size, int degree)
{
    if (alphabet_size < 1 || degree < 0) throw std::invalid_argument("word_enumerate: bad arguments");
    std::vector<Word> out{Word()};
    for (int d = 0; d < degree; ++d) {
        std::vector<Word> next;
        next.reserve(out.size() * alphabet_size);
        for (const auto& w : out)
            for (int l = 0; l < alphabet_size; ++l) next.push_back(w + static_cast<char>(l));
        out.swap(next);
    }
    return out;
}

NCSeries NCSeries::one(int degree)
{
    return monomial(degree, Word(), 1);
}

NCSeries NCSeries::letter(int degree, int i, const Rational& c)
{
    return monomial(degree, make_word({i}), c);
}

NCSeries NCSeries::monomial(int degree, const Word& w, const Rational& c)
{
    NCSeries s(degree);
    s.add(w, c);
    return s;
}

Rational NCSeries::coeff(const Word& w) const
{
    auto it = c_.find(w);
    return it == c_.end() ? Rational(0) : it->second;
}

void NCSeries::add(const Word& w, const Rational& c)
{
    if (static_cast<int>(w.size()) > N_) throw std::out_of_range("word exceeds truncation degree");
    if (c == 0) return;
    auto [it, inserted] = c_.try_emplace(w, c);
    if (inserted) {
        it->second.canonicalize();
    } else {
        it->second += c;
        if (it->second == 0) c_.erase(it);
    }
}

NCSeries NCSeries::homogeneous(int n) const
{
    return filtered([n](const Word& w) { return static_cast<int>(w.size()) == n; });
}

NCSeries NCSeries::filtered(const std::function<bool(const Word&)>& keep) const
{
    NCSeries r(N_);
    for (const auto& [w, c] : c_)
        if (keep(w)) r.c_.emplace(w, c);
    return r;
}

NCSeries NCSeries::retruncated(int degree) const
{
    NCSeries r(degree);
    for (const auto& [w, c] : c_)
        if (static_cast<int>(w.size()) <= degree) r.c_.emplace(w, c);
    return r;
}

int NCSeries::max_length() const
{
    int m = -1;
    for (const auto& kv : c_) m = std::max(m, static_cast<int>(kv.first.size()));
    return m;
}

NCSeries& NCSeries::operator+=(const NCSeries& o)
{
    if (o.N_ != N_) throw std::invalid_argument("mismatched truncation degrees");
    for (const auto& [w, c] : o.c_) add(w, c);
    return *this;
}

NCSeries& NCSeries::operator-=(const NCSeries& o)
{
    if (o.N_ != N_) throw std::invalid_argument("mismatched truncation degrees");
    for (const auto& [w, c] : o.c_) add(w, -c);
    return *this;
}

NCSeries& NCSeries::operator*=(const Rational& s)
{
    if (s == 0) {
        c_.clear();
        return *this;
    }
    Rational f(s);
    f.canonicalize();
    for (auto& kv : c_) kv.second *= f;
    return *this;
}

std::string NCSeries::to_text() const
{
    std::ostringstream os;
    for (const auto& [w, c] : c_) os << word_to_text(w) << "=" << c.get_str() << "\n";
    return os.str();
}

NCSeries NCSeries::from_text(const std::string& text, int degree)
{
    NCSeries s(degree);
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("bad series line: " + line);
        Rational c(line.substr(eq + 1));
        c.canonicalize();
        s.add(word_from_text(line.substr(0, eq)), c);
    }
    return s;
}

NCSeries nc_mul(const NCSeries& a, const NCSeries& b)
{
    if (a.degree() != b.degree()) throw std::invalid_argument("nc_mul: mismatched truncation degrees");
    const int N = a.degree();
    std::vector<std::vector<const std::pair<const Word, Rational>*>> by_len(N + 1);
    for (const auto& kv : b.terms()) by_len[kv.first.size()].push_back(&kv);
    NCSeries r(N);
    Rational prod;
    for (const auto& [wa, ca] : a.terms()) {
        int room = N - static_cast<int>(wa.size());
        for (int l = 0; l <= room; ++l)
            for (const auto* kb : by_len[l]) {
                prod = ca * kb->second;
                r.add(wa + kb->first, prod);
            }
    }
    return r;
}

NCSeries nc_bracket(const NCSeries& a, const NCSeries& b)
{
    return nc_mul(a, b) - nc_mul(b, a);
}

NCSeries nc_pow(const NCSeries& a, int m)
{
    NCSeries r = NCSeries::one(a.degree());
    for (int i = 0; i < m; ++i) r = nc_mul(r, a);
    return r;
}

NCSeries nc_exp(const NCSeries& a)
{
    if (a.constant() != 0) throw std::invalid_argument("nc_exp: nonzero constant term");
    const int N = a.degree();
    NCSeries r = NCSeries::one(N);
    NCSeries term = NCSeries::one(N);
    for (int m = 1; m <= N; ++m) {
        term = nc_mul(term, a) * Rational(1, m);
        if (term.empty()) break;
        r += term;
    }
    return r;
}

NCSeries nc_log(const NCSeries& s, const std::function<bool(const Word&)>& keep)
{
    if (s.constant() != 1) throw std::invalid_argument("nc_log: constant term must be 1");
    const int N = s.degree();
    NCSeries x = s - NCSeries::one(N);
    if (keep) x = x.filtered(keep);
    NCSeries r(N);
    NCSeries pw = NCSeries::one(N);
    for (int m = 1; m <= N; ++m) {
        pw = nc_mul(pw, x);
        if (keep) pw = pw.filtered(keep);
        if (pw.empty()) break;
        Rational c(m % 2 == 1 ? 1 : -1, m);
        c.canonicalize();
        r += pw * c;
    }
    return r;
}

NCSeries nc_substitute(const NCSeries& a, const std::vector<NCSeries>& images, int degree,
                       const std::function<bool(const Word&)>& keep)
{
    for (const auto& im : images)
        if (im.degree() != degree) throw std::invalid_argument("nc_substitute: image degree mismatch");
    // Products are shared along common prefixes (map iteration is lexicographic).
    NCSeries r(degree);
    Word prefix;
    std::vector<NCSeries> prods;  // prods[i] is the image of prefix[0..i]
    for (const auto& [w, c] : a.terms()) {
        std::size_t common = 0;
        while (common < prefix.size() && common < w.size() && prefix[common] == w[common]) ++common;
        prefix.resize(common);
        prods.resize(common);
        for (std::size_t i = common; i < w.size(); ++i) {
            int l = static_cast<int>(w[i]);
            if (l >= static_cast<int>(images.size())) throw std::out_of_range("nc_substitute: letter without image");
            NCSeries p = i == 0 ? images[l] : nc_mul(prods.back(), images[l]);
            if (keep) p = p.filtered(keep);
            prods.push_back(std::move(p));
            prefix.push_back(w[i]);
        }
        if (w.empty())
            r += NCSeries::one(degree) * c;
        else
            r += prods.back() * c;
    }
    return r;
}

namespace {

// Left-normed bracket [..[X_{i1},X_{i2}],..,X_{ik}] expanded into words.
void add_left_normed(const Word& w, const Rational& c, NCSeries& out)
{
    std::map<Word, Rational> cur{{w.substr(0, 1), c}};
    for (std::size_t i = 1; i < w.size(); ++i) {
        std::map<Word, Rational> next;
        for (const auto& [v, cv] : cur) {
            next[v + w[i]] += cv;
            next[w[i] + v] -= cv;
        }
        cur.swap(next);
    }
    for (const auto& [v, cv] : cur) out.add(v, cv);
}

}  // namespace

NCSeries dynkin_beta(const NCSeries& a)
{
    if (a.constant() != 0) throw std::invalid_argument("dynkin_beta: nonzero constant term");
    NCSeries r(a.degree());
    for (const auto& [w, c] : a.terms()) add_left_normed(w, c, r);
    return r;
}

void Tensor2::add(const Word& a, const Word& b, const Rational& v)
{
    if (static_cast<int>(a.size() + b.size()) > degree) return;
    if (v == 0) return;
    auto [it, inserted] = c.try_emplace({a, b}, v);
    if (!inserted) {
        it->second += v;
        if (it->second == 0) c.erase(it);
    }
}

Tensor2 coproduct(const NCSeries& a)
{
    Tensor2 t;
    t.degree = a.degree();
    for (const auto& [w, c] : a.terms()) {
        const std::size_t n = w.size();
        if (n > 20) throw std::out_of_range("coproduct: word too long");
        for (unsigned long mask = 0; mask < (1ul << n); ++mask) {
            Word l, r;
            for (std::size_t i = 0; i < n; ++i) ((mask >> i) & 1 ? l : r).push_back(w[i]);
            t.add(l, r, c);
        }
    }
    return t;
}

Tensor2 tensor_square(const NCSeries& a)
{
    Tensor2 t;
    t.degree = a.degree();
    for (const auto& [wa, ca] : a.terms())
        for (const auto& [wb, cb] : a.terms()) t.add(wa, wb, ca * cb);
    return t;
}

bool is_lie_element_dynkin(const NCSeries& a)
{
    if (a.constant() != 0) throw std::invalid_argument("is_lie_element: nonzero constant term");
    NCSeries b = dynkin_beta(a);
    for (const auto& [w, c] : a.terms())
        if (b.coeff(w) != c * static_cast<long>(w.size())) return false;
    for (const auto& [w, c] : b.terms())
        if (a.coeff(w) * static_cast<long>(w.size()) != c) return false;
    return true;
}

bool is_lie_element_friedrichs(const NCSeries& a)
{
    if (a.constant() != 0) throw std::invalid_argument("is_lie_element: nonzero constant term");
    Tensor2 expect;
    expect.degree = a.degree();
    for (const auto& [w, c] : a.terms()) {
        expect.add(w, Word(), c);
        expect.add(Word(), w, c);
    }
    return coproduct(a) == expect;
}

bool is_lie_element(const NCSeries& a, bool check_friedrichs)
{
    bool d = is_lie_element_dynkin(a);
    if (check_friedrichs && is_lie_element_friedrichs(a) != d)
        throw std::logic_error("Dynkin and Friedrichs criteria disagree");
    return d;
}

bool grouplike_check(const NCSeries& s)
{
    if (s.constant() != 1) throw std::invalid_argument("grouplike_check: constant term must be 1");
    return coproduct(s) == tensor_square(s);
}

}  // namespace flowexp
