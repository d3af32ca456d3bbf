#include "twinsem/formula.hpp"

#include "twinsem/error.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace twinsem {

std::string Term::name() const {
    if (factors.empty()) return "(Intercept)";
    std::string out;
    for (const auto& f : factors) {
        if (!out.empty()) out += ":";
        out += f.power == 1 ? f.variable : "I(" + f.variable + "^" + std::to_string(f.power) + ")";
    }
    return out;
}

namespace {

class FormulaParser {
public:
    explicit FormulaParser(std::string_view text) : text_(text) {}

    Formula parse() {
        Formula out;
        out.response = identifier();
        skip_space();
        if (!consume('~')) fail("expected '~' after the response");
        std::set<std::string> seen;
        auto add = [&](Term t) {
            std::sort(t.factors.begin(), t.factors.end(), [](const Factor& a, const Factor& b) {
                return a.variable != b.variable ? a.variable < b.variable : a.power < b.power;
            });
            if (seen.insert(t.name()).second) out.terms.push_back(std::move(t));
        };
        do {
            std::vector<Factor> product;
            product.push_back(factor());
            skip_space();
            while (consume('*')) {
                product.push_back(factor());
                skip_space();
            }
            const std::size_t n = product.size();
            // a*b*c expands to every non-empty subset, lower orders first.
            for (std::size_t order = 1; order <= n; ++order)
                for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
                    if (static_cast<std::size_t>(__builtin_popcountll(mask)) != order) continue;
                    Term t;
                    for (std::size_t i = 0; i < n; ++i)
                        if (mask & (std::size_t{1} << i)) t.factors.push_back(product[i]);
                    add(std::move(t));
                }
            skip_space();
        } while (consume('+'));
        skip_space();
        if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
        return out;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(1, "formula '" + std::string(text_) + "': " + msg);
    }

    void skip_space() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool consume(char c) {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    std::string identifier() {
        skip_space();
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_' || text_[pos_] == '.'))
            ++pos_;
        if (start == pos_) fail("expected a variable name");
        if (std::isdigit(static_cast<unsigned char>(text_[start]))) fail("variable names cannot start with a digit");
        return std::string(text_.substr(start, pos_ - start));
    }

    Factor factor() {
        skip_space();
        const std::size_t save = pos_;
        std::string id = identifier();
        if (id == "I" && consume('(')) {
            Factor f{identifier(), 1};
            if (!consume('^')) fail("I() terms must have the form I(x^k)");
            skip_space();
            const std::size_t start = pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            if (start == pos_) fail("power in I(x^k) must be a positive integer");
            f.power = std::stoi(std::string(text_.substr(start, pos_ - start)));
            if (f.power < 1) fail("power in I(x^k) must be a positive integer");
            if (!consume(')')) fail("unclosed I(");
            return f;
        }
        (void)save;
        return Factor{std::move(id), 1};
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

}  // namespace

Formula parse_formula(std::string_view text) { return FormulaParser(text).parse(); }

Formula main_effects(const std::string& response, const std::vector<std::string>& covariates) {
    Formula out;
    out.response = response;
    for (const auto& c : covariates) out.terms.push_back(Term{{Factor{c, 1}}});
    return out;
}

}  // namespace twinsem
