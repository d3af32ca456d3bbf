#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace twinsem {

struct Factor {
    std::string variable;
    int power = 1;

    bool operator==(const Factor&) const = default;
};

/// Product of factors; the empty term is the intercept.
struct Term {
    std::vector<Factor> factors;

    std::string name() const;
    bool operator==(const Term&) const = default;
};

/// `dv ~ rhs` where rhs uses `+`, `*` (main effects plus interactions) and `I(x^k)`.
struct Formula {
    // Not an aggregate, so a braced name list never converts to a Formula.
    Formula() = default;

    std::string response;
    std::vector<Term> terms;
};

/// Throws ParseError on anything outside the grammar.
Formula parse_formula(std::string_view text);

/// Main-effect formula for each dv: dv ~ c1 + c2 + ...
Formula main_effects(const std::string& response, const std::vector<std::string>& covariates);

}  // namespace twinsem
