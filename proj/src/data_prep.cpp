#include "twinsem/data_prep.hpp"

#include "twinsem/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

namespace twinsem {

namespace {

std::vector<std::string> suffix_list(const std::vector<std::string>& suffixes) {
    return suffixes.empty() ? std::vector<std::string>{""} : suffixes;
}

const std::vector<double>& numeric_column(const ColumnTable& data, const std::string& name, const char* what) {
    const Column* col = data.find(name);
    if (!col) throw DataError(std::string(what) + ": column '" + name + "' not found");
    if (!col->is_continuous()) throw DataError(std::string(what) + ": column '" + name + "' is not continuous");
    return std::get<ContinuousColumn>(col->data).values;
}

void check_twin_suffixes(const std::vector<std::string>& suffixes, const char* what) {
    if (suffixes.size() != 2) throw DataError(std::string(what) + ": exactly two twin suffixes are required");
    if (suffixes[0] == suffixes[1]) throw DataError(std::string(what) + ": twin suffixes must differ");
}

}  // namespace

ColumnTable make_bin_cont_pair(const ColumnTable& data, const std::vector<std::string>& vars, double censp,
                               const std::vector<std::string>& suffixes) {
    if (!std::isfinite(censp)) throw DataError("make_bin_cont_pair: censp must be finite");
    ColumnTable out = data;
    for (const auto& var : vars)
        for (const auto& s : suffix_list(suffixes)) {
            const auto& source = numeric_column(data, var + s, "make_bin_cont_pair");
            std::vector<int> bin(source.size(), kMissingCode);
            std::vector<double> cont(source.size(), kMissing);
            for (std::size_t r = 0; r < source.size(); ++r) {
                if (is_missing(source[r])) continue;
                if (source[r] < censp)
                    bin[r] = 0;
                else
                    cont[r] = source[r];
            }
            out.put_ordinal(var + "bin" + s, {"<low>", "<high>"}, std::move(bin));
            out.put_continuous(var + "cont" + s, std::move(cont));
        }
    return out;
}

ColumnTable update_covariate_placeholders(const ColumnTable& data, const std::string& covar,
                                          const std::string& pheno, const std::vector<std::string>& suffixes) {
    check_twin_suffixes(suffixes, "update_covariate_placeholders");
    if (covar == pheno) throw DataError("update_covariate_placeholders: covar and pheno must differ");
    std::array<std::vector<double>, 2> cov;
    std::array<std::string, 2> pheno_names;
    for (std::size_t t = 0; t < 2; ++t) {
        cov[t] = numeric_column(data, covar + suffixes[t], "update_covariate_placeholders");
        pheno_names[t] = pheno + suffixes[t];
        if (!data.has(pheno_names[t]))
            throw DataError("update_covariate_placeholders: column '" + pheno_names[t] + "' not found");
    }
    ColumnTable out = data;
    for (std::size_t t = 0; t < 2; ++t) {
        const std::size_t other = 1 - t;
        Column pheno_col = out.column(pheno_names[t]);
        std::vector<double> updated = cov[t];
        for (std::size_t r = 0; r < data.nrows(); ++r) {
            if (!is_missing(cov[t][r]) || is_missing(cov[other][r])) continue;
            updated[r] = kPlaceholder;
            std::visit(
                [r](auto& c) {
                    using T = std::decay_t<decltype(c)>;
                    if constexpr (std::is_same_v<T, ContinuousColumn>)
                        c.values[r] = kMissing;
                    else if constexpr (std::is_same_v<T, OrdinalColumn>)
                        c.codes[r] = kMissingCode;
                    else
                        c.values[r].reset();
                },
                pheno_col.data);
        }
        out.put_continuous(covar + suffixes[t], std::move(updated));
        out.put(std::move(pheno_col));
    }
    return out;
}

std::vector<PrepWarning> validate_placeholders(const ColumnTable& data, const std::string& covar,
                                               const std::string& pheno, const std::vector<std::string>& suffixes) {
    std::vector<PrepWarning> out;
    for (std::size_t r = 0; r < data.nrows(); ++r)
        for (const auto& s : suffixes) {
            const Column* c = data.find(covar + s);
            const Column* p = data.find(pheno + s);
            if (!c || !p || !c->is_continuous()) continue;
            if (std::get<ContinuousColumn>(c->data).values[r] != kPlaceholder || p->missing(r)) continue;
            out.push_back({r, covar + s,
                           "row " + std::to_string(r + 1) + ": " + covar + s + " holds the placeholder " +
                               format_number(kPlaceholder) + " but " + pheno + s +
                               " is observed; the placeholder will enter the likelihood"});
        }
    return out;
}

ColumnTable residualize(const ColumnTable& data, const std::vector<std::string>& dvs,
                        const std::vector<std::string>& covariates, const std::vector<std::string>& suffixes,
                        std::vector<std::string>* warnings) {
    ColumnTable out = data;
    for (const auto& dv : dvs) out = residualize(out, main_effects(dv, covariates), suffixes, warnings);
    return out;
}

ColumnTable residualize(const ColumnTable& data, const Formula& formula, const std::vector<std::string>& suffixes,
                        std::vector<std::string>* warnings) {
    const auto copies = suffix_list(suffixes);
    for (const auto& s : copies) {
        const std::string dv = formula.response + s;
        const Column* col = data.find(dv);
        if (!col) throw DataError("residualize: column '" + dv + "' not found");
        if (col->is_ordinal())
            throw DataError("residualize: '" + dv +
                            "' is ordinal; ordinal outcomes cannot be residualized, use definition variables");
    }

    // Stack (row, copy) observations; all copies share one coefficient vector.
    struct Obs {
        std::size_t copy;
        std::size_t row;
    };
    std::vector<Obs> used;
    std::vector<std::vector<double>> design_rows;
    std::vector<double> response;
    const std::size_t p = formula.terms.size();
    for (std::size_t k = 0; k < copies.size(); ++k) {
        const auto& y = numeric_column(data, formula.response + copies[k], "residualize");
        std::vector<const std::vector<double>*> vars;
        std::vector<std::vector<std::size_t>> index(p);
        std::map<std::string, std::size_t> slot;
        for (std::size_t j = 0; j < p; ++j)
            for (const auto& f : formula.terms[j].factors) {
                // A covariate without per-twin copies (e.g. a pair-level age) is shared.
                const std::string name =
                    data.has(f.variable + copies[k]) || !data.has(f.variable) ? f.variable + copies[k] : f.variable;
                auto [it, inserted] = slot.emplace(name, vars.size());
                if (inserted) vars.push_back(&numeric_column(data, name, "residualize"));
                index[j].push_back(it->second);
            }
        for (std::size_t r = 0; r < data.nrows(); ++r) {
            if (is_missing(y[r])) continue;
            std::vector<double> x(p, 1.0);
            bool complete = true;
            for (std::size_t j = 0; j < p && complete; ++j)
                for (std::size_t f = 0; f < index[j].size(); ++f) {
                    const double v = (*vars[index[j][f]])[r];
                    if (is_missing(v)) {
                        complete = false;
                        break;
                    }
                    x[j] *= std::pow(v, formula.terms[j].factors[f].power);
                }
            if (!complete) continue;
            used.push_back({k, r});
            design_rows.push_back(std::move(x));
            response.push_back(y[r]);
        }
    }
    if (used.empty()) throw DataError("residualize: no complete rows for '" + formula.response + "'");

    std::vector<std::size_t> kept;
    for (std::size_t j = 0; j < p; ++j) {
        const double first = design_rows.front()[j];
        const bool constant = std::all_of(design_rows.begin(), design_rows.end(),
                                          [&](const std::vector<double>& x) { return x[j] == first; });
        if (constant) {
            if (warnings)
                warnings->push_back("residualize: term '" + formula.terms[j].name() + "' is constant for '" +
                                    formula.response + "' and was dropped (intercept absorbs it)");
            continue;
        }
        kept.push_back(j);
    }

    const auto n = static_cast<Eigen::Index>(used.size());
    Eigen::MatrixXd X(n, static_cast<Eigen::Index>(kept.size() + 1));
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        for (std::size_t j = 0; j < kept.size(); ++j)
            X(i, static_cast<Eigen::Index>(j + 1)) = design_rows[static_cast<std::size_t>(i)][kept[j]];
        y(i) = response[static_cast<std::size_t>(i)];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols())
        throw DataError("residualize: design for '" + formula.response +
                        "' is rank deficient (perfectly collinear covariates)");
    const Eigen::VectorXd beta = qr.solve(y);
    const Eigen::VectorXd resid = y - X * beta;

    std::vector<std::vector<double>> columns(copies.size(), std::vector<double>(data.nrows(), kMissing));
    for (std::size_t i = 0; i < used.size(); ++i) columns[used[i].copy][used[i].row] = resid(static_cast<Eigen::Index>(i));
    ColumnTable out = data;
    for (std::size_t k = 0; k < copies.size(); ++k)
        out.put_continuous(formula.response + copies[k], std::move(columns[k]));
    return out;
}

ColumnTable scale_wide_twin(const ColumnTable& data, const std::vector<std::string>& bases,
                            const std::vector<std::string>& suffixes) {
    ColumnTable out = data;
    for (const auto& base : bases) {
        double n = 0.0, mean = 0.0, m2 = 0.0;
        for (const auto& s : suffix_list(suffixes))
            for (double x : numeric_column(data, base + s, "scale_wide_twin")) {
                if (is_missing(x)) continue;
                n += 1.0;
                const double d = x - mean;
                mean += d / n;
                m2 += d * (x - mean);
            }
        if (n < 2.0 || !(m2 > 0.0)) throw DataError("scale_wide_twin: '" + base + "' has zero pooled variance");
        const double sd = std::sqrt(m2 / (n - 1.0));
        for (const auto& s : suffix_list(suffixes)) {
            std::vector<double> v = data.continuous(base + s);
            for (double& x : v)
                if (!is_missing(x)) x = (x - mean) / sd;
            out.put_continuous(base + s, std::move(v));
        }
    }
    return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y, std::size_t* pairs) {
    double n = 0.0, mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (is_missing(x[i]) || is_missing(y[i])) continue;
        n += 1.0;
        mx += x[i];
        my += y[i];
    }
    if (pairs) *pairs = static_cast<std::size_t>(n);
    if (n < 2.0) return kMissing;
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (is_missing(x[i]) || is_missing(y[i])) continue;
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) return kMissing;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<TwinSummaryRow> summarize_twin_data(const ColumnTable& data, const std::vector<std::string>& bases,
                                                const std::string& zygosity_column,
                                                const std::vector<std::string>& suffixes,
                                                const ZygosityLabels& labels) {
    check_twin_suffixes(suffixes, "summarize_twin_data");
    const Column* zyg = data.find(zygosity_column);
    if (!zyg) throw DataError("summarize_twin_data: zygosity column '" + zygosity_column + "' not found");
    const std::set<std::string> mz(labels.mz.begin(), labels.mz.end());
    const std::set<std::string> dz(labels.dz.begin(), labels.dz.end());
    std::vector<int> kind(data.nrows(), 0);  // 1 MZ, 2 DZ
    for (std::size_t r = 0; r < data.nrows(); ++r) {
        if (zyg->missing(r)) continue;
        std::string label;
        if (zyg->is_text())
            label = *std::get<TextColumn>(zyg->data).values[r];
        else if (zyg->is_ordinal()) {
            const auto& o = std::get<OrdinalColumn>(zyg->data);
            label = o.levels[static_cast<std::size_t>(o.codes[r])];
        } else
            label = format_number(std::get<ContinuousColumn>(zyg->data).values[r]);
        if (mz.count(label))
            kind[r] = 1;
        else if (dz.count(label))
            kind[r] = 2;
        else
            throw DataError("summarize_twin_data: unknown zygosity label '" + label + "' on row " +
                            std::to_string(r + 1));
    }

    std::vector<TwinSummaryRow> out;
    for (const auto& base : bases) {
        const auto& t1 = numeric_column(data, base + suffixes[0], "summarize_twin_data");
        const auto& t2 = numeric_column(data, base + suffixes[1], "summarize_twin_data");
        TwinSummaryRow row;
        row.variable = base;
        double n = 0.0, mean = 0.0, m2 = 0.0;
        for (const auto* v : {&t1, &t2})
            for (double x : *v) {
                if (is_missing(x)) continue;
                n += 1.0;
                const double d = x - mean;
                mean += d / n;
                m2 += d * (x - mean);
            }
        row.mean = n > 0.0 ? mean : kMissing;
        row.sd = n > 1.0 ? std::sqrt(m2 / (n - 1.0)) : kMissing;
        for (int k : {1, 2}) {
            std::vector<double> a, b;
            for (std::size_t r = 0; r < data.nrows(); ++r)
                if (kind[r] == k) {
                    a.push_back(t1[r]);
                    b.push_back(t2[r]);
                }
            std::size_t pairs = 0;
            const double rho = pearson(a, b, &pairs);
            (k == 1 ? row.r_mz : row.r_dz) = rho;
            (k == 1 ? row.n_mz : row.n_dz) = pairs;
        }
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace twinsem
