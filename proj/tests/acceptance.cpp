// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "twinsem/builders.hpp"
#include "twinsem/data_prep.hpp"
#include "twinsem/error.hpp"
#include "twinsem/estimator.hpp"
#include "twinsem/fiml.hpp"
#include "twinsem/formula.hpp"
#include "twinsem/mvn.hpp"
#include "twinsem/path_parser.hpp"
#include "twinsem/simulate.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace twinsem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [fail]");
    }
};

std::string fmt(const char* format, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, format, args...);
    return buf;
}

constexpr double kLog2Pi = 1.8378770664093454836;

// ---------------------------------------------------------------- oracles

/// Cholesky of a symmetric matrix in long double; false if not positive definite.
bool cholesky(std::vector<std::vector<long double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t j = 0; j < n; ++j) {
        long double d = a[j][j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j][k] * a[j][k];
        if (d <= 0.0L) return false;
        a[j][j] = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            long double s = a[i][j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
            a[i][j] = s / a[j][j];
        }
    }
    return true;
}

/// -2 ln of the normal density of x under (mu, sigma).
double mvn_neg2ll(const std::vector<double>& x, const std::vector<double>& mu,
                  const std::vector<std::vector<double>>& sigma) {
    const std::size_t n = x.size();
    std::vector<std::vector<long double>> l(n, std::vector<long double>(n, 0.0L));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) l[i][j] = sigma[i][j];
    if (!cholesky(l)) return std::numeric_limits<double>::infinity();
    long double logdet = 0.0L;
    std::vector<long double> z(n);
    for (std::size_t i = 0; i < n; ++i) {
        logdet += 2.0L * std::log(l[i][i]);
        long double s = x[i] - mu[i];
        for (std::size_t k = 0; k < i; ++k) s -= l[i][k] * z[k];
        z[i] = s / l[i][i];
    }
    long double q = 0.0L;
    for (long double v : z) q += v * v;
    return static_cast<double>(static_cast<long double>(n) * kLog2Pi + logdet + q);
}

/// OLS residuals by Gauss-Jordan on the normal equations in long double.
std::vector<double> normal_equation_residuals(const std::vector<std::vector<double>>& xcols,
                                              const std::vector<double>& y) {
    const std::size_t n = y.size();
    const std::size_t p = xcols.size() + 1;
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < n; ++r) {
        bool ok = !std::isnan(y[r]);
        for (const auto& c : xcols) ok = ok && !std::isnan(c[r]);
        if (ok) rows.push_back(r);
    }
    auto x = [&](std::size_t r, std::size_t j) -> long double { return j == 0 ? 1.0L : xcols[j - 1][r]; };
    std::vector<std::vector<long double>> m(p, std::vector<long double>(p + 1, 0.0L));
    for (std::size_t r : rows)
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = 0; j < p; ++j) m[i][j] += x(r, i) * x(r, j);
            m[i][p] += x(r, i) * y[r];
        }
    for (std::size_t c = 0; c < p; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < p; ++r)
            if (std::fabs(m[r][c]) > std::fabs(m[piv][c])) piv = r;
        std::swap(m[c], m[piv]);
        for (std::size_t r = 0; r < p; ++r) {
            if (r == c) continue;
            const long double f = m[r][c] / m[c][c];
            for (std::size_t k = c; k <= p; ++k) m[r][k] -= f * m[c][k];
        }
    }
    std::vector<double> out(n, kMissing);
    for (std::size_t r : rows) {
        long double fit = 0.0L;
        for (std::size_t j = 0; j < p; ++j) fit += x(r, j) * (m[j][p] / m[j][j]);
        out[r] = static_cast<double>(y[r] - fit);
    }
    return out;
}

/// Largest absolute difference; NaN in only one of the two counts as infinite.
double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::isnan(a[i]) || std::isnan(b[i])) {
            if (std::isnan(a[i]) != std::isnan(b[i])) return std::numeric_limits<double>::infinity();
            continue;
        }
        worst = std::max(worst, std::abs(a[i] - b[i]));
    }
    return worst;
}

// ---------------------------------------------------------------- helpers

std::string var_name(std::size_t i) { return "x" + std::to_string(i + 1); }
std::string cov_label(std::size_t i, std::size_t j) { return "s" + std::to_string(j + 1) + std::to_string(i + 1); }

/// Saturated single-group model on x1..xk: free means m<i> and covariances s<j><i>.
GroupedModel saturated(std::size_t k) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < k; ++i) names.push_back(var_name(i));
    RamModel m("sat", names, {});
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j <= i; ++j)
            m.add_path({names[j], names[i], 2, true, i == j ? 1.0 : 0.0, cov_label(i, j), false});
    for (std::size_t i = 0; i < k; ++i) m.add_path({"one", names[i], 1, true, 0.0, "m" + std::to_string(i + 1), false});
    GroupedModel g;
    g.name = "saturated";
    g.groups.push_back(Group{"sat", m, {}, nullptr});
    return g;
}

FitOptions quick_fit() {
    FitOptions o;
    o.standard_errors = false;
    return o;
}

std::map<std::string, double> with(std::map<std::string, double> base, const std::map<std::string, double>& extra) {
    for (const auto& [k, v] : extra) base[k] = v;
    return base;
}

// ---------------------------------------------------------------- criteria

Outcome fiml_correctness() {
    Outcome out;
    constexpr std::size_t k = 4;
    constexpr std::size_t n = 10000;
    constexpr double kClosedFormTolerance = 1e-4;
    constexpr int kProbes = 1000;
    constexpr double kProbeTolerance = 1e-10;  // relative to max(1, |oracle|)
    constexpr double kMissingRate = 0.3;

    const GroupedModel structure = saturated(k);
    const std::map<std::string, double> truth{{"s11", 1.0}, {"s22", 2.0},  {"s33", 0.5},  {"s44", 1.5},
                                              {"s12", 0.6}, {"s13", -0.2}, {"s23", 0.4},  {"s14", 0.3},
                                              {"s24", -0.5}, {"s34", 0.1}, {"m1", 1.0},   {"m3", -2.0}};
    SimOptions so;
    so.n = n;
    so.seed = 101;
    const ColumnTable data = simulate(structure, truth, so).front().data;

    // Closed form from the ML covariance (divisor N).
    std::vector<double> mean(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (double v : data.continuous(var_name(i))) mean[i] += v / static_cast<double>(n);
    std::vector<std::vector<long double>> s(k, std::vector<long double>(k, 0.0L));
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const auto& xi = data.continuous(var_name(i));
            const auto& xj = data.continuous(var_name(j));
            long double acc = 0.0L;
            for (std::size_t r = 0; r < n; ++r) acc += (xi[r] - mean[i]) * (xj[r] - mean[j]);
            s[i][j] = acc / static_cast<long double>(n);
        }
    cholesky(s);
    long double logdet = 0.0L;
    for (std::size_t i = 0; i < k; ++i) logdet += 2.0L * std::log(s[i][i]);
    const double closed = static_cast<double>(static_cast<long double>(n) *
                                              (static_cast<long double>(k) * kLog2Pi + logdet + k));

    GroupedModel model = structure;
    bind_data(model, "sat", data);
    FitOptions fo = quick_fit();
    fo.gradient_tolerance = 1e-9;
    const FitResult fit_result = fit(model, fo);
    const double gap = std::abs(fit_result.neg2ll - closed);
    out.require(gap < kClosedFormTolerance, fmt("|neg2ll - closed form| = %.2e (tol %.0e)", gap, kClosedFormTolerance));

    // Marginalization: each row's contribution is the density of its observed subset.
    std::mt19937_64 rng(202);
    std::bernoulli_distribution missing(kMissingRate);
    std::uniform_int_distribution<std::size_t> pick_row(0, n - 1);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(0.3, 1.5);
    const RamModel& ram = model.groups.front().model;
    double worst = 0.0;
    int probes = 0;
    while (probes < kProbes) {
        // Random theta: covariance L L' with a positive diagonal, random means.
        Eigen::MatrixXd l = Eigen::MatrixXd::Zero(k, k);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j <= i; ++j) l(i, j) = i == j ? u(rng) : 0.5 * z(rng);
        const Eigen::MatrixXd sigma = l * l.transpose();
        ParameterVector theta = pack_parameters(model);
        std::vector<double> mu(k);
        for (std::size_t i = 0; i < k; ++i) {
            mu[i] = z(rng);
            theta.set("m" + std::to_string(i + 1), mu[i]);
            for (std::size_t j = 0; j <= i; ++j) theta.set(cov_label(i, j), sigma(i, j));
        }
        const std::size_t r = pick_row(rng);
        RowData row;
        row.values.assign(k, kMissing);
        row.codes.assign(k, kMissingCode);
        std::vector<std::size_t> observed;
        for (std::size_t i = 0; i < k; ++i)
            if (!missing(rng)) {
                row.values[i] = data.continuous(var_name(i))[r];
                observed.push_back(i);
            }
        if (observed.empty()) continue;
        std::vector<double> xo, mo;
        std::vector<std::vector<double>> so_(observed.size(), std::vector<double>(observed.size()));
        for (std::size_t a = 0; a < observed.size(); ++a) {
            xo.push_back(row.values[observed[a]]);
            mo.push_back(mu[observed[a]]);
            for (std::size_t b = 0; b < observed.size(); ++b) so_[a][b] = sigma(observed[a], observed[b]);
        }
        const double oracle = mvn_neg2ll(xo, mo, so_);
        const RowResult got = row_neg2ll(ram, theta, {}, row);
        const double err = got.status == RowStatus::ok ? std::abs(got.neg2ll - oracle) / std::max(1.0, std::abs(oracle))
                                                       : std::numeric_limits<double>::infinity();
        worst = std::max(worst, err);
        ++probes;
    }
    out.require(worst < kProbeTolerance,
                fmt("%d MCAR probes, max rel. error %.2e (tol %.0e)", kProbes, worst, kProbeTolerance));

    // The pattern-grouped kernel on a 30% MCAR table agrees with the row oracle sum.
    ColumnTable mcar = data;
    for (std::size_t i = 0; i < k; ++i)
        for (double& v : mcar.continuous(var_name(i)))
            if (missing(rng)) v = kMissing;
    GroupedModel mcar_model = structure;
    bind_data(mcar_model, "sat", mcar);
    ParameterVector theta = pack_parameters(mcar_model);
    for (const auto& [label, v] : truth) theta.set(label, v);
    const Moments implied = expected_moments(ram, theta);
    long double oracle_total = 0.0L;
    for (std::size_t r = 0; r < n; ++r) {
        std::vector<std::size_t> obs;
        for (std::size_t i = 0; i < k; ++i)
            if (!std::isnan(mcar.continuous(var_name(i))[r])) obs.push_back(i);
        if (obs.empty()) continue;
        std::vector<double> xo, mo;
        std::vector<std::vector<double>> sub(obs.size(), std::vector<double>(obs.size()));
        for (std::size_t a = 0; a < obs.size(); ++a) {
            xo.push_back(mcar.continuous(var_name(obs[a]))[r]);
            mo.push_back(implied.mean(static_cast<Eigen::Index>(obs[a])));
            for (std::size_t b = 0; b < obs.size(); ++b)
                sub[a][b] = implied.cov(static_cast<Eigen::Index>(obs[a]), static_cast<Eigen::Index>(obs[b]));
        }
        oracle_total += mvn_neg2ll(xo, mo, sub);
    }
    const double kernel = total_neg2ll(mcar_model, theta);
    const double rel = std::abs(kernel - static_cast<double>(oracle_total)) / std::abs(static_cast<double>(oracle_total));
    out.require(rel < 1e-10, fmt("kernel vs row oracle on MCAR table rel. %.2e (tol 1e-10)", rel));
    return out;
}

Outcome ace_recovery() {
    Outcome out;
    constexpr double kShareTolerance = 0.05;
    constexpr std::size_t kPairs = 2000;
    constexpr int kReplicates = 100;
    constexpr double kAlpha = 0.05;
    constexpr double kMaxRejection = 0.07;

    const GroupedModel structure = build_ace({"ht"}, {}, {});
    SimOptions so;
    so.n = kPairs;
    so.seed = 2024;
    const auto sims = simulate(structure, {{"a_r1c1", std::sqrt(0.5)}, {"c_r1c1", std::sqrt(0.3)},
                                           {"e_r1c1", std::sqrt(0.2)}, {"mean_ht", 0.0}}, so);
    const FitResult r = fit(build_ace({"ht"}, sims[0].data, sims[1].data), quick_fit());
    const AceShares sh = ace_shares(r.value("a_r1c1"), r.value("c_r1c1"), r.value("e_r1c1"));
    out.require(std::abs(sh.a2 - 0.5) <= kShareTolerance && std::abs(sh.c2 - 0.3) <= kShareTolerance &&
                    std::abs(sh.e2 - 0.2) <= kShareTolerance,
                fmt("a2=%.3f c2=%.3f e2=%.3f vs .5/.3/.2 (tol %.2f), %s", sh.a2, sh.c2, sh.e2, kShareTolerance,
                    std::string(to_string(r.status)).c_str()));

    int rejections = 0;
    int errors = 0;
    for (int rep = 0; rep < kReplicates; ++rep) {
        SimOptions ro;
        ro.n = kPairs;
        ro.seed = 5000 + static_cast<std::uint64_t>(rep);
        const auto d = simulate(structure, {{"a_r1c1", std::sqrt(0.5)}, {"c_r1c1", 0.0},
                                            {"e_r1c1", std::sqrt(0.5)}, {"mean_ht", 0.0}}, ro);
        const GroupedModel ace = build_ace({"ht"}, d[0].data, d[1].data);
        try {
            const FitResult full = fit(ace, quick_fit());
            const FitResult ae = fit(fix_parameters(ace, {{"c_r1c1", 0.0}}), quick_fit());
            if (lrt(full, ae).p < kAlpha) ++rejections;
        } catch (const Error&) {
            ++errors;
        }
    }
    const double rate = static_cast<double>(rejections) / kReplicates;
    out.require(rate <= kMaxRejection && errors == 0,
                fmt("drop-C rejection %d/%d = %.2f (max %.2f), %d failed fits", rejections, kReplicates, rate,
                    kMaxRejection, errors));
    return out;
}

Outcome onyx_parsing() {
    Outcome out;
    std::ifstream in(TWINSEM_TEST_DATA "/lgc_onyx.R");
    std::stringstream ss;
    ss << in.rdbuf();
    const ParsedPathSet set = parse_onyx_export(ss.str());
    out.require(set.paths.size() == 23, fmt("%zu paths (expect 23)", set.paths.size()));
    int e_cells = 0;
    bool e_residual = true;
    for (const auto& p : set.paths)
        if (p.label == "e") {
            ++e_cells;
            e_residual = e_residual && p.arrows == 2 && p.from == p.to && p.free;
        }
    out.require(e_cells == 3 && e_residual, fmt("label e on %d residual variances (expect 3)", e_cells));

    const GroupedModel twins = twin_maker("lgc", set.paths, {}, {}, {}, set.declared_manifests);
    bool exact = true;
    int checked = 0;
    for (const auto& [group, want] : {std::pair<std::string, double>{"MZ", 1.0}, {"DZ", 0.5}}) {
        const RamModel& m = twins.group(group).model;
        for (const std::string a : {"a1", "a2"}) {
            const Cell* c = m.find_cell(CellMatrix::S, m.variable_index(a + "_T1"), m.variable_index(a + "_T2"));
            exact = exact && c != nullptr && !c->free && c->value == want;
            ++checked;
        }
    }
    out.require(exact && checked == 4, "cross-twin a covariances MZ 1.0, DZ 0.5 exact");
    return out;
}

Outcome icu() {
    Outcome out;
    constexpr double kMu = 1.0;
    constexpr double kSigma = 1.0;
    constexpr double kLod = 0.5;
    constexpr double kEstimateTolerance = 0.05;
    constexpr double kFractionTolerance = 0.01;

    SimOptions so;
    so.n = 10000;
    so.seed = 404;
    so.censor_columns = {"x1"};
    so.lod = kLod;
    const ColumnTable data = simulate(saturated(1), {{"s11", kSigma * kSigma}, {"m1", kMu}}, so).front().data;
    const auto& codes = data.ordinal("x1bin").codes;
    const double low = static_cast<double>(std::count(codes.begin(), codes.end(), 0)) / static_cast<double>(so.n);
    const double expected = normal_cdf((kLod - kMu) / kSigma);
    out.require(std::abs(low - expected) <= kFractionTolerance,
                fmt("censored fraction %.4f vs Phi %.4f (tol %.2f)", low, expected, kFractionTolerance));

    // One latent level per person, seen either as the below-LOD indicator or the value.
    RamModel m("icu", {"x1bin", "x1cont"}, {"L"});
    m.add_path({"L", "x1bin", 1, false, 1.0, std::nullopt, false});
    m.add_path({"L", "x1cont", 1, false, 1.0, std::nullopt, false});
    m.add_path({"L", "L", 2, true, 0.8, std::string("var_L"), false});
    m.add_path({"one", "L", 1, true, 0.5, std::string("mean_L"), false});
    ThresholdSet th;
    th.set("x1bin", ThresholdSet::fixed_at({kLod}));
    GroupedModel model = single_group(m, data, th);
    model.bounds["var_L"] = Bounds{1e-6, std::numeric_limits<double>::infinity()};
    const FitResult r = fit(model, quick_fit());
    const double mu_hat = r.value("mean_L");
    const double sigma_hat = std::sqrt(r.value("var_L"));
    out.require(std::abs(mu_hat - kMu) <= kEstimateTolerance && std::abs(sigma_hat - kSigma) <= kEstimateTolerance,
                fmt("mu=%.4f sigma=%.4f (tol %.2f), %s", mu_hat, sigma_hat, kEstimateTolerance,
                    std::string(to_string(r.status)).c_str()));
    return out;
}

Outcome placeholder_invariance() {
    Outcome out;
    constexpr double kInvarianceTolerance = 1e-10;

    // Twin pairs with a covariate varA1 on the phenotype varB1; some covariate cells blank.
    TwinOptions to;
    to.covariates = {"varA1"};
    const GroupedModel structure = build_ace({"varB1"}, {}, {}, to);
    const std::map<std::string, double> truth{{"a_r1c1", 0.6}, {"c_r1c1", 0.4}, {"e_r1c1", 0.5},
                                              {"mean_varB1", 1.0}, {"beta_varA1_varB1", 0.3}};
    SimOptions so;
    so.n = 500;
    so.seed = 24;
    so.covariate_missing_rate = 0.15;
    auto sims = simulate(structure, truth, so);
    for (std::size_t r = 0; r < 5; ++r) sims[0].data.continuous("varA1_T1")[r] = kMissing;

    std::size_t placeholders = 0;
    std::vector<ColumnTable> updated, swapped;
    for (const auto& g : sims) {
        updated.push_back(update_covariate_placeholders(g.data, "varA1", "varB1"));
        ColumnTable s = updated.back();
        for (const char* c : {"varA1_T1", "varA1_T2"})
            for (double& v : s.continuous(c))
                if (v == kPlaceholder) {
                    v = 123.456;
                    ++placeholders;
                }
        swapped.push_back(std::move(s));
    }
    const GroupedModel a = build_ace({"varB1"}, updated[0], updated[1], to);
    const GroupedModel b = build_ace({"varB1"}, swapped[0], swapped[1], to);
    ParameterVector theta = pack_parameters(a);
    for (const auto& [label, v] : truth) theta.set(label, v);
    const double fa = total_neg2ll(a, theta);
    const double fb = total_neg2ll(b, theta);
    const double delta = std::abs(fa - fb);
    out.require(placeholders > 5 && delta < kInvarianceTolerance,
                fmt("%zu placeholders, |delta neg2ll| = %.2e (tol %.0e)", placeholders, delta, kInvarianceTolerance));

    bool clean = true;
    for (const auto& t : updated) clean = clean && validate_placeholders(t, "varA1", "varB1").empty();
    ColumnTable injected = updated[0];
    injected.continuous("varB1_T1")[0] = 2.5;  // row 0 holds a twin-1 placeholder
    const auto warnings = validate_placeholders(injected, "varA1", "varB1");
    out.require(clean && warnings.size() == 1 && warnings[0].row == 0,
                fmt("clean tables silent, injected row flagged (%zu warning)", warnings.size()));
    return out;
}

Outcome residualization() {
    Outcome out;
    constexpr double kTolerance = 1e-10;
    const ColumnTable cars = read_csv(TWINSEM_TEST_DATA "/mtcars.csv");
    const auto& mpg = cars.continuous("mpg");
    const auto& cyl = cars.continuous("cyl");
    const auto& disp = cars.continuous("disp");
    const auto& hp = cars.continuous("hp");
    std::vector<double> cyl2(cyl);
    for (double& v : cyl2) v *= v;

    double worst = 0.0;
    const ColumnTable r1 = residualize(cars, {"mpg"}, {"cyl", "disp"});
    worst = std::max(worst, max_abs_diff(r1.continuous("mpg"), normal_equation_residuals({cyl, disp}, mpg)));
    const ColumnTable r2 = residualize(cars, parse_formula("mpg ~ cyl + I(cyl^2) + disp"));
    worst = std::max(worst, max_abs_diff(r2.continuous("mpg"), normal_equation_residuals({cyl, cyl2, disp}, mpg)));
    const ColumnTable r3 = residualize(cars, {"mpg", "hp"}, {"cyl", "disp"});
    worst = std::max(worst, max_abs_diff(r3.continuous("mpg"), normal_equation_residuals({cyl, disp}, mpg)));
    worst = std::max(worst, max_abs_diff(r3.continuous("hp"), normal_equation_residuals({cyl, disp}, hp)));
    ColumnTable wide = cars;
    for (const char* base : {"mpg", "cyl", "disp"})
        for (const char* s : {"_T1", "_T2"}) wide.put_continuous(std::string(base) + s, cars.continuous(base));
    const ColumnTable r4 = residualize(wide, {"mpg"}, {"cyl", "disp"}, {"_T1", "_T2"});
    worst = std::max(worst, max_abs_diff(r4.continuous("mpg_T1"), normal_equation_residuals({cyl, disp}, mpg)));
    worst = std::max(worst, max_abs_diff(r4.continuous("mpg_T2"), normal_equation_residuals({cyl, disp}, mpg)));
    out.require(cars.nrows() == 32 && worst < kTolerance,
                fmt("4 usage patterns, max |resid - oracle| = %.2e (tol %.0e)", worst, kTolerance));

    ColumnTable holes = cars;
    holes.continuous("disp")[3] = kMissing;
    holes.continuous("cyl")[11] = kMissing;
    const ColumnTable r = residualize(holes, {"mpg"}, {"cyl", "disp"});
    const double gap = max_abs_diff(r.continuous("mpg"),
                                    normal_equation_residuals({holes.continuous("cyl"), holes.continuous("disp")}, mpg));
    out.require(r.nrows() == 32 && std::isnan(r.continuous("mpg")[3]) && std::isnan(r.continuous("mpg")[11]) &&
                    gap < kTolerance,
                "missing-regressor rows kept as missing, 32 rows");
    return out;
}

std::map<std::string, double> clpm_truth(const GroupedModel& m) {
    std::map<std::string, double> truth;
    for (const auto& l : free_labels(m)) {
        if (l.rfind("x2x_", 0) == 0 || l.rfind("y2y_", 0) == 0) truth[l] = 0.5;
        if (l.rfind("x2y_", 0) == 0) truth[l] = 0.3;
        if (l.rfind("y2x_", 0) == 0) truth[l] = 0.1;
        if (l.rfind("res_", 0) == 0) truth[l] = 0.6;
        if (l.rfind("rcov_", 0) == 0) truth[l] = 0.1;
        if (l.rfind("mean_", 0) == 0) truth[l] = 0.2;
    }
    truth["var_x1"] = 1.0;
    truth["var_y1"] = 1.0;
    truth["cov_xy1"] = 0.3;
    return truth;
}

Outcome clpm() {
    Outcome out;
    constexpr std::size_t kWaves = 4;
    constexpr double kLagTolerance = 0.05;
    constexpr double kMatchTolerance = 0.03;
    ClpmOptions co;
    co.x_base = "x";
    co.y_base = "y";

    const GroupedModel structure = build_clpm(kWaves, ClpmVariant::clpm, {}, co);
    SimOptions so;
    so.n = 5000;
    so.seed = 707;
    const ColumnTable data = simulate(structure, clpm_truth(structure), so).front().data;
    const FitResult r = fit(build_clpm(kWaves, ClpmVariant::clpm, data, co), quick_fit());
    double worst = 0.0;
    for (std::size_t t = 1; t < kWaves; ++t) worst = std::max(worst, std::abs(r.value(clpm_label("x2y", t, t + 1)) - 0.3));
    out.require(worst <= kLagTolerance, fmt("CLPM max |x2y - 0.3| = %.3f (tol %.2f), %s", worst, kLagTolerance,
                                            std::string(to_string(r.status)).c_str()));

    // Random intercepts with zero variance: the within-person process is a CLPM.
    const GroupedModel ri_structure = build_clpm(kWaves, ClpmVariant::riclpm, {}, co);
    auto ri_truth = clpm_truth(ri_structure);
    ri_truth["var_RIx"] = 0.0;
    ri_truth["var_RIy"] = 0.0;
    ri_truth["cov_RI"] = 0.0;
    so.seed = 708;
    const ColumnTable ri_data = simulate(ri_structure, ri_truth, so).front().data;
    const FitResult ri = fit(build_clpm(kWaves, ClpmVariant::riclpm, ri_data, co), quick_fit());
    const FitResult plain = fit(build_clpm(kWaves, ClpmVariant::clpm, ri_data, co), quick_fit());
    double gap = 0.0;
    for (std::size_t t = 1; t < kWaves; ++t)
        for (const char* kind : {"x2y", "y2x"})
            gap = std::max(gap, std::abs(ri.value(clpm_label(kind, t, t + 1)) - plain.value(clpm_label(kind, t, t + 1))));
    out.require(gap <= kMatchTolerance, fmt("RI-CLPM vs CLPM max cross-lag gap %.3f (tol %.2f), var_RIx=%.3f, %s", gap,
                                            kMatchTolerance, ri.value("var_RIx"),
                                            std::string(to_string(ri.status)).c_str()));
    return out;
}

const std::map<std::string, double> kMrdocFamily{{"a11", 0.6}, {"a21", 0.3}, {"a22", 0.5}, {"c11", 0.4},
                                                 {"c21", 0.2}, {"c22", 0.4}, {"e11", 0.5}, {"e22", 0.6},
                                                 {"mean_X", 0.0}, {"mean_Y", 0.0}};

Outcome mrdoc() {
    Outcome out;
    constexpr double kTolerance = 0.05;
    constexpr double kRestrictionTolerance = 1e-6;
    constexpr std::size_t kPairs = 8000;

    const auto truth1 = with(kMrdocFamily, {{"g1", 0.2}, {"b1", 0.3}, {"b2", 0.1}, {"var_P", 1.0},
                                            {"mean_P", 0.0}, {"MZ_cov_P", 0.5}, {"DZ_cov_P", 0.25}});
    SimOptions so;
    so.n = kPairs;
    so.seed = 808;
    const auto d1 = simulate(build_mrdoc({"X", "Y"}, {"P"}, {}, {}, MrdocVariant::mrdoc), truth1, so);
    const FitResult r1 = fit(build_mrdoc({"X", "Y"}, {"P"}, d1[0].data, d1[1].data, MrdocVariant::mrdoc), quick_fit());
    out.require(std::abs(r1.value("g1") - 0.2) <= kTolerance && std::abs(r1.value("b2") - 0.1) <= kTolerance,
                fmt("MRDoC g1=%.3f b2=%.3f (tol %.2f), %s", r1.value("g1"), r1.value("b2"), kTolerance,
                    std::string(to_string(r1.status)).c_str()));

    const auto truth2 = with(kMrdocFamily, {{"e21", 0.2}, {"g1", 0.2}, {"g2", 0.0}, {"b1", 0.3}, {"b2", 0.3},
                                            {"var_P1", 1.0}, {"var_P2", 1.0}, {"cov_P1_P2", 0.0},
                                            {"mean_P1", 0.0}, {"mean_P2", 0.0},
                                            {"MZ_cov_P1", 0.5}, {"DZ_cov_P1", 0.25}, {"MZ_cov_P2", 0.5},
                                            {"DZ_cov_P2", 0.25}, {"MZ_cov_P1_P2_cross", 0.0},
                                            {"DZ_cov_P1_P2_cross", 0.0}});
    so.seed = 809;
    const auto d2 = simulate(build_mrdoc({"X", "Y"}, {"P1", "P2"}, {}, {}, MrdocVariant::mrdoc2), truth2, so);
    const FitResult r2 =
        fit(build_mrdoc({"X", "Y"}, {"P1", "P2"}, d2[0].data, d2[1].data, MrdocVariant::mrdoc2), quick_fit());
    out.require(std::abs(r2.value("g1") - 0.2) <= kTolerance && std::abs(r2.value("g2")) <= kTolerance,
                fmt("MRDoC2 g1=%.3f g2=%.3f (tol %.2f), %s", r2.value("g1"), r2.value("g2"), kTolerance,
                    std::string(to_string(r2.status)).c_str()));

    // DoC as MRDoC with b1 = b2 = 0: the instrument block separates from the DoC block.
    FitOptions tight = quick_fit();
    tight.gradient_tolerance = 1e-9;
    const GroupedModel restricted = fix_parameters(
        build_mrdoc({"X", "Y"}, {"P"}, d1[0].data, d1[1].data, MrdocVariant::mrdoc), {{"b1", 0.0}, {"b2", 0.0}});
    const GroupedModel doc = build_mrdoc({"X", "Y"}, {}, d1[0].data, d1[1].data, MrdocVariant::doc);
    GroupedModel prs;
    prs.name = "PRS";
    for (const auto& [zyg, idx] : {std::pair<std::string, std::size_t>{"MZ", 0}, {"DZ", 1}}) {
        RamModel m(zyg, {"P_T1", "P_T2"}, {});
        for (const char* t : {"P_T1", "P_T2"}) {
            m.add_path({t, t, 2, true, 1.0, std::string("var_P"), false});
            m.add_path({"one", t, 1, true, 0.0, std::string("mean_P"), false});
        }
        m.add_path({"P_T1", "P_T2", 2, true, 0.3, zyg + "_cov_P", false});
        prs.groups.push_back(Group{zyg, m, {}, nullptr});
        bind_data(prs, zyg, d1[idx].data);
    }
    const FitResult fr = fit(restricted, tight);
    const FitResult fd = fit(doc, tight);
    const FitResult fp = fit(prs, tight);
    const double gap = std::abs(fr.neg2ll - (fd.neg2ll + fp.neg2ll));
    out.require(gap < kRestrictionTolerance,
                fmt("|neg2ll(MRDoC b=0) - neg2ll(DoC) - neg2ll(PRS)| = %.2e (tol %.0e), %s/%s/%s", gap,
                    kRestrictionTolerance, std::string(to_string(fr.status)).c_str(),
                    std::string(to_string(fd.status)).c_str(), std::string(to_string(fp.status)).c_str()));
    return out;
}

Outcome sex_limitation() {
    Outcome out;
    constexpr int kReplicates = 100;
    constexpr double kAlpha = 0.05;
    constexpr double kMinNonRejection = 0.90;
    constexpr std::size_t kPairs = 500;

    bool increasing = true;
    std::string counts;
    for (const std::vector<std::string>& ph : {std::vector<std::string>{"v"}, {"v1", "v2"}, {"v1", "v2", "v3"}})
        for (char comp : {'A', 'C'}) {
            const auto h = free_labels(build_sexlim(ph, {}, comp, SexlimVariant::homogeneity)).size();
            const auto s = free_labels(build_sexlim(ph, {}, comp, SexlimVariant::scalar)).size();
            const auto n = free_labels(build_sexlim(ph, {}, comp, SexlimVariant::nonscalar)).size();
            increasing = increasing && h < s && s < n;
            if (comp == 'A') counts += fmt("%s%zu<%zu<%zu", counts.empty() ? "" : ", ", h, s, n);
        }
    out.require(increasing, "free parameters Homogeneity<Scalar<Nonscalar: " + counts);

    const GroupedModel structure = build_sexlim({"v"}, {}, 'A', SexlimVariant::homogeneity);
    const std::map<std::string, double> truth{
        {"a_v", 0.6}, {"c_v", 0.4}, {"e_v", 0.5}, {"mean_m_v", 0.0}, {"mean_f_v", 0.3}};
    int kept = 0;
    int errors = 0;
    for (int rep = 0; rep < kReplicates; ++rep) {
        SimOptions so;
        so.n = kPairs;
        so.seed = 9000 + static_cast<std::uint64_t>(rep);
        const auto d = simulate(structure, truth, so);
        const SexlimData data{d[0].data, d[1].data, d[2].data, d[3].data, d[4].data};
        try {
            const FitResult hom = fit(build_sexlim({"v"}, data, 'A', SexlimVariant::homogeneity), quick_fit());
            const FitResult non = fit(build_sexlim({"v"}, data, 'A', SexlimVariant::nonscalar), quick_fit());
            if (lrt(non, hom).p >= kAlpha) ++kept;
        } catch (const Error&) {
            ++errors;
        }
    }
    const double rate = static_cast<double>(kept) / kReplicates;
    out.require(rate >= kMinNonRejection && errors == 0,
                fmt("non-rejection %d/%d = %.2f (min %.2f), %d failed fits", kept, kReplicates, rate,
                    kMinNonRejection, errors));
    return out;
}

Outcome mvn_rectangles() {
    Outcome out;
    constexpr double kOrthantTolerance = 1e-6;
    constexpr std::size_t kDraws = 10000000;
    constexpr double kSeMultiple = 3.0;
    const double inf = std::numeric_limits<double>::infinity();

    const double upper = bivariate_normal_upper(0.0, 0.0, 0.5);
    Eigen::Matrix2d s2;
    s2 << 1.0, 0.5, 0.5, 1.0;
    const double rect = mvn_rectangle(Eigen::Vector2d::Zero(), s2, Eigen::Vector2d::Zero(), Eigen::Vector2d::Constant(inf));
    const double err = std::max(std::abs(upper - 1.0 / 3.0), std::abs(rect - 1.0 / 3.0));
    out.require(err < kOrthantTolerance, fmt("orthant rho=.5 |P - 1/3| = %.2e (tol %.0e)", err, kOrthantTolerance));

    Eigen::Matrix4d sigma;
    sigma << 1.0, 0.5, 0.3, 0.2,
             0.5, 1.5, 0.4, -0.3,
             0.3, 0.4, 0.8, 0.1,
             0.2, -0.3, 0.1, 1.2;
    const Eigen::Vector4d mu(0.1, -0.2, 0.0, 0.3);
    struct Box {
        Eigen::Vector4d lo, hi;
    };
    const std::vector<Box> boxes{
        {Eigen::Vector4d(-inf, -inf, -inf, -inf), Eigen::Vector4d(0.5, 0.0, 0.7, 1.0)},
        {Eigen::Vector4d(-1.0, -0.5, -inf, 0.0), Eigen::Vector4d(1.0, inf, 0.2, 2.0)},
        {Eigen::Vector4d(0.0, -2.0, -0.3, -1.0), Eigen::Vector4d(inf, 0.5, 0.9, inf)},
    };
    const Eigen::Matrix4d l = sigma.llt().matrixL();
    std::vector<std::size_t> hits(boxes.size(), 0);
    std::mt19937_64 rng(1010);
    std::normal_distribution<double> z;
    for (std::size_t d = 0; d < kDraws; ++d) {
        const Eigen::Vector4d x = mu + l * Eigen::Vector4d(z(rng), z(rng), z(rng), z(rng));
        for (std::size_t b = 0; b < boxes.size(); ++b)
            if ((x.array() > boxes[b].lo.array()).all() && (x.array() <= boxes[b].hi.array()).all()) ++hits[b];
    }
    double worst = 0.0;
    for (std::size_t b = 0; b < boxes.size(); ++b) {
        const double mc = static_cast<double>(hits[b]) / static_cast<double>(kDraws);
        const double se = std::sqrt(mc * (1.0 - mc) / static_cast<double>(kDraws));
        const double p = mvn_rectangle(mu, sigma, boxes[b].lo, boxes[b].hi);
        worst = std::max(worst, std::abs(p - mc) / se);
    }
    out.require(worst <= kSeMultiple,
                fmt("d=4, %zu boxes vs 1e7 MC draws: max %.2f SE (max %.0f)", boxes.size(), worst, kSeMultiple));
    return out;
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"fiml-correctness", fiml_correctness},
        {"ace-recovery", ace_recovery},
        {"onyx-parsing", onyx_parsing},
        {"icu-censoring", icu},
        {"placeholder-invariance", placeholder_invariance},
        {"residualization", residualization},
        {"clpm-riclpm", clpm},
        {"mr-doc", mrdoc},
        {"sex-limitation", sex_limitation},
        {"mvn-rectangle", mvn_rectangles},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %2zu %-24s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
