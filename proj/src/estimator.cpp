#include "twinsem/estimator.hpp"

#include "twinsem/error.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace twinsem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGradientStep = 1e-6;
constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 40;
constexpr double kNegativeChi2Tolerance = 1e-6;

double clamp_to(double x, const Bounds& b) { return std::min(std::max(x, b.lower), b.upper); }

bool at_lower(double x, const Bounds& b) { return std::isfinite(b.lower) && x <= b.lower; }
bool at_upper(double x, const Bounds& b) { return std::isfinite(b.upper) && x >= b.upper; }

double scaled_gradient(const std::vector<double>& g, const std::vector<double>& x, double f) {
    double worst = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) worst = std::max(worst, std::abs(g[i]) * std::max(std::abs(x[i]), 1.0));
    return worst / std::max(std::abs(f), 1.0);
}

/// Zeroes components that would push an active bound outward.
std::vector<double> projected(const std::vector<double>& g, const std::vector<double>& x,
                              const std::vector<Bounds>& bounds) {
    std::vector<double> out = g;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (at_lower(x[i], bounds[i]) && g[i] > 0.0) out[i] = 0.0;
        if (at_upper(x[i], bounds[i]) && g[i] < 0.0) out[i] = 0.0;
    }
    return out;
}

struct Counted {
    const Objective& f;
    std::size_t count = 0;
    double operator()(std::span<const double> x) {
        ++count;
        const double v = f(x);
        return std::isnan(v) ? kInf : v;
    }
};

MinimizeResult run_bfgs(const Objective& objective, std::vector<double> x, const std::vector<Bounds>& bounds,
                        const FitOptions& options) {
    Counted f{objective};
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) x[i] = clamp_to(x[i], bounds[i]);

    MinimizeResult result;
    double fx = f(x);
    if (!std::isfinite(fx)) {
        result.x = x;
        result.f = kInf;
        result.status = FitStatus::flat_region;
        result.evaluations = f.count;
        return result;
    }

    std::size_t grad_evals = 0;
    std::vector<double> g = numeric_gradient(objective, x, fx, bounds, &grad_evals);
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    bool scaled = false;
    result.status = FitStatus::iteration_limit;
    int stalls = 0;

    std::size_t iter = 0;
    for (; iter < options.max_iterations; ++iter) {
        const std::vector<double> pg = projected(g, x, bounds);
        if (scaled_gradient(pg, x, fx) < options.gradient_tolerance) {
            result.status = FitStatus::converged;
            break;
        }

        std::vector<bool> active(n, false);
        for (std::size_t i = 0; i < n; ++i) active[i] = pg[i] == 0.0 && g[i] != 0.0;

        bool retried = false;
        bool moved = false;
        double f_new = fx;
        std::vector<double> x_new;
        while (true) {
            Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
            for (std::size_t i = 0; i < n; ++i) {
                if (active[i]) continue;
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    if (!active[j]) s -= h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * pg[j];
                d(static_cast<Eigen::Index>(i)) = s;
            }
            double slope = 0.0;
            for (std::size_t i = 0; i < n; ++i) slope += pg[i] * d(static_cast<Eigen::Index>(i));
            if (!(slope < 0.0)) {
                h.setIdentity();
                scaled = false;
                for (std::size_t i = 0; i < n; ++i) d(static_cast<Eigen::Index>(i)) = active[i] ? 0.0 : -pg[i];
            }

            double alpha = 1.0;
            if (!scaled) {
                double xmax = 1.0;
                for (double v : x) xmax = std::max(xmax, std::abs(v));
                const double dmax = d.cwiseAbs().maxCoeff();
                if (dmax > 0.0) alpha = std::min(1.0, 0.1 * xmax / dmax);
            }
            for (int bt = 0; bt < kMaxBacktracks; ++bt, alpha *= 0.5) {
                x_new = x;
                double decrease = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    x_new[i] = clamp_to(x[i] + alpha * d(static_cast<Eigen::Index>(i)), bounds[i]);
                    decrease += g[i] * (x_new[i] - x[i]);
                }
                if (x_new == x) break;
                f_new = f(x_new);
                if (std::isfinite(f_new) && f_new <= fx + kArmijo * std::min(decrease, 0.0) && f_new <= fx) {
                    moved = true;
                    break;
                }
            }
            if (moved || retried || scaled == false) break;
            h.setIdentity();
            scaled = false;
            retried = true;
        }
        if (!moved) {
            result.status = scaled_gradient(pg, x, fx) < 1e3 * options.gradient_tolerance ? FitStatus::converged
                                                                                           : FitStatus::flat_region;
            break;
        }

        std::vector<double> g_new = numeric_gradient(objective, x_new, f_new, bounds, &grad_evals);
        Eigen::VectorXd s(static_cast<Eigen::Index>(n));
        Eigen::VectorXd y(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            s(static_cast<Eigen::Index>(i)) = x_new[i] - x[i];
            y(static_cast<Eigen::Index>(i)) = g_new[i] - g[i];
        }
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (!scaled) {
                h *= sy / y.squaredNorm();
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Eigen::VectorXd hy = h * y;
            h += ((sy + y.dot(hy)) * rho * rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
        }

        const double change = fx - f_new;
        stalls = change <= 1e-12 * std::max(std::abs(fx), 1.0) ? stalls + 1 : 0;
        x = std::move(x_new);
        fx = f_new;
        g = std::move(g_new);
        if (stalls >= 10) {
            result.status = scaled_gradient(projected(g, x, bounds), x, fx) < 1e3 * options.gradient_tolerance
                                ? FitStatus::converged
                                : FitStatus::flat_region;
            ++iter;
            break;
        }
    }
    result.x = std::move(x);
    result.f = fx;
    result.iterations = iter;
    result.evaluations = f.count + grad_evals;
    return result;
}

}  // namespace

std::string_view to_string(FitStatus status) {
    switch (status) {
        case FitStatus::converged: return "converged";
        case FitStatus::non_pd_hessian: return "non-PD-Hessian";
        case FitStatus::iteration_limit: return "iteration-limit";
        case FitStatus::flat_region: return "flat-region";
    }
    return "unknown";
}

double FitResult::value(std::string_view label) const {
    for (const auto& e : estimates)
        if (e.label == label) return e.value;
    throw ModelError("no estimate labelled '" + std::string(label) + "'");
}

std::optional<double> FitResult::se(std::string_view label) const {
    for (const auto& e : estimates)
        if (e.label == label) return e.se;
    throw ModelError("no estimate labelled '" + std::string(label) + "'");
}

std::vector<double> numeric_gradient(const Objective& f, std::span<const double> x, double fx,
                                     const std::vector<Bounds>& bounds, std::size_t* evaluations) {
    const std::size_t n = x.size();
    std::vector<double> g(n, 0.0);
    std::vector<double> probe(x.begin(), x.end());
    std::size_t count = 0;
    auto eval = [&](std::size_t i, double v) {
        probe[i] = v;
        ++count;
        const double out = f(probe);
        probe[i] = x[i];
        return std::isnan(out) ? kInf : out;
    };
    for (std::size_t i = 0; i < n; ++i) {
        const double h = kGradientStep * std::max(std::abs(x[i]), 1.0);
        const Bounds b = i < bounds.size() ? bounds[i] : Bounds{};
        const bool room_down = x[i] - h >= b.lower;
        const bool room_up = x[i] + h <= b.upper;
        double up = kInf;
        double down = kInf;
        if (room_up) up = eval(i, x[i] + h);
        if (room_down) down = eval(i, x[i] - h);
        if (std::isfinite(up) && std::isfinite(down)) {
            g[i] = (up - down) / (2.0 * h);
        } else if (std::isfinite(up) && x[i] + 2.0 * h <= b.upper) {
            const double up2 = eval(i, x[i] + 2.0 * h);
            g[i] = std::isfinite(up2) ? (-3.0 * fx + 4.0 * up - up2) / (2.0 * h) : (up - fx) / h;
        } else if (std::isfinite(down) && x[i] - 2.0 * h >= b.lower) {
            const double down2 = eval(i, x[i] - 2.0 * h);
            g[i] = std::isfinite(down2) ? (3.0 * fx - 4.0 * down + down2) / (2.0 * h) : (fx - down) / h;
        } else if (std::isfinite(up)) {
            g[i] = (up - fx) / h;
        } else if (std::isfinite(down)) {
            g[i] = (fx - down) / h;
        }
    }
    if (evaluations) *evaluations += count;
    return g;
}

Eigen::MatrixXd numeric_hessian(const Objective& f, std::span<const double> x, double fx) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd hess(n, n);
    std::vector<double> step(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) step[i] = std::max(1e-4, 1e-4 * std::abs(x[i]));
    std::vector<double> p(x.begin(), x.end());
    auto at = [&](std::size_t i, double di, std::size_t j, double dj) {
        p[i] += di;
        p[j] += dj;
        const double v = f(p);
        p[i] = x[i];
        p[j] = x[j];
        return v;
    };
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        const double hi = step[ui];
        hess(i, i) = (at(ui, hi, ui, 0.0) - 2.0 * fx + at(ui, -hi, ui, 0.0)) / (hi * hi);
        for (Eigen::Index j = 0; j < i; ++j) {
            const auto uj = static_cast<std::size_t>(j);
            const double hj = step[uj];
            const double v = (at(ui, hi, uj, hj) - at(ui, hi, uj, -hj) - at(ui, -hi, uj, hj) + at(ui, -hi, uj, -hj)) /
                             (4.0 * hi * hj);
            hess(i, j) = v;
            hess(j, i) = v;
        }
    }
    return hess;
}

MinimizeResult minimize(const Objective& f, std::vector<double> x0, const std::vector<Bounds>& bounds,
                        const FitOptions& options) {
    if (bounds.size() != x0.size()) throw Error("minimize: bounds and start vector differ in length");
    MinimizeResult best = run_bfgs(f, x0, bounds, options);
    if (best.status == FitStatus::converged) return best;

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t iterations = best.iterations;
    std::size_t evaluations = best.evaluations;
    for (std::size_t attempt = 0; attempt < options.multistart; ++attempt) {
        std::vector<double> start = std::isfinite(best.f) ? best.x : x0;
        for (std::size_t i = 0; i < start.size(); ++i)
            start[i] = clamp_to(start[i] + 0.1 * std::max(std::abs(start[i]), 0.1) * normal(rng), bounds[i]);
        MinimizeResult trial = run_bfgs(f, std::move(start), bounds, options);
        iterations += trial.iterations;
        evaluations += trial.evaluations;
        const bool better = trial.f < best.f || (trial.status == FitStatus::converged &&
                                                 best.status != FitStatus::converged && trial.f <= best.f + 1e-8);
        if (better) best = std::move(trial);
        if (best.status == FitStatus::converged) break;
    }
    best.iterations = iterations;
    best.evaluations = evaluations;
    return best;
}

namespace {

StandardErrorTable standard_errors_for(const Objective& f, const ParameterVector& theta, double fx) {
    const std::size_t n = theta.size();
    StandardErrorTable out;
    std::vector<std::size_t> interior;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = theta.values()[i];
        const Bounds& b = theta.bounds()[i];
        const double h = std::max(1e-4, 1e-4 * std::abs(v));
        const bool bound = v - h < b.lower || v + h > b.upper;
        out.estimates.push_back({theta.labels()[i], v, std::nullopt, bound});
        if (!bound) interior.push_back(i);
    }
    if (interior.empty()) {
        out.hessian_positive_definite = true;
        return out;
    }
    std::vector<double> sub(interior.size());
    for (std::size_t k = 0; k < interior.size(); ++k) sub[k] = theta.values()[interior[k]];
    const Objective restricted = [&](std::span<const double> y) {
        std::vector<double> full = theta.values();
        for (std::size_t k = 0; k < interior.size(); ++k) full[interior[k]] = y[k];
        return f(full);
    };
    const Eigen::MatrixXd hess = numeric_hessian(restricted, sub, fx);
    if (!hess.allFinite()) return out;
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() != Eigen::Success) return out;
    const Eigen::MatrixXd cov =
        2.0 * llt.solve(Eigen::MatrixXd::Identity(hess.rows(), hess.cols()));
    for (std::size_t k = 0; k < interior.size(); ++k) {
        const double var = cov(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
        if (!(var > 0.0)) return out;
    }
    for (std::size_t k = 0; k < interior.size(); ++k)
        out.estimates[interior[k]].se = std::sqrt(cov(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)));
    out.hessian_positive_definite = true;
    return out;
}

}  // namespace

StandardErrorTable standard_errors(const GroupedModel& model, const ParameterVector& theta_hat,
                                   const FimlOptions& options) {
    FimlObjective objective(model, options);
    ParameterVector theta = objective.parameters();
    for (std::size_t i = 0; i < theta.size(); ++i) theta.values()[i] = theta_hat.value(theta.labels()[i]);
    const Objective f = [&](std::span<const double> x) { return objective(x); };
    const double fx = objective(theta.values());
    if (!std::isfinite(fx)) throw NumericError("standard errors requested at a point with infinite -2lnL");
    return standard_errors_for(f, theta, fx);
}

FitResult fit(const GroupedModel& model, const FitOptions& options) {
    FimlObjective objective(model, options.fiml);
    const ParameterVector& layout = objective.parameters();
    if (layout.empty()) throw ModelError("model '" + model.name + "' has no free parameters");

    const Objective f = [&](std::span<const double> x) { return objective(x); };
    FitResult result;
    result.model_name = model.name;
    result.start_neg2ll = objective(layout.values());

    MinimizeResult best = minimize(f, layout.values(), layout.bounds(), options);
    if (!std::isfinite(best.f))
        throw NumericError("-2lnL is infinite at the start values and at every fallback start");

    result.theta = layout;
    result.theta.values() = best.x;
    result.neg2ll = best.f;
    result.nfree = layout.size();
    result.aic = result.neg2ll + 2.0 * static_cast<double>(result.nfree);
    result.status = best.status;
    result.iterations = best.iterations;
    result.evaluations = best.evaluations;
    result.rows = objective.row_counts();

    if (options.standard_errors) {
        StandardErrorTable table = standard_errors_for(f, result.theta, result.neg2ll);
        result.estimates = std::move(table.estimates);
        if (!table.hessian_positive_definite && result.status == FitStatus::converged)
            result.status = FitStatus::non_pd_hessian;
    } else {
        for (std::size_t i = 0; i < layout.size(); ++i)
            result.estimates.push_back({layout.labels()[i], best.x[i], std::nullopt,
                                        at_lower(best.x[i], layout.bounds()[i]) ||
                                            at_upper(best.x[i], layout.bounds()[i])});
    }
    return result;
}

double chi_square_upper_tail(double x, int df) {
    if (df <= 0) throw Error("chi-square tail needs positive degrees of freedom");
    if (x <= 0.0) return 1.0;
    boost::math::chi_squared_distribution<double> dist(static_cast<double>(df));
    return boost::math::cdf(boost::math::complement(dist, x));
}

LrtResult lrt(const FitResult& full, const FitResult& nested) {
    const int df = static_cast<int>(full.nfree) - static_cast<int>(nested.nfree);
    double chi2 = nested.neg2ll - full.neg2ll;
    if (chi2 < -kNegativeChi2Tolerance)
        throw Error("negative likelihood-ratio statistic " + std::to_string(chi2) +
                    ": models are not nested or a fit did not converge");
    chi2 = std::max(chi2, 0.0);
    if (df == 0 && chi2 <= kNegativeChi2Tolerance) return {0.0, 0, 1.0};
    if (df <= 0)
        throw Error("likelihood-ratio test needs the nested model to have fewer free parameters (df = " +
                    std::to_string(df) + ")");
    return {chi2, df, chi_square_upper_tail(chi2, df)};
}

GroupedModel with_estimates(const GroupedModel& model, const FitResult& result) {
    return unpack_parameters(model, result.theta);
}

}  // namespace twinsem
