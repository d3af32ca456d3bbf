#pragma once

#include "twinsem/fiml.hpp"
#include "twinsem/grouped_model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace twinsem {

enum class FitStatus { converged, non_pd_hessian, iteration_limit, flat_region };

std::string_view to_string(FitStatus status);

struct FitOptions {
    std::size_t max_iterations = 2000;
    /// Tolerance on max_i |g_i| * max(|x_i|, 1) / max(|f|, 1).
    double gradient_tolerance = 1e-6;
    std::uint64_t seed = 20240601;
    /// Jittered restarts tried when the first run does not converge.
    std::size_t multistart = 5;
    bool standard_errors = true;
    FimlOptions fiml;
};

struct Estimate {
    std::string label;
    double value = 0.0;
    /// Absent when the Hessian is not positive definite or the parameter sits on a bound.
    std::optional<double> se;
    bool at_bound = false;
};

struct FitResult {
    std::string model_name;
    std::vector<Estimate> estimates;
    double neg2ll = 0.0;
    double start_neg2ll = 0.0;
    std::size_t nfree = 0;
    double aic = 0.0;
    FitStatus status = FitStatus::converged;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
    std::vector<GroupRowCounts> rows;
    /// Estimates as a parameter vector (same order as `estimates`).
    ParameterVector theta;

    double value(std::string_view label) const;
    std::optional<double> se(std::string_view label) const;
};

/// Result of the bound-constrained quasi-Newton minimizer.
struct MinimizeResult {
    std::vector<double> x;
    double f = 0.0;
    FitStatus status = FitStatus::converged;
    std::size_t iterations = 0;
    std::size_t evaluations = 0;
};

using Objective = std::function<double(std::span<const double>)>;

/// BFGS on the projected gradient with backtracking that treats +inf as rejection.
MinimizeResult minimize(const Objective& f, std::vector<double> x0, const std::vector<Bounds>& bounds,
                        const FitOptions& options);

/// Central-difference gradient (relative step 1e-6); one-sided second-order near bounds.
std::vector<double> numeric_gradient(const Objective& f, std::span<const double> x, double fx,
                                     const std::vector<Bounds>& bounds, std::size_t* evaluations = nullptr);

/// Central-difference Hessian with steps max(1e-4, 1e-4 |x_i|).
Eigen::MatrixXd numeric_hessian(const Objective& f, std::span<const double> x, double fx);

FitResult fit(const GroupedModel& model, const FitOptions& options = {});

struct StandardErrorTable {
    std::vector<Estimate> estimates;
    bool hessian_positive_definite = false;
};

/// SEs = sqrt(diag(2 H^-1)) of -2 ln L at `theta_hat`; parameters on a bound are
/// excluded from the Hessian and reported without an SE.
StandardErrorTable standard_errors(const GroupedModel& model, const ParameterVector& theta_hat,
                                   const FimlOptions& options = {});

struct LrtResult {
    double chi2 = 0.0;
    int df = 0;
    double p = 1.0;
};

/// Likelihood-ratio test of `nested` against `full`.
LrtResult lrt(const FitResult& full, const FitResult& nested);

double chi_square_upper_tail(double x, int df);

/// The model with the fitted estimates written back into its free cells.
GroupedModel with_estimates(const GroupedModel& model, const FitResult& result);

}  // namespace twinsem
