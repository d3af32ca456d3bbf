#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>

namespace twinsem {

double normal_cdf(double x);
double normal_pdf(double x);
double normal_quantile(double p);

/// P(X > h, Y > k) for a standard bivariate normal with correlation rho
/// (Drezner-Wesolowsky with Genz's Gauss-Legendre refinements).
double bivariate_normal_upper(double h, double k, double rho);

struct RectangleOptions {
    std::size_t max_dimension = 8;
    double abs_tolerance = 1e-6;
    std::uint64_t seed = 0x5eed5eedULL;
    /// Cap on integrand evaluations for the quasi-Monte-Carlo route (d >= 3).
    std::size_t max_evaluations = 4'000'000;
};

struct RectangleResult {
    double probability = 0.0;
    /// Estimated absolute error (zero for the closed-form routes).
    double error = 0.0;
    std::size_t evaluations = 0;
};

/// P(lower <= X <= upper) for X ~ N(mu, sigma). Bounds may be infinite.
/// d = 1, 2 use closed-form CDF algorithms; d >= 3 uses randomized lattice rules
/// over the separation-of-variables transform with a fixed seed.
RectangleResult mvn_rectangle_detailed(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                       const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                       const RectangleOptions& options = {});

double mvn_rectangle(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, const Eigen::VectorXd& lower,
                     const Eigen::VectorXd& upper, const RectangleOptions& options = {});

}  // namespace twinsem
