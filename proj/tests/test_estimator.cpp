#include "twinsem/error.hpp"
#include "twinsem/estimator.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace twinsem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Bounds> unbounded(std::size_t n) { return std::vector<Bounds>(n); }

/// Saturated bivariate model: free means, variances and covariance.
GroupedModel saturated(ColumnTable data) {
    RamModel m("sat", {"x", "y"}, {});
    m.add_path({"x", "x", 2, true, 1.0, std::string("vx"), false});
    m.add_path({"y", "y", 2, true, 1.0, std::string("vy"), false});
    m.add_path({"x", "y", 2, true, 0.0, std::string("cxy"), false});
    m.add_path({"one", "x", 1, true, 0.0, std::string("mx"), false});
    m.add_path({"one", "y", 1, true, 0.0, std::string("my"), false});
    return single_group(m, std::move(data));
}

ColumnTable bivariate(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = 1.0 + 1.5 * z(rng);
        y[i] = -0.5 + 0.4 * x[i] + z(rng);
    }
    ColumnTable t;
    t.put_continuous("x", x);
    t.put_continuous("y", y);
    return t;
}

FitResult fake_fit(double neg2ll, std::size_t nfree) {
    FitResult r;
    r.neg2ll = neg2ll;
    r.nfree = nfree;
    return r;
}

}  // namespace

TEST_CASE("minimize: quadratic and Rosenbrock") {
    FitOptions o;
    const Objective quad = [](std::span<const double> x) {
        return (x[0] - 3.0) * (x[0] - 3.0) + 10.0 * (x[1] + 1.0) * (x[1] + 1.0) + 5.0;
    };
    auto r = minimize(quad, {0.0, 0.0}, unbounded(2), o);
    CHECK(r.status == FitStatus::converged);
    CHECK(r.x[0] == doctest::Approx(3.0).epsilon(1e-5));
    CHECK(r.x[1] == doctest::Approx(-1.0).epsilon(1e-5));

    const Objective rosen = [](std::span<const double> x) {
        return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2) + 1.0;
    };
    r = minimize(rosen, {-1.2, 1.0}, unbounded(2), o);
    CHECK(r.status == FitStatus::converged);
    CHECK(r.x[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(r.x[1] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("minimize respects bounds and treats +inf as a rejected step") {
    FitOptions o;
    const Objective f = [](std::span<const double> x) {
        if (x[0] < -0.5) return kInf;
        return (x[0] + 2.0) * (x[0] + 2.0) + 1.0;
    };
    std::vector<Bounds> b{{0.0, kInf}};
    auto r = minimize(f, {2.0}, b, o);
    CHECK(r.x[0] == doctest::Approx(0.0).epsilon(1e-9));
    r = minimize(f, {2.0}, unbounded(1), o);
    CHECK(r.x[0] >= -0.5);
    CHECK(std::isfinite(r.f));
}

TEST_CASE("numeric gradient: central in the interior, one-sided next to bounds") {
    const Objective f = [](std::span<const double> x) { return std::exp(x[0]) + x[0] * x[1] * x[1]; };
    std::vector<double> x{0.3, -0.7};
    auto g = numeric_gradient(f, x, f(x), unbounded(2));
    CHECK(g[0] == doctest::Approx(std::exp(0.3) + 0.49).epsilon(1e-7));
    CHECK(g[1] == doctest::Approx(2.0 * 0.3 * -0.7).epsilon(1e-7));
    std::vector<Bounds> b{{0.3, kInf}, {-kInf, -0.7}};
    g = numeric_gradient(f, x, f(x), b);
    CHECK(g[0] == doctest::Approx(std::exp(0.3) + 0.49).epsilon(1e-6));
    CHECK(g[1] == doctest::Approx(2.0 * 0.3 * -0.7).epsilon(1e-6));
}

TEST_CASE("saturated model reaches the closed-form maximum") {
    const ColumnTable data = bivariate(2000, 7);
    const GroupedModel model = saturated(data);
    const FitResult r = fit(model);
    REQUIRE(r.status == FitStatus::converged);

    const auto& x = data.continuous("x");
    const auto& y = data.continuous("y");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    Eigen::Matrix2d s = Eigen::Matrix2d::Zero();
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Eigen::Vector2d d(x[i] - mx, y[i] - my);
        s += d * d.transpose() / n;
    }
    const double closed = n * (2.0 * std::log(2.0 * std::numbers::pi) + std::log(s.determinant()) + 2.0);
    CHECK(std::abs(r.neg2ll - closed) < 1e-6);
    CHECK(r.value("mx") == doctest::Approx(mx).epsilon(1e-5));
    CHECK(r.value("cxy") == doctest::Approx(s(0, 1)).epsilon(1e-4));
    CHECK(r.aic == doctest::Approx(r.neg2ll + 10.0));
    // SE of a mean is sigma_hat / sqrt(N).
    REQUIRE(r.se("mx"));
    CHECK(*r.se("mx") == doctest::Approx(std::sqrt(s(0, 0) / n)).epsilon(1e-3));
    CHECK(*r.se("vx") == doctest::Approx(s(0, 0) * std::sqrt(2.0 / n)).epsilon(1e-2));

    const GroupedModel fitted = with_estimates(model, r);
    CHECK(pack_parameters(fitted).value("vy") == doctest::Approx(r.value("vy")));
}

TEST_CASE("parameters fitted onto a bound carry no standard error") {
    const GroupedModel model = saturated(bivariate(500, 3));
    GroupedModel bounded = model;
    bounded.bounds["cxy"] = Bounds{-kInf, 0.0};
    const FitResult r = fit(bounded);
    CHECK(r.value("cxy") == doctest::Approx(0.0).epsilon(1e-8));
    bool found = false;
    for (const auto& e : r.estimates)
        if (e.label == "cxy") {
            found = true;
            CHECK(e.at_bound);
            CHECK_FALSE(e.se.has_value());
        }
    CHECK(found);
    CHECK(r.se("mx").has_value());
}

TEST_CASE("fits are reproducible") {
    const GroupedModel model = saturated(bivariate(300, 11));
    const FitResult a = fit(model);
    const FitResult b = fit(model);
    CHECK(a.neg2ll == b.neg2ll);
    CHECK(a.theta.values() == b.theta.values());
}

TEST_CASE("fit without free parameters is an error") {
    RamModel m("fixed", {"x"}, {});
    m.add_path({"x", "x", 2, false, 1.0, {}, false});
    ColumnTable t;
    t.put_continuous("x", {0.1, 0.2});
    CHECK_THROWS_AS(fit(single_group(m, t)), ModelError);
}

TEST_CASE("likelihood-ratio test") {
    const LrtResult r = lrt(fake_fit(100.0, 5), fake_fit(103.841458820694, 4));
    CHECK(r.df == 1);
    CHECK(r.p == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(lrt(fake_fit(100.0, 5), fake_fit(100.0 - 5e-7, 4)).chi2 == 0.0);
    CHECK_THROWS_AS(lrt(fake_fit(100.0, 5), fake_fit(99.0, 4)), Error);
    const LrtResult same = lrt(fake_fit(100.0, 4), fake_fit(100.0, 4));
    CHECK(same.df == 0);
    CHECK(same.p == 1.0);
    CHECK_THROWS_AS(lrt(fake_fit(100.0, 4), fake_fit(101.0, 4)), Error);
    CHECK_THROWS_AS(lrt(fake_fit(100.0, 4), fake_fit(101.0, 5)), Error);
    CHECK(chi_square_upper_tail(5.991464547107979, 2) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("status names") {
    CHECK(to_string(FitStatus::converged) == "converged");
    CHECK(to_string(FitStatus::non_pd_hessian) == "non-PD-Hessian");
    CHECK(to_string(FitStatus::iteration_limit) == "iteration-limit");
    CHECK(to_string(FitStatus::flat_region) == "flat-region");
}
