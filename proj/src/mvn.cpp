#include "twinsem/mvn.hpp"

#include "twinsem/error.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace twinsem {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

double normal_cdf(double x) {
    if (x == kInf) return 1.0;
    if (x == -kInf) return 0.0;
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double normal_pdf(double x) {
    if (std::isinf(x)) return 0.0;
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double normal_quantile(double p) {
    if (p <= 0.0) return -kInf;
    if (p >= 1.0) return kInf;
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

double bivariate_normal_upper(double h, double k, double rho) {
    if (h == kInf || k == kInf) return 0.0;
    if (h == -kInf) return k == -kInf ? 1.0 : normal_cdf(-k);
    if (k == -kInf) return normal_cdf(-h);
    if (rho == 0.0) return normal_cdf(-h) * normal_cdf(-k);

    static constexpr std::array<double, 3> w6{0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
    static constexpr std::array<double, 3> x6{0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
    static constexpr std::array<double, 6> w12{0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                               0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
    static constexpr std::array<double, 6> x12{0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                               0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
    static constexpr std::array<double, 10> w20{0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                                                0.08327674157670475, 0.1019301198172404,  0.1181945319615184,
                                                0.1316886384491766,  0.1420961093183821,  0.1491729864726037,
                                                0.1527533871307259};
    static constexpr std::array<double, 10> x20{0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                                                0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                                                0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                                                0.07652652113349733};

    const double* w = nullptr;
    const double* x = nullptr;
    std::size_t ng = 0;
    const double ar = std::abs(rho);
    if (ar < 0.3) {
        w = w6.data(), x = x6.data(), ng = w6.size();
    } else if (ar < 0.75) {
        w = w12.data(), x = x12.data(), ng = w12.size();
    } else {
        w = w20.data(), x = x20.data(), ng = w20.size();
    }

    constexpr double tp = 2.0 * std::numbers::pi;
    double hk = h * k;
    double bvn = 0.0;

    if (ar < 0.925) {
        const double hs = (h * h + k * k) / 2.0;
        const double asr = std::asin(rho) / 2.0;
        for (std::size_t i = 0; i < ng; ++i) {
            for (double xi : {1.0 - x[i], 1.0 + x[i]}) {
                const double sn = std::sin(asr * xi);
                bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            }
        }
        bvn = bvn * asr / tp + normal_cdf(-h) * normal_cdf(-k);
    } else {
        if (rho < 0.0) {
            k = -k;
            hk = -hk;
        }
        if (ar < 1.0) {
            const double as = 1.0 - rho * rho;
            double a = std::sqrt(as);
            const double bs = (h - k) * (h - k);
            double asr = -(bs / as + hk) / 2.0;
            const double c = (4.0 - hk) / 8.0;
            const double d = (12.0 - hk) / 80.0;
            if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
            if (hk > -100.0) {
                const double b = std::sqrt(bs);
                const double sp = std::sqrt(tp) * normal_cdf(-b / a);
                bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            a /= 2.0;
            double sum = 0.0;
            for (std::size_t i = 0; i < ng; ++i) {
                for (double xi : {1.0 - x[i], 1.0 + x[i]}) {
                    const double xs = (a * xi) * (a * xi);
                    const double asr_i = -(bs / xs + hk) / 2.0;
                    if (asr_i <= -100.0) continue;
                    const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                    const double rs = std::sqrt(1.0 - xs);
                    const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
                    sum += w[i] * std::exp(asr_i) * (sp - ep);
                }
            }
            bvn = (a * sum - bvn) / tp;
        }
        if (rho > 0.0) {
            bvn += normal_cdf(-std::max(h, k));
        } else if (h >= k) {
            bvn = -bvn;
        } else {
            const double l = h < 0.0 ? normal_cdf(k) - normal_cdf(h) : normal_cdf(-h) - normal_cdf(-k);
            bvn = l - bvn;
        }
    }
    return std::clamp(bvn, 0.0, 1.0);
}

namespace {

double interval_probability(double lo, double hi) {
    // Use the tail that keeps the subtraction away from 1.
    if (lo > 0.0) return normal_cdf(-lo) - normal_cdf(-hi);
    return normal_cdf(hi) - normal_cdf(lo);
}

double bivariate_rectangle(double a1, double b1, double a2, double b2, double rho) {
    const double p = bivariate_normal_upper(a1, a2, rho) - bivariate_normal_upper(a1, b2, rho) -
                     bivariate_normal_upper(b1, a2, rho) + bivariate_normal_upper(b1, b2, rho);
    return std::clamp(p, 0.0, 1.0);
}

/// Separation-of-variables integrand with a prioritized Cholesky factor.
class SeparatedIntegrand {
public:
    SeparatedIntegrand(Eigen::VectorXd lower, Eigen::VectorXd upper, Eigen::MatrixXd sigma)
        : a_(std::move(lower)), b_(std::move(upper)), chol_(Eigen::MatrixXd::Zero(a_.size(), a_.size())) {
        const Eigen::Index d = a_.size();
        Eigen::VectorXd y = Eigen::VectorXd::Zero(d);
        for (Eigen::Index i = 0; i < d; ++i) {
            Eigen::Index best = i;
            double best_p = kInf;
            for (Eigen::Index j = i; j < d; ++j) {
                const double s2 = sigma(j, j) - chol_.row(j).head(i).squaredNorm();
                if (!(s2 > 1e-12 * sigma(j, j))) throw NumericError("covariance matrix is not positive definite");
                const double s = std::sqrt(s2);
                const double shift = chol_.row(j).head(i).dot(y.head(i));
                const double p = interval_probability((a_(j) - shift) / s, (b_(j) - shift) / s);
                if (p < best_p) {
                    best_p = p;
                    best = j;
                }
            }
            if (best != i) {
                std::swap(a_(i), a_(best));
                std::swap(b_(i), b_(best));
                sigma.row(i).swap(sigma.row(best));
                sigma.col(i).swap(sigma.col(best));
                chol_.row(i).swap(chol_.row(best));
            }
            const double cii = std::sqrt(sigma(i, i) - chol_.row(i).head(i).squaredNorm());
            chol_(i, i) = cii;
            for (Eigen::Index j = i + 1; j < d; ++j)
                chol_(j, i) = (sigma(j, i) - chol_.row(j).head(i).dot(chol_.row(i).head(i))) / cii;
            const double shift = chol_.row(i).head(i).dot(y.head(i));
            const double lo = (a_(i) - shift) / cii;
            const double hi = (b_(i) - shift) / cii;
            const double p = interval_probability(lo, hi);
            if (p > 1e-300) {
                y(i) = (normal_pdf(lo) - normal_pdf(hi)) / p;
            } else {
                y(i) = std::isinf(lo) ? hi : (std::isinf(hi) ? lo : 0.5 * (lo + hi));
            }
        }
        ys_.resize(static_cast<std::size_t>(d));
    }

    Eigen::Index dimension() const { return a_.size(); }

    double operator()(const double* w) {
        const Eigen::Index d = a_.size();
        double lo = normal_cdf(a_(0) / chol_(0, 0));
        double hi = normal_cdf(b_(0) / chol_(0, 0));
        double f = hi - lo;
        for (Eigen::Index i = 1; i < d && f > 0.0; ++i) {
            const double u = std::clamp(lo + w[i - 1] * (hi - lo), 1e-300, 1.0 - 1e-16);
            ys_[static_cast<std::size_t>(i - 1)] = normal_quantile(u);
            double shift = 0.0;
            for (Eigen::Index m = 0; m < i; ++m) shift += chol_(i, m) * ys_[static_cast<std::size_t>(m)];
            lo = normal_cdf((a_(i) - shift) / chol_(i, i));
            hi = normal_cdf((b_(i) - shift) / chol_(i, i));
            f *= hi - lo;
        }
        return std::max(f, 0.0);
    }

private:
    Eigen::VectorXd a_;
    Eigen::VectorXd b_;
    Eigen::MatrixXd chol_;
    std::vector<double> ys_;
};

RectangleResult lattice_rule(SeparatedIntegrand& integrand, const RectangleOptions& options) {
    static constexpr std::array<double, 16> primes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
    constexpr std::size_t kShifts = 12;
    const auto dims = static_cast<std::size_t>(integrand.dimension() - 1);

    std::vector<double> generator(dims);
    for (std::size_t j = 0; j < dims; ++j) generator[j] = std::fmod(std::sqrt(primes[j]), 1.0);

    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::vector<double>> shifts(kShifts, std::vector<double>(dims));
    for (auto& shift : shifts)
        for (auto& s : shift) s = unif(rng);

    std::vector<double> sums(kShifts, 0.0);
    std::vector<double> point(dims);
    std::vector<double> mirror(dims);
    std::size_t n = 0;
    std::size_t batch = 256;
    RectangleResult result;
    while (true) {
        for (std::size_t s = 0; s < kShifts; ++s) {
            for (std::size_t k = n + 1; k <= n + batch; ++k) {
                for (std::size_t j = 0; j < dims; ++j) {
                    double x = std::fmod(static_cast<double>(k) * generator[j] + shifts[s][j], 1.0);
                    // Baker's transform makes the periodized integrand smoother.
                    x = 1.0 - std::abs(2.0 * x - 1.0);
                    point[j] = x;
                    mirror[j] = 1.0 - x;
                }
                sums[s] += 0.5 * (integrand(point.data()) + integrand(mirror.data()));
            }
        }
        n += batch;
        double mean = 0.0;
        for (double v : sums) mean += v / static_cast<double>(n);
        mean /= static_cast<double>(kShifts);
        double var = 0.0;
        for (double v : sums) {
            const double e = v / static_cast<double>(n) - mean;
            var += e * e;
        }
        var /= static_cast<double>(kShifts * (kShifts - 1));
        result.probability = std::clamp(mean, 0.0, 1.0);
        result.error = 3.0 * std::sqrt(var);
        result.evaluations = 2 * kShifts * n;
        if (result.error <= options.abs_tolerance || result.evaluations >= options.max_evaluations) break;
        batch = n;
    }
    return result;
}

}  // namespace

RectangleResult mvn_rectangle_detailed(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                       const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                       const RectangleOptions& options) {
    const Eigen::Index d = mu.size();
    if (sigma.rows() != d || sigma.cols() != d || lower.size() != d || upper.size() != d)
        throw NumericError("mvn_rectangle: dimension mismatch");

    // Coordinates unbounded on both sides integrate out exactly.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < d; ++i) {
        if (std::isnan(lower(i)) || std::isnan(upper(i))) throw NumericError("mvn_rectangle: NaN bound");
        if (lower(i) > upper(i)) throw NumericError("mvn_rectangle: lower bound exceeds upper bound");
        if (lower(i) == upper(i)) return {};
        if (lower(i) == -kInf && upper(i) == kInf) continue;
        keep.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(keep.size());
    if (m == 0) return {1.0, 0.0, 0};
    if (static_cast<std::size_t>(m) > options.max_dimension)
        throw NumericError("mvn_rectangle: dimension " + std::to_string(m) + " exceeds limit " +
                           std::to_string(options.max_dimension));

    Eigen::VectorXd a(m);
    Eigen::VectorXd b(m);
    Eigen::MatrixXd s(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        a(i) = lower(keep[static_cast<std::size_t>(i)]) - mu(keep[static_cast<std::size_t>(i)]);
        b(i) = upper(keep[static_cast<std::size_t>(i)]) - mu(keep[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < m; ++j)
            s(i, j) = sigma(keep[static_cast<std::size_t>(i)], keep[static_cast<std::size_t>(j)]);
    }

    if (m == 1) {
        if (!(s(0, 0) > 0.0)) throw NumericError("covariance matrix is not positive definite");
        const double sd = std::sqrt(s(0, 0));
        return {std::clamp(interval_probability(a(0) / sd, b(0) / sd), 0.0, 1.0), 0.0, 0};
    }
    if (m == 2) {
        if (!(s(0, 0) > 0.0) || !(s(1, 1) > 0.0)) throw NumericError("covariance matrix is not positive definite");
        const double s1 = std::sqrt(s(0, 0));
        const double s2 = std::sqrt(s(1, 1));
        const double rho = s(0, 1) / (s1 * s2);
        if (!(std::abs(rho) < 1.0)) throw NumericError("covariance matrix is not positive definite");
        return {bivariate_rectangle(a(0) / s1, b(0) / s1, a(1) / s2, b(1) / s2, rho), 0.0, 0};
    }
    SeparatedIntegrand integrand(a, b, s);
    return lattice_rule(integrand, options);
}

double mvn_rectangle(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, const Eigen::VectorXd& lower,
                     const Eigen::VectorXd& upper, const RectangleOptions& options) {
    return mvn_rectangle_detailed(mu, sigma, lower, upper, options).probability;
}

}  // namespace twinsem
