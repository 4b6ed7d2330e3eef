#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rwre::stats {

/// Neumaier-compensated accumulator. Order of additions still matters for the
/// last bit, so callers sum in a canonical order.
class KahanSum {
public:
    void add(double x) noexcept;
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

double sum(std::span<const double> xs) noexcept;
double mean(std::span<const double> xs);
double variance(std::span<const double> xs);  // unbiased

/// Linear-interpolation quantile (Hyndman-Fan type 7). Input need not be sorted.
double quantile(std::span<const double> xs, double p);
double median(std::span<const double> xs);

struct QuartileSummary {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
};
QuartileSummary quartiles(std::span<const double> xs);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value. Conservative
/// for discrete data.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// Kolmogorov survival function Q(t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2).
double kolmogorov_q(double t);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;  // from residuals; zero when only two points
};

/// Ordinary least squares. Requires at least two distinct x values.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// Chi-square upper tail probability P(X > x) for `dof` degrees of freedom.
double chi_square_sf(double x, double dof);

}  // namespace rwre::stats
