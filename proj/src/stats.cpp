#include "rwre/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>

namespace rwre::stats {

void KahanSum::add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
        comp_ += (sum_ - t) + x;
    } else {
        comp_ += (x - t) + sum_;
    }
    sum_ = t;
}

double sum(std::span<const double> xs) noexcept {
    KahanSum acc;
    for (double x : xs) acc.add(x);
    return acc.value();
}

double mean(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("mean of empty sample");
    return sum(xs) / static_cast<double>(xs.size());
}

double variance(std::span<const double> xs) {
    if (xs.size() < 2) throw std::invalid_argument("variance needs at least two values");
    const double m = mean(xs);
    KahanSum acc;
    for (double x : xs) acc.add((x - m) * (x - m));
    return acc.value() / static_cast<double>(xs.size() - 1);
}

namespace {

double sorted_quantile(const std::vector<double>& sorted, double p) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double quantile(std::span<const double> xs, double p) {
    if (xs.empty()) throw std::invalid_argument("quantile of empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level outside [0,1]");
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    return sorted_quantile(sorted, p);
}

double median(std::span<const double> xs) { return quantile(xs, 0.5); }

QuartileSummary quartiles(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("quartiles of empty sample");
    std::vector<double> sorted(xs.begin(), xs.end());
    std::sort(sorted.begin(), sorted.end());
    return {sorted_quantile(sorted, 0.25), sorted_quantile(sorted, 0.5), sorted_quantile(sorted, 0.75)};
}

double kolmogorov_q(double t) {
    if (t <= 0.0) return 1.0;
    if (t < 0.2) return 1.0;  // series converges slowly here; Q is 1 to double precision
    double total = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * t * t);
        total += sign * term;
        if (term < 1e-17) break;
        sign = -sign;
    }
    return std::clamp(2.0 * total, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("KS test needs two nonempty samples");
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());

    const double nx = static_cast<double>(x.size());
    const double ny = static_cast<double>(y.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] == v) ++i;
        while (j < y.size() && y[j] == v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
    }

    const double ne = std::sqrt(nx * ny / (nx + ny));
    return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line needs >= 2 paired points");
    const double xm = mean(x);
    const double ym = mean(y);
    KahanSum sxx;
    KahanSum sxy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx.add((x[i] - xm) * (x[i] - xm));
        sxy.add((x[i] - xm) * (y[i] - ym));
    }
    if (sxx.value() <= 0.0) throw std::invalid_argument("fit_line needs distinct x values");

    LineFit fit;
    fit.slope = sxy.value() / sxx.value();
    fit.intercept = ym - fit.slope * xm;
    if (x.size() > 2) {
        KahanSum rss;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double r = y[i] - (fit.intercept + fit.slope * x[i]);
            rss.add(r * r);
        }
        fit.slope_stderr = std::sqrt(rss.value() / static_cast<double>(x.size() - 2) / sxx.value());
    }
    return fit;
}

double chi_square_sf(double x, double dof) {
    boost::math::chi_squared dist(dof);
    return boost::math::cdf(boost::math::complement(dist, x));
}

}  // namespace rwre::stats
