#include "rwre/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "rwre/format.hpp"
#include "rwre/random.hpp"
#include "rwre/stats.hpp"

namespace rwre {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> log_rhos(const EnvironmentModel& model) {
    std::vector<double> out(model.states());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = std::log(model.rho(k));
    return out;
}

double log_add(double a, double b) {
    if (a == -kInf) return b;
    if (b == -kInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

// ---- IID closed forms ------------------------------------------------------

double iid_lambda(const EnvironmentModel& model, double lam) {
    const auto lr = log_rhos(model);
    double shift = -kInf;
    for (std::size_t k = 0; k < lr.size(); ++k) {
        if (model.weights[k] > 0.0) shift = std::max(shift, lam * lr[k]);
    }
    double total = 0.0;
    for (std::size_t k = 0; k < lr.size(); ++k) {
        if (model.weights[k] > 0.0) total += model.weights[k] * std::exp(lam * lr[k] - shift);
    }
    return shift + std::log(total);
}

double iid_lambda_derivative(const EnvironmentModel& model, double lam) {
    const auto lr = log_rhos(model);
    double shift = -kInf;
    for (std::size_t k = 0; k < lr.size(); ++k) {
        if (model.weights[k] > 0.0) shift = std::max(shift, lam * lr[k]);
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < lr.size(); ++k) {
        if (model.weights[k] <= 0.0) continue;
        const double w = model.weights[k] * std::exp(lam * lr[k] - shift);
        num += w * lr[k];
        den += w;
    }
    return num / den;
}

// ---- Markov: Perron root of the tilted matrix ------------------------------

struct Perron {
    double log_root = 0.0;
    std::vector<double> right;
    std::vector<double> left;
    std::vector<double> matrix;  // shifted M(λ) e^{-shift}
};

// Power iteration with Collatz-Wielandt bounds: min_i (Mv)_i/v_i ≤ r ≤ max_i (Mv)_i/v_i.
// Stops once the bracket is within 1e-13 relative.
std::vector<double> power_iterate(const std::vector<double>& m, std::size_t n, bool transpose, double& root) {
    std::vector<double> v(n, 1.0);
    std::vector<double> w(n);
    for (int iter = 0; iter < 1000000; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += (transpose ? m[j * n + i] : m[i * n + j]) * v[j];
            w[i] = acc;
        }
        double lo = kInf;
        double hi = 0.0;
        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double ratio = w[i] / v[i];
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
            norm = std::max(norm, w[i]);
        }
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / norm;
        if (hi - lo <= 1e-13 * hi) {
            root = 0.5 * (lo + hi);
            return v;
        }
    }
    throw std::runtime_error("Perron power iteration did not converge");
}

Perron perron(const EnvironmentModel& model, double lam, bool want_left) {
    const std::size_t n = model.states();
    const auto lr = log_rhos(model);
    double shift = -kInf;
    for (double l : lr) shift = std::max(shift, lam * l);

    Perron out;
    out.matrix.resize(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) out.matrix[i * n + j] = model.transition_at(i, j) * std::exp(lam * lr[j] - shift);
    }
    double root = 0.0;
    out.right = power_iterate(out.matrix, n, false, root);
    out.log_root = shift + std::log(root);
    if (want_left) {
        double left_root = 0.0;
        out.left = power_iterate(out.matrix, n, true, left_root);
    }
    return out;
}

double markov_lambda_derivative(const EnvironmentModel& model, double lam) {
    const auto p = perron(model, lam, true);
    const std::size_t n = model.states();
    const auto lr = log_rhos(model);
    // r' = u^T M' v / u^T v with M'_ij = M_ij log ρ_j; Λ' = r'/r = u^T M' v / (u^T M v).
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double t = p.left[i] * p.matrix[i * n + j] * p.right[j];
            num += t * lr[j];
            den += t;
        }
    }
    return num / den;
}

// Karp's minimum mean cycle on the transition graph with edge weight sign*log ρ(target).
double min_cycle_mean(const EnvironmentModel& model, double sign) {
    const std::size_t n = model.states();
    const auto lr = log_rhos(model);
    std::vector<std::vector<double>> d(n + 1, std::vector<double>(n, kInf));
    d[0][0] = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        for (std::size_t u = 0; u < n; ++u) {
            if (d[k - 1][u] == kInf) continue;
            for (std::size_t v = 0; v < n; ++v) {
                if (model.transition_at(u, v) > 0.0) d[k][v] = std::min(d[k][v], d[k - 1][u] + sign * lr[v]);
            }
        }
    }
    double best = kInf;
    for (std::size_t v = 0; v < n; ++v) {
        if (d[n][v] == kInf) continue;
        double worst = -kInf;
        for (std::size_t k = 0; k < n; ++k) {
            if (d[k][v] == kInf) continue;
            worst = std::max(worst, (d[n][v] - d[k][v]) / static_cast<double>(n - k));
        }
        best = std::min(best, worst);
    }
    return best;
}

// Smallest λ > 0 with Λ(λ) = 0, searching beyond 1 when needed. nullopt when Λ
// stays negative (all moments finite) or never dips below zero.
std::optional<KappaResult> positive_root(const EnvironmentModel& model) {
    const double at_one = lambda_fn(model, 1.0);
    if (std::abs(at_one) <= kSignTolerance) return KappaResult{1.0, true};

    double lo = 1e-9;
    if (!(lambda_fn(model, lo) < 0.0)) return std::nullopt;
    double hi = 1.0;
    while (lambda_fn(model, hi) <= 0.0) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e6) return std::nullopt;
    }
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        (lambda_fn(model, mid) < 0.0 ? lo : hi) = mid;
    }
    return KappaResult{0.5 * (lo + hi), false};
}

// lim_{λ→±∞} (λx − Λ(λ)) at a boundary slope x.
double boundary_rate(const EnvironmentModel& model, double x, double sign) {
    double prev = kInf;
    double value = 0.0;
    for (int k = 0; k <= 30; ++k) {
        const double lam = sign * std::ldexp(1.0, k);
        value = lam * x - lambda_fn(model, lam);
        if (std::abs(value - prev) <= 1e-13 * std::max(1.0, std::abs(value))) break;
        prev = value;
    }
    return std::max(0.0, value);
}

// log E[ρ_0 ρ_{-1} ⋯ ρ_{-n}] for n = 0..depth-1, by stationarity equal to the
// forward product over n+1 consecutive sites.
std::vector<double> log_expected_terms(const EnvironmentModel& model, std::int64_t depth) {
    std::vector<double> out(static_cast<std::size_t>(depth));
    if (!model.is_markov()) {
        const double log_mean_rho = lambda_fn(model, 1.0);
        for (std::int64_t k = 0; k < depth; ++k) out[static_cast<std::size_t>(k)] = static_cast<double>(k + 1) * log_mean_rho;
        return out;
    }
    const std::size_t n = model.states();
    std::vector<double> a(n);
    std::vector<double> next(n);
    for (std::size_t j = 0; j < n; ++j) a[j] = model.stationary[j] * model.rho(j);
    double log_scale = 0.0;
    for (std::int64_t k = 0; k < depth; ++k) {
        double total = 0.0;
        for (double v : a) total += v;
        out[static_cast<std::size_t>(k)] = log_scale + std::log(total);
        log_scale += std::log(total);
        for (auto& v : a) v /= total;
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += a[i] * model.transition_at(i, j);
            next[j] = acc * model.rho(j);
        }
        a.swap(next);
    }
    return out;
}

std::int64_t ninety_percent(std::int64_t depth) { return depth - depth / 10; }

}  // namespace

double lambda_fn(const EnvironmentModel& model, double lam) {
    if (lam == 0.0) return 0.0;
    return model.is_markov() ? perron(model, lam, false).log_root : iid_lambda(model, lam);
}

double lambda_derivative(const EnvironmentModel& model, double lam) {
    return model.is_markov() ? markov_lambda_derivative(model, lam) : iid_lambda_derivative(model, lam);
}

double mean_log_rho(const EnvironmentModel& model) {
    const auto lr = log_rhos(model);
    const auto w = model.marginal();
    stats::KahanSum acc;
    for (std::size_t k = 0; k < lr.size(); ++k) acc.add(w[k] * lr[k]);
    return acc.value();
}

double finite_log_moment(const EnvironmentModel& model, double lam, std::int64_t n) {
    if (n < 1) throw std::invalid_argument("finite_log_moment needs n >= 1");
    if (!model.is_markov()) return iid_lambda(model, lam);
    const std::size_t m = model.states();
    const auto lr = log_rhos(model);
    std::vector<double> a(m);
    std::vector<double> next(m);
    for (std::size_t j = 0; j < m; ++j) a[j] = model.stationary[j] * std::exp(lam * lr[j]);
    double log_scale = 0.0;
    for (std::int64_t step = 1; step < n; ++step) {
        double total = 0.0;
        for (double v : a) total += v;
        log_scale += std::log(total);
        for (std::size_t j = 0; j < m; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += a[i] / total * model.transition_at(i, j);
            next[j] = acc * std::exp(lam * lr[j]);
        }
        a.swap(next);
    }
    double total = 0.0;
    for (double v : a) total += v;
    return (log_scale + std::log(total)) / static_cast<double>(n);
}

SlopeRange slope_range(const EnvironmentModel& model) {
    if (model.is_markov()) return {min_cycle_mean(model, 1.0), -min_cycle_mean(model, -1.0)};
    const auto lr = log_rhos(model);
    SlopeRange r{kInf, -kInf};
    for (std::size_t k = 0; k < lr.size(); ++k) {
        if (model.weights[k] <= 0.0) continue;
        r.min = std::min(r.min, lr[k]);
        r.max = std::max(r.max, lr[k]);
    }
    return r;
}

KappaResult kappa_root(const EnvironmentModel& model) {
    const auto root = positive_root(model);
    if (!root || root->value > 1.0) {
        throw ModelError("Lambda has no zero in (0,1]; the model is outside the zero-speed regime");
    }
    return *root;
}

std::optional<double> rate_function(const EnvironmentModel& model, double x) {
    const auto range = slope_range(model);
    const double tol = 1e-12 * std::max(1.0, std::abs(x));
    if (x > range.max + tol || x < range.min - tol) return std::nullopt;
    if (range.max - range.min <= tol) return 0.0;
    if (x >= range.max - tol) return boundary_rate(model, range.max, 1.0);
    if (x <= range.min + tol) return boundary_rate(model, range.min, -1.0);

    // Λ' is increasing; bracket the stationary point of λx − Λ(λ) and bisect.
    double lo = -1.0;
    double hi = 1.0;
    while (lambda_derivative(model, hi) < x && hi < 1e12) {
        lo = hi;
        hi *= 2.0;
    }
    while (lambda_derivative(model, lo) > x && lo > -1e12) {
        hi = lo;
        lo *= 2.0;
    }
    for (int iter = 0; iter < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++iter) {
        const double mid = 0.5 * (lo + hi);
        (lambda_derivative(model, mid) < x ? lo : hi) = mid;
    }
    const double lam = 0.5 * (lo + hi);
    return std::max(0.0, lam * x - lambda_fn(model, lam));
}

KappaViaRate kappa_via_rate(const EnvironmentModel& model) {
    KappaViaRate out;
    const double y_max = slope_range(model).max;
    if (!(y_max > 0.0)) return out;

    constexpr double step = 1e-3;
    std::vector<double> ys;
    for (int k = 1; k * step < y_max; ++k) ys.push_back(k * step);
    ys.push_back(y_max);

    auto ratio = [&](double y) {
        const auto j = rate_function(model, y);
        return j ? *j / y : kInf;
    };
    std::vector<double> vals(ys.size());
    for (std::size_t k = 0; k < ys.size(); ++k) vals[k] = ratio(ys[k]);

    const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
    const double flat_tol = 1e-12 * std::max(1.0, vals[best]);
    std::size_t lo = best;
    std::size_t hi = best;
    while (lo > 0 && vals[lo - 1] <= vals[best] + flat_tol) --lo;
    while (hi + 1 < vals.size() && vals[hi + 1] <= vals[best] + flat_tol) ++hi;
    out.argmin_lo = ys[lo];
    out.argmin_hi = ys[hi];

    // Golden-section refinement on the neighbouring grid cell pair.
    double a = best > 0 ? ys[best - 1] : 0.5 * ys[best];
    double b = best + 1 < ys.size() ? ys[best + 1] : ys[best];
    constexpr double inv_phi = 0.6180339887498949;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = ratio(c);
    double fd = ratio(d);
    while (b - a > 1e-12) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = ratio(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = ratio(d);
        }
    }
    const double refined_y = 0.5 * (a + b);
    const double refined = ratio(refined_y);
    if (refined < vals[best]) {
        out.value = refined;
        out.argmin = refined_y;
    } else {
        out.value = vals[best];
        out.argmin = ys[best];
    }
    out.argmin_lo = std::min(out.argmin_lo, out.argmin);
    out.argmin_hi = std::max(out.argmin_hi, out.argmin);
    return out;
}

TruncatedR truncated_r(const Environment& env, std::int64_t depth) {
    if (depth < 1) throw std::invalid_argument("truncation depth must be >= 1");
    std::vector<double> omega(static_cast<std::size_t>(depth));
    env.fill_omega(-(depth - 1), omega);  // omega[depth-1] is site 0

    const std::int64_t mark = ninety_percent(depth);
    stats::KahanSum acc;
    acc.add(1.0);
    TruncatedR out;
    double log_prod = 0.0;
    for (std::int64_t k = 0; k < depth; ++k) {
        if (k == mark) out.at_ninety_percent = acc.value();
        log_prod += std::log(rho_of(omega[static_cast<std::size_t>(depth - 1 - k)]));
        acc.add(std::exp(log_prod));
    }
    out.value = acc.value();
    if (mark >= depth) out.at_ninety_percent = out.value;
    return out;
}

SpeedEstimate speed(const EnvironmentModel& model, std::int64_t truncation_depth, std::int64_t replicas,
                    std::uint64_t seed) {
    if (truncation_depth < 1 || replicas < 1) throw std::invalid_argument("speed needs depth >= 1 and replicas >= 1");
    SpeedEstimate out;
    out.truncation_depth = truncation_depth;
    out.replicas = replicas;

    stats::KahanSum acc;
    for (std::int64_t r = 0; r < replicas; ++r) {
        const Environment env(model, derive_key(seed, "speed", r));
        acc.add(truncated_r(env, truncation_depth).value);
    }
    out.mean_r = acc.value() / static_cast<double>(replicas);

    // The divergence of E R lives in rare environments a sample mean cannot see,
    // so the tail rule runs on the exact term expectations.
    const auto terms = log_expected_terms(model, truncation_depth);
    double log_full = 0.0;  // log of the leading 1
    double log_mark = 0.0;
    const std::int64_t mark = ninety_percent(truncation_depth);
    for (std::int64_t k = 0; k < truncation_depth; ++k) {
        if (k == mark) log_mark = log_full;
        log_full = log_add(log_full, terms[static_cast<std::size_t>(k)]);
    }
    if (mark >= truncation_depth) log_mark = log_full;
    out.expected_r = std::exp(log_full);
    out.tail_increment = -std::expm1(log_mark - log_full);
    out.converged = out.tail_increment < 1e-9;
    out.velocity = out.converged ? 1.0 / (2.0 * out.mean_r - 1.0) : 0.0;
    return out;
}

RMomentEstimate r_moment(const EnvironmentModel& model, double beta, std::int64_t truncation_depth,
                         std::int64_t replicas, std::uint64_t seed) {
    if (!(beta > 0.0)) throw std::invalid_argument("r_moment needs beta > 0");
    if (truncation_depth < 1 || replicas < 1) throw std::invalid_argument("r_moment needs depth >= 1 and replicas >= 1");

    RMomentEstimate out;
    out.beta = beta;
    out.truncation_depth = truncation_depth;
    out.replicas = replicas;

    stats::KahanSum acc;
    stats::KahanSum tail;
    for (std::int64_t r = 0; r < replicas; ++r) {
        const Environment env(model, derive_key(seed, "r-moment", r));
        const auto rv = truncated_r(env, truncation_depth);
        const double full = std::pow(rv.value, beta);
        acc.add(full);
        tail.add(full - std::pow(rv.at_ninety_percent, beta));
    }
    out.estimate = acc.value() / static_cast<double>(replicas);
    out.tail_diagnostic = tail.value() / static_cast<double>(replicas);

    const auto root = positive_root(model);
    out.divergence_warning = root && beta >= root->value;
    return out;
}

double empirical_log_rho_mean(const Environment& env, std::int64_t n) {
    if (n < 1) throw std::invalid_argument("empirical_log_rho_mean needs n >= 1");
    std::vector<double> omega(static_cast<std::size_t>(n));
    env.fill_omega(0, omega);
    stats::KahanSum acc;
    for (double w : omega) acc.add(std::log(rho_of(w)));
    return acc.value() / static_cast<double>(n);
}

SpectrumReport spectrum_report(const EnvironmentModel& model, const SpectrumOptions& options) {
    if (!(options.lambda_step > 0.0) || options.lambda_max < options.lambda_min || options.rate_points < 2) {
        throw std::invalid_argument("invalid spectrum grid options");
    }
    SpectrumReport report;
    const auto points = static_cast<int>(std::llround((options.lambda_max - options.lambda_min) / options.lambda_step)) + 1;
    for (int i = 0; i < points; ++i) {
        const double lam = options.lambda_min + i * options.lambda_step;
        report.lambda_grid.emplace_back(lam, lambda_fn(model, lam));
    }

    const auto kappa = kappa_root(model);
    report.kappa_root = kappa.value;
    report.kappa_boundary = kappa.boundary;
    const auto via_rate = kappa_via_rate(model);
    report.kappa_via_rate = via_rate.value.value_or(kInf);
    report.mean_log_rho = mean_log_rho(model);

    const auto range = slope_range(model);
    for (int i = 0; i < options.rate_points; ++i) {
        const double x = range.min + (range.max - range.min) * i / (options.rate_points - 1);
        if (const auto j = rate_function(model, x)) report.rate_grid.emplace_back(x, *j);
    }

    double best_gap = kInf;
    for (const auto& [lam, value] : report.lambda_grid) {
        if (lam <= 0.0) continue;
        if (const double gap = std::abs(lam - 0.5 * kappa.value); gap < best_gap) {
            best_gap = gap;
            report.lambda1_probe = lam;
            report.lambda1_probe_value = value;
        }
    }

    report.speed = speed(model, options.speed_depth, options.speed_replicas, options.seed);
    return report;
}

namespace {

nlohmann::json finite_or_null(double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); }

std::string grid_csv(const char* header, const std::vector<std::pair<double, double>>& rows) {
    std::ostringstream out;
    out << header << '\n';
    for (const auto& [a, b] : rows) out << format_real(a) << ',' << format_real(b) << '\n';
    return out.str();
}

}  // namespace

nlohmann::json to_json(const SpectrumReport& report) {
    nlohmann::json j;
    j["lambda_grid"] = nlohmann::json::array();
    for (const auto& [lam, value] : report.lambda_grid) j["lambda_grid"].push_back({{"lambda", lam}, {"Lambda", value}});
    j["kappa_root"] = report.kappa_root;
    j["kappa_boundary"] = report.kappa_boundary;
    j["kappa_via_rate"] = finite_or_null(report.kappa_via_rate);
    j["rate_grid"] = nlohmann::json::array();
    for (const auto& [x, rate] : report.rate_grid) j["rate_grid"].push_back({{"x", x}, {"J", rate}});
    j["mean_log_rho"] = report.mean_log_rho;
    j["lambda1_probe"] = {{"lambda", report.lambda1_probe}, {"Lambda", report.lambda1_probe_value}};
    const auto& s = report.speed;
    j["speed"] = {{"truncation_depth", s.truncation_depth},
                  {"replicas", s.replicas},
                  {"mean_r", finite_or_null(s.mean_r)},
                  {"expected_r", finite_or_null(s.expected_r)},
                  {"tail_increment", s.tail_increment},
                  {"converged", s.converged},
                  {"zero_speed", !s.converged},
                  {"velocity", s.velocity}};
    return j;
}

std::string lambda_grid_csv(const SpectrumReport& report) { return grid_csv("lambda,Lambda", report.lambda_grid); }

std::string rate_grid_csv(const SpectrumReport& report) { return grid_csv("x,J", report.rate_grid); }

}  // namespace rwre
