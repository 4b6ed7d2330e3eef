#pragma once

// Large-deviation layer: the log-moment function Λ, its Legendre conjugate J,
// the exponent κ, the speed and moments of R.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwre/env.hpp"

namespace rwre {

/// Λ(λ) = lim (1/n) log E ∏_{i<n} ρ_i^λ. Closed form for IID kinds; log Perron
/// root of M(λ)_{ij} = P_ij ρ(j)^λ for Markov models. Λ(0) is exactly 0.
double lambda_fn(const EnvironmentModel& model, double lam);

/// Λ'(λ). For Markov models this uses left/right Perron vectors.
double lambda_derivative(const EnvironmentModel& model, double lam);

/// E_P log ρ_0 under the marginal law.
double mean_log_rho(const EnvironmentModel& model);

/// (1/n) log E ∏_{i=0}^{n-1} ρ_i^λ evaluated exactly by a transfer-matrix
/// recursion over the marginal/chain. Used as a finite-n check on lambda_fn.
double finite_log_moment(const EnvironmentModel& model, double lam, std::int64_t n);

/// Closure of the range of Λ': [min, max] of achievable means of log ρ.
/// Markov bounds are extreme cycle means of log ρ on the transition graph.
struct SlopeRange {
    double min = 0.0;
    double max = 0.0;
};
SlopeRange slope_range(const EnvironmentModel& model);

struct KappaResult {
    double value = 0.0;
    bool boundary = false;  // Λ(1) = 0, so κ = 1
};

/// Unique root of Λ in (0, 1], by bisection to 1e-12 absolute.
KappaResult kappa_root(const EnvironmentModel& model);

/// J(x) = sup_λ {λx − Λ(λ)}; std::nullopt encodes +∞.
std::optional<double> rate_function(const EnvironmentModel& model, double x);

struct KappaViaRate {
    std::optional<double> value;  // nullopt: +∞ (no finite slope y > 0)
    double argmin = 0.0;
    double argmin_lo = 0.0;  // flat-minimum interval on the search grid
    double argmin_hi = 0.0;
};

/// min_{y>0} J(y)/y over (0, y_max] by a 1e-3 grid plus golden-section refinement.
KappaViaRate kappa_via_rate(const EnvironmentModel& model);

/// Truncated R_depth = 1 + Σ_{n<depth} ρ_0 ρ_{-1} ⋯ ρ_{-n} for one realization.
/// Also reports the partial sum at 90% depth for the tail rule.
struct TruncatedR {
    double value = 1.0;
    double at_ninety_percent = 1.0;
};
TruncatedR truncated_r(const Environment& env, std::int64_t depth);

struct SpeedEstimate {
    std::int64_t truncation_depth = 0;
    std::int64_t replicas = 0;
    double mean_r = 0.0;             // Monte Carlo mean of truncated R
    double expected_r = 0.0;         // exact E_P of truncated R (transfer matrix)
    double tail_increment = 0.0;     // relative growth of expected_r over the last 10% of depth
    bool converged = false;          // tail_increment < 1e-9
    double velocity = 0.0;           // 1/(2 mean_r − 1) when converged, else 0 (zero speed)
};

SpeedEstimate speed(const EnvironmentModel& model, std::int64_t truncation_depth, std::int64_t replicas,
                    std::uint64_t seed);

struct RMomentEstimate {
    double beta = 0.0;
    std::int64_t truncation_depth = 0;
    std::int64_t replicas = 0;
    double estimate = 0.0;
    double tail_diagnostic = 0.0;  // mean of R_depth^β − R_{0.9 depth}^β
    bool divergence_warning = false;  // β ≥ κ: moment is infinite
};

RMomentEstimate r_moment(const EnvironmentModel& model, double beta, std::int64_t truncation_depth,
                         std::int64_t replicas, std::uint64_t seed);

/// (1/n) Σ_{i=0}^{n-1} log ρ_i for one realization.
double empirical_log_rho_mean(const Environment& env, std::int64_t n);

struct SpectrumReport {
    std::vector<std::pair<double, double>> lambda_grid;  // (λ, Λ(λ))
    double kappa_root = 0.0;
    bool kappa_boundary = false;
    double kappa_via_rate = 0.0;
    std::vector<std::pair<double, double>> rate_grid;  // (x, J(x)), finite part only
    double mean_log_rho = 0.0;
    double lambda1_probe = 0.0;        // grid λ closest to κ/2
    double lambda1_probe_value = 0.0;  // Λ there; negative for admissible models
    SpeedEstimate speed;
};

struct SpectrumOptions {
    double lambda_min = 0.0;
    double lambda_max = 2.0;
    double lambda_step = 0.05;
    int rate_points = 201;
    std::int64_t speed_depth = 10000;
    std::int64_t speed_replicas = 200;
    std::uint64_t seed = 0;
};

SpectrumReport spectrum_report(const EnvironmentModel& model, const SpectrumOptions& options);

nlohmann::json to_json(const SpectrumReport& report);
std::string lambda_grid_csv(const SpectrumReport& report);
std::string rate_grid_csv(const SpectrumReport& report);

}  // namespace rwre
