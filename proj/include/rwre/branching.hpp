#pragma once

// Branching process with one immigrant per generation and the generating
// functions attached to it.
//
// Given the environment, Z_{k+1} is the number of failures before Z_k + 1
// successes with success probability ω_{-k}: each of the Z_k + 1 particles has
// a geometric number of children P(V = j) = ω(1 − ω)^j. The path therefore
// reads sites 0, −1, …, −(n−1).
//
// The generating-function layer works on a ρ-prefix ρ_0, …, ρ_{n−1}:
//   f(ρ, x)      = 1/(1 + ρ(1 − x))                pgf of one offspring count
//   φ_n(s)       = nested product of f over the prefix
//   B_n(s)       = 1/φ_n(s), with B_0 = 1, B_1 = 1 + ρ_0(1 − s) and
//                  B_{k+1} = (1 + ρ_k) B_k − s ρ_k B_{k−1}
//   q_k(s)       = B_k/B_{k+1} ∈ (0, 1], q_k = f(ρ_k, s q_{k−1}), q_{−1} = 1
// Large n goes through log B_n = −Σ log q_k, which cannot overflow.

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "rwre/env.hpp"
#include "rwre/random.hpp"

namespace rwre {

inline constexpr std::int64_t kDefaultPopulationBound = std::int64_t{1} << 62;

struct BranchingPath {
    std::vector<std::int64_t> z;             // Z_0 .. Z_n, Z_0 = 0
    std::vector<std::int64_t> partial_sums;  // S_k = Σ_{i=1}^k Z_i, S_0 = 0
    bool overflow = false;                   // population bound hit; path truncated

    std::int64_t generations() const { return static_cast<std::int64_t>(z.size()) - 1; }
};

/// Exact offspring sampler: failures before `trials` successes at probability omega.
class NegativeBinomialOffspring {
public:
    explicit NegativeBinomialOffspring(std::uint64_t key) : engine_(key) {}

    std::int64_t operator()(std::int64_t trials, double omega) {
        if (trials == 1) return std::geometric_distribution<std::int64_t>(omega)(engine_);
        return std::negative_binomial_distribution<std::int64_t>(trials, omega)(engine_);
    }

private:
    Xoshiro256 engine_;
};

/// `draw(trials, omega)` returns the total offspring of `trials` particles.
template <class Offspring>
BranchingPath simulate_z_with(const Environment& env, std::int64_t n, Offspring&& draw,
                              std::int64_t population_bound = kDefaultPopulationBound) {
    if (n < 1) throw std::invalid_argument("simulate_z needs n >= 1");
    std::vector<double> omega(static_cast<std::size_t>(n));
    env.fill_omega(-(n - 1), omega);  // omega[n-1] is site 0

    BranchingPath path;
    path.z.reserve(static_cast<std::size_t>(n) + 1);
    path.partial_sums.reserve(static_cast<std::size_t>(n) + 1);
    path.z.push_back(0);
    path.partial_sums.push_back(0);
    for (std::int64_t k = 0; k < n; ++k) {
        const std::int64_t trials = path.z.back() + 1;
        if (trials > population_bound) {
            path.overflow = true;
            break;
        }
        const std::int64_t next = draw(trials, omega[static_cast<std::size_t>(n - 1 - k)]);
        if (next > population_bound || path.partial_sums.back() > population_bound - next) {
            path.overflow = true;
            break;
        }
        path.z.push_back(next);
        path.partial_sums.push_back(path.partial_sums.back() + next);
    }
    return path;
}

BranchingPath simulate_z(const Environment& env, std::int64_t n, std::uint64_t seed,
                         std::int64_t population_bound = kDefaultPopulationBound);

struct MeanProfile {
    std::vector<double> h;  // m_1 .. m_n, m_k = E_ω Z_k
};

/// m_{k+1} = ρ_{−k}(m_k + 1), m_0 = 0. In law m_k equals ρ_{k−1} + ρ_{k−1}ρ_{k−2} + … + ρ_{k−1}⋯ρ_0
/// by stationarity (forward indices reflected onto the negative half-line).
MeanProfile quenched_mean_profile(const Environment& env, std::int64_t n);

inline double f_step(double rho, double x) { return 1.0 / (1.0 + rho * (1.0 - x)); }

/// ρ_0, …, ρ_{n−1}.
std::vector<double> forward_rhos(const Environment& env, std::int64_t n);

/// ρ_{−(n−1)}, …, ρ_{−1}, ρ_0: the prefix whose φ_n is the quenched E_ω s^{Z_1+…+Z_n}.
std::vector<double> reflected_rhos(const Environment& env, std::int64_t n);

/// φ_n(s) by literal nested composition of every factor (O(n²)). May underflow to
/// 0 for large n and s < 1.
double phi_product(std::span<const double> rho_prefix, double s);
double phi_product(const Environment& env, std::int64_t n, double s);

struct GenFnState {
    double s = 0.0;
    std::vector<double> ratios;  // q_0 .. q_{n−1}
    double log_b = 0.0;          // −Σ log q_k
};

/// Runs the ratio recursion, checking every q_k ∈ (0, 1].
GenFnState genfn_state(std::span<const double> rho_prefix, double s);
double log_b(std::span<const double> rho_prefix, double s);
double log_b(const Environment& env, std::int64_t n, double s);

struct BPair {
    double recursion = 0.0;  // three-term recursion
    double summed = 0.0;     // B_{k+1} = B_k + (1−s) Σ_{i≤k} B_{i−1} ∏_{j=i}^k ρ_j
};

inline constexpr std::int64_t kDirectBLimit = 500;

/// B_n(s) by both direct forms; n ≤ 500.
BPair b_direct(std::span<const double> rho_prefix, std::int64_t n, double s);
double b_recursion(std::span<const double> rho_prefix, std::int64_t n, double s);
double b_summed(std::span<const double> rho_prefix, std::int64_t n, double s);

struct PsiEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
};

/// Monte Carlo E_ω s^{Z_1+…+Z_n} at the fixed environment.
PsiEstimate psi_mc(const Environment& env, std::int64_t n, double s, std::int64_t replicas, std::uint64_t seed);

}  // namespace rwre
