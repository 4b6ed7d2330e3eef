#pragma once

// Stationary environments on the integers.
//
// An EnvironmentModel is a generative description (i.i.d. over a finite
// support, or a finite-state Markov chain). An Environment is one realization
// of it: a lazily extended two-sided sequence of right-step probabilities,
// where the value at every site is a pure function of (model, seed, site).

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace rwre {

enum class ModelKind { iid_two_point, iid_discrete, markov_finite };

/// Whether a constructor enforces the transient zero-speed regime. Bypass is for
/// ballistic or degenerate sanity models.
enum class Admissibility { enforce, bypass };

class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Tolerance used by the admissibility gate for the signs of E log rho and
// Lambda(1). ρ computed from ω in floating point is off by an ulp or two, so a
// symmetric model would otherwise land on either side of zero.
inline constexpr double kSignTolerance = 1e-12;

inline double rho_of(double omega) noexcept { return (1.0 - omega) / omega; }

struct EnvironmentModel {
    ModelKind kind = ModelKind::iid_discrete;
    std::vector<double> support;     // ω-values, one per state
    std::vector<double> weights;     // IID kinds: probability of each state
    std::vector<double> transition;  // MARKOV_FINITE: row-major states x states
    std::vector<double> stationary;  // MARKOV_FINITE: π with πP = π
    std::uint64_t master_seed = 0;

    std::size_t states() const noexcept { return support.size(); }
    bool is_markov() const noexcept { return kind == ModelKind::markov_finite; }
    double transition_at(std::size_t from, std::size_t to) const { return transition[from * states() + to]; }
    double rho(std::size_t state) const { return rho_of(support[state]); }

    /// Marginal law of a single site: weights (IID) or stationary distribution.
    std::span<const double> marginal() const noexcept { return is_markov() ? stationary : weights; }

    friend bool operator==(const EnvironmentModel&, const EnvironmentModel&) = default;
};

EnvironmentModel make_iid_two_point(double omega_hi, double omega_lo, double q, std::uint64_t master_seed,
                                    Admissibility gate = Admissibility::enforce);

EnvironmentModel make_iid_discrete(std::vector<double> support, std::vector<double> weights,
                                   std::uint64_t master_seed, Admissibility gate = Admissibility::enforce);

EnvironmentModel make_markov_finite(std::vector<double> omega_states,
                                    const std::vector<std::vector<double>>& transition,
                                    std::uint64_t master_seed, Admissibility gate = Admissibility::enforce);

/// Point-mass environment ω_i ≡ omega. Never admissible; used for ballistic checks.
EnvironmentModel make_constant(double omega, std::uint64_t master_seed);

/// Throws ModelError naming the failed condition when the model is outside the
/// transient zero-speed regime.
void check_admissible(const EnvironmentModel& model);

/// Stationary distribution of an irreducible stochastic matrix (row-major).
std::vector<double> stationary_distribution(std::span<const double> transition, std::size_t states);

/// Time-reversed kernel P̂_ij = π_j P_ji / π_i, row-major.
std::vector<double> reversed_kernel(const EnvironmentModel& model);

/// JSON form: {"kind", "omega_states", "weights" | "transition", "seed",
/// optional "check_admissibility"}.
EnvironmentModel model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const EnvironmentModel& model);
std::string kind_name(ModelKind kind);

/// Short stable identifier: kind plus a hash of the canonical JSON form.
std::string model_id(const EnvironmentModel& model);

class Environment {
public:
    /// Realization keyed by the model's master seed.
    explicit Environment(EnvironmentModel model);
    Environment(EnvironmentModel model, std::uint64_t seed);
    ~Environment();
    Environment(Environment&&) noexcept;
    Environment& operator=(Environment&&) noexcept;
    Environment(const Environment&) = delete;
    Environment& operator=(const Environment&) = delete;

    const EnvironmentModel& model() const noexcept { return model_; }
    std::uint64_t seed() const noexcept { return seed_; }

    std::size_t state_at(std::int64_t site) const;
    double omega_at(std::int64_t site) const { return model_.support[state_at(site)]; }
    double rho_at(std::int64_t site) const { return rho_of(omega_at(site)); }

    /// ω for sites first, first+1, ..., first+out.size()-1.
    void fill_omega(std::int64_t first, std::span<double> out) const;

private:
    std::size_t iid_state(std::int64_t site) const;

    struct MarkovCache;
    EnvironmentModel model_;
    std::uint64_t seed_;
    std::uint64_t site_key_;
    std::vector<double> cumulative_;  // IID marginal CDF
    std::unique_ptr<MarkovCache> cache_;
};

}  // namespace rwre
