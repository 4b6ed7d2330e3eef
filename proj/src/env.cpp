#include "rwre/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numeric>
#include <queue>
#include <sstream>

#include <Eigen/Dense>

#include "rwre/random.hpp"
#include "rwre/spectrum.hpp"

namespace rwre {

namespace {

void check_omega(double omega) {
    if (!std::isfinite(omega) || !(omega > 0.0 && omega < 1.0)) {
        std::ostringstream msg;
        msg << "omega value " << omega << " must lie strictly inside (0,1)";
        throw ModelError(msg.str());
    }
}

void check_probability_vector(std::span<const double> p, const char* what) {
    if (p.empty()) throw ModelError(std::string(what) + " is empty");
    double total = 0.0;
    for (double w : p) {
        if (!std::isfinite(w) || w < 0.0) throw ModelError(std::string(what) + " has a negative or non-finite entry");
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg << what << " sums to " << total << ", not 1";
        throw ModelError(msg.str());
    }
}

// Breadth-first levels from state 0; the chain is irreducible when every state
// reaches 0 and is reached from it. The period is the gcd of level[u] + 1 − level[v]
// over edges u → v.
struct ChainShape {
    bool irreducible = false;
    std::int64_t period = 0;
};

ChainShape chain_shape(std::span<const double> transition, std::size_t n) {
    auto reach = [&](bool reverse) {
        std::vector<std::int64_t> level(n, -1);
        std::queue<std::size_t> frontier;
        level[0] = 0;
        frontier.push(0);
        while (!frontier.empty()) {
            const std::size_t u = frontier.front();
            frontier.pop();
            for (std::size_t v = 0; v < n; ++v) {
                const double p = reverse ? transition[v * n + u] : transition[u * n + v];
                if (p > 0.0 && level[v] < 0) {
                    level[v] = level[u] + 1;
                    frontier.push(v);
                }
            }
        }
        return level;
    };

    ChainShape shape;
    const auto forward = reach(false);
    const auto backward = reach(true);
    shape.irreducible = std::all_of(forward.begin(), forward.end(), [](auto l) { return l >= 0; }) &&
                        std::all_of(backward.begin(), backward.end(), [](auto l) { return l >= 0; });
    if (!shape.irreducible) return shape;

    std::int64_t g = 0;
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = 0; v < n; ++v) {
            if (transition[u * n + v] > 0.0) g = std::gcd(g, std::abs(forward[u] + 1 - forward[v]));
        }
    }
    shape.period = g;
    return shape;
}

// CDF rows used for inverse-transform sampling. Entries from the last
// positive-probability state onward are pushed above 1 so rounding in the
// running sum can never select a zero-probability state.
std::vector<double> cdf_rows(std::span<const double> probs, std::size_t row_len) {
    std::vector<double> cdf(probs.size());
    for (std::size_t r = 0; r * row_len < probs.size(); ++r) {
        const auto row = probs.subspan(r * row_len, row_len);
        std::size_t last_positive = 0;
        double acc = 0.0;
        for (std::size_t k = 0; k < row_len; ++k) {
            acc += row[k];
            cdf[r * row_len + k] = acc;
            if (row[k] > 0.0) last_positive = k;
        }
        for (std::size_t k = last_positive; k < row_len; ++k) cdf[r * row_len + k] = 2.0;
    }
    return cdf;
}

std::size_t sample_row(const double* cdf, std::size_t row_len, double u) {
    std::size_t k = 0;
    while (k + 1 < row_len && u >= cdf[k]) ++k;
    return k;
}

void apply_gate(const EnvironmentModel& model, Admissibility gate) {
    if (gate == Admissibility::enforce) check_admissible(model);
}

}  // namespace

EnvironmentModel make_iid_two_point(double omega_hi, double omega_lo, double q, std::uint64_t master_seed,
                                    Admissibility gate) {
    check_omega(omega_hi);
    check_omega(omega_lo);
    if (!std::isfinite(q) || !(q > 0.0 && q < 1.0)) throw ModelError("two-point mixing probability q must lie in (0,1)");

    EnvironmentModel model;
    model.kind = ModelKind::iid_two_point;
    model.support = {omega_hi, omega_lo};
    model.weights = {1.0 - q, q};
    model.master_seed = master_seed;
    apply_gate(model, gate);
    return model;
}

EnvironmentModel make_iid_discrete(std::vector<double> support, std::vector<double> weights,
                                   std::uint64_t master_seed, Admissibility gate) {
    if (support.size() != weights.size()) throw ModelError("support and weights differ in length");
    for (double w : support) check_omega(w);
    check_probability_vector(weights, "weights");

    EnvironmentModel model;
    model.kind = ModelKind::iid_discrete;
    model.support = std::move(support);
    model.weights = std::move(weights);
    model.master_seed = master_seed;
    apply_gate(model, gate);
    return model;
}

EnvironmentModel make_markov_finite(std::vector<double> omega_states,
                                    const std::vector<std::vector<double>>& transition,
                                    std::uint64_t master_seed, Admissibility gate) {
    const std::size_t n = omega_states.size();
    if (n == 0) throw ModelError("Markov model needs at least one state");
    for (double w : omega_states) check_omega(w);
    if (transition.size() != n) throw ModelError("transition matrix must be square with one row per state");

    std::vector<double> flat;
    flat.reserve(n * n);
    for (const auto& row : transition) {
        if (row.size() != n) throw ModelError("transition matrix must be square with one row per state");
        check_probability_vector(row, "transition row");
        flat.insert(flat.end(), row.begin(), row.end());
    }

    const auto shape = chain_shape(flat, n);
    if (!shape.irreducible) throw ModelError("transition matrix is reducible");
    if (shape.period != 1) throw ModelError("transition matrix is periodic (period " + std::to_string(shape.period) + ")");

    EnvironmentModel model;
    model.kind = ModelKind::markov_finite;
    model.support = std::move(omega_states);
    model.transition = std::move(flat);
    model.stationary = stationary_distribution(model.transition, n);
    model.master_seed = master_seed;
    apply_gate(model, gate);
    return model;
}

EnvironmentModel make_constant(double omega, std::uint64_t master_seed) {
    return make_iid_discrete({omega}, {1.0}, master_seed, Admissibility::bypass);
}

std::vector<double> stationary_distribution(std::span<const double> transition, std::size_t states) {
    const auto n = static_cast<Eigen::Index>(states);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> p(transition.data(), n, n);

    // Solve (P^T − I) π = 0 with the last equation replaced by Σ π = 1.
    Eigen::MatrixXd a = p.transpose() - Eigen::MatrixXd::Identity(n, n);
    a.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    const Eigen::VectorXd pi = a.fullPivLu().solve(b);

    const Eigen::VectorXd residual = (pi.transpose() * p).transpose() - pi;
    if (residual.cwiseAbs().maxCoeff() > 1e-10) throw ModelError("stationary distribution solve did not converge");
    if ((pi.array() <= 0.0).any()) throw ModelError("stationary distribution has a non-positive entry");
    return {pi.data(), pi.data() + n};
}

std::vector<double> reversed_kernel(const EnvironmentModel& model) {
    const std::size_t n = model.states();
    std::vector<double> rev(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            rev[i * n + j] = model.stationary[j] * model.transition_at(j, i) / model.stationary[i];
        }
    }
    return rev;
}

void check_admissible(const EnvironmentModel& model) {
    std::ostringstream msg;
    const double drift = mean_log_rho(model);
    if (!(drift < -kSignTolerance)) {
        msg << "not transient to the right: E log rho = " << drift << " is not < 0";
        throw ModelError(msg.str());
    }
    const double at_one = lambda_fn(model, 1.0);
    if (at_one < -kSignTolerance) {
        msg << "ballistic regime: Lambda(1) = " << at_one << " < 0, so E R < infinity and the speed is positive";
        throw ModelError(msg.str());
    }
    // E log rho < 0 forces Λ < 0 just right of 0; probe near κ/2 as the λ₁ witness.
    const double kappa = kappa_root(model).value;
    const double probe = lambda_fn(model, 0.5 * kappa);
    if (!(probe < 0.0)) {
        msg << "no lambda_1 > 0 with Lambda(lambda_1) < 0 (Lambda(" << 0.5 * kappa << ") = " << probe << ")";
        throw ModelError(msg.str());
    }
}

std::string kind_name(ModelKind kind) {
    switch (kind) {
        case ModelKind::iid_two_point: return "iid_two_point";
        case ModelKind::iid_discrete: return "iid_discrete";
        case ModelKind::markov_finite: return "markov_finite";
    }
    return "unknown";
}

EnvironmentModel model_from_json(const nlohmann::json& j) {
    try {
        std::string kind = j.at("kind").get<std::string>();
        std::transform(kind.begin(), kind.end(), kind.begin(), [](unsigned char c) { return std::tolower(c); });
        const auto states = j.at("omega_states").get<std::vector<double>>();
        const auto seed = j.value("seed", std::uint64_t{0});
        const auto gate = j.value("check_admissibility", true) ? Admissibility::enforce : Admissibility::bypass;

        if (kind == "iid_two_point") {
            const auto w = j.at("weights").get<std::vector<double>>();
            if (states.size() != 2 || w.size() != 2) throw ModelError("iid_two_point needs exactly two states and weights");
            check_probability_vector(w, "weights");
            return make_iid_two_point(states[0], states[1], w[1], seed, gate);
        }
        if (kind == "iid_discrete") {
            return make_iid_discrete(states, j.at("weights").get<std::vector<double>>(), seed, gate);
        }
        if (kind == "markov_finite") {
            return make_markov_finite(states, j.at("transition").get<std::vector<std::vector<double>>>(), seed, gate);
        }
        throw ModelError("unknown model kind '" + kind + "'");
    } catch (const nlohmann::json::exception& e) {
        throw ModelError(std::string("malformed model specification: ") + e.what());
    }
}

nlohmann::json model_to_json(const EnvironmentModel& model) {
    nlohmann::json j;
    j["kind"] = kind_name(model.kind);
    j["omega_states"] = model.support;
    if (model.is_markov()) {
        const std::size_t n = model.states();
        std::vector<std::vector<double>> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i].assign(model.transition.begin() + i * n, model.transition.begin() + (i + 1) * n);
        j["transition"] = rows;
    } else {
        j["weights"] = model.weights;
    }
    j["seed"] = model.master_seed;
    return j;
}

std::string model_id(const EnvironmentModel& model) {
    const auto h = tag_hash(model_to_json(model).dump());
    char buf[24];
    std::snprintf(buf, sizeof buf, "%08llx", static_cast<unsigned long long>(h >> 32));
    return kind_name(model.kind) + "-" + buf;
}

// ---------------------------------------------------------------------------
// Realizations

// Sites are materialized outward from 0: ω_0 ~ π, then the forward kernel to
// the right and the reversed kernel to the left. Each site's draw is keyed by
// its own index, so the sequence does not depend on query order.
struct Environment::MarkovCache {
    std::mutex mutex;
    std::vector<std::uint32_t> right;  // sites 0, 1, 2, ...
    std::vector<std::uint32_t> left;   // sites -1, -2, ...
    std::vector<double> forward_cdf;
    std::vector<double> reverse_cdf;
    std::vector<double> stationary_cdf;

    void extend_right(std::int64_t site, std::uint64_t key, std::size_t n) {
        while (static_cast<std::int64_t>(right.size()) <= site) {
            const auto i = static_cast<std::int64_t>(right.size());
            const double u = keyed_uniform(key, i);
            if (right.empty()) {
                right.push_back(static_cast<std::uint32_t>(sample_row(stationary_cdf.data(), n, u)));
            } else {
                right.push_back(static_cast<std::uint32_t>(sample_row(&forward_cdf[right.back() * n], n, u)));
            }
        }
    }

    void extend_left(std::int64_t site, std::uint64_t key, std::size_t n) {
        extend_right(0, key, n);
        while (-static_cast<std::int64_t>(left.size()) - 1 >= site) {
            const std::int64_t i = -static_cast<std::int64_t>(left.size()) - 1;
            const std::uint32_t prev = left.empty() ? right.front() : left.back();
            left.push_back(static_cast<std::uint32_t>(sample_row(&reverse_cdf[prev * n], n, keyed_uniform(key, i))));
        }
    }

    std::size_t at(std::int64_t site) const {
        return site >= 0 ? right[static_cast<std::size_t>(site)] : left[static_cast<std::size_t>(-site - 1)];
    }
};

Environment::Environment(EnvironmentModel model) : Environment(model, model.master_seed) {}

Environment::Environment(EnvironmentModel model, std::uint64_t seed)
    : model_(std::move(model)), seed_(seed), site_key_(derive_key(seed, "env-site")) {
    if (model_.is_markov()) {
        cache_ = std::make_unique<MarkovCache>();
        const std::size_t n = model_.states();
        cache_->forward_cdf = cdf_rows(model_.transition, n);
        cache_->reverse_cdf = cdf_rows(reversed_kernel(model_), n);
        cache_->stationary_cdf = cdf_rows(model_.stationary, n);
    } else {
        cumulative_ = cdf_rows(model_.weights, model_.states());
    }
}

Environment::~Environment() = default;
Environment::Environment(Environment&&) noexcept = default;
Environment& Environment::operator=(Environment&&) noexcept = default;

std::size_t Environment::iid_state(std::int64_t site) const {
    return sample_row(cumulative_.data(), cumulative_.size(), keyed_uniform(site_key_, site));
}

std::size_t Environment::state_at(std::int64_t site) const {
    if (!cache_) return iid_state(site);
    std::lock_guard lock(cache_->mutex);
    if (site >= 0) {
        cache_->extend_right(site, site_key_, model_.states());
    } else {
        cache_->extend_left(site, site_key_, model_.states());
    }
    return cache_->at(site);
}

void Environment::fill_omega(std::int64_t first, std::span<double> out) const {
    if (out.empty()) return;
    const std::int64_t last = first + static_cast<std::int64_t>(out.size()) - 1;
    if (!cache_) {
        for (std::size_t k = 0; k < out.size(); ++k) {
            out[k] = model_.support[iid_state(first + static_cast<std::int64_t>(k))];
        }
        return;
    }
    std::lock_guard lock(cache_->mutex);
    const std::size_t n = model_.states();
    if (last >= 0) cache_->extend_right(last, site_key_, n);
    if (first < 0) cache_->extend_left(first, site_key_, n);
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = model_.support[cache_->at(first + static_cast<std::int64_t>(k))];
    }
}

}  // namespace rwre
