#include "rwre/branching.hpp"

#include <cmath>
#include <sstream>

#include "rwre/stats.hpp"

namespace rwre {

namespace {

void check_s(double s) {
    if (!(s >= 0.0 && s <= 1.0)) throw std::invalid_argument("generating-function argument s must lie in [0,1]");
}

void check_prefix(std::span<const double> rho, std::int64_t n) {
    if (n < 0 || static_cast<std::int64_t>(rho.size()) < n) throw std::invalid_argument("rho prefix shorter than n");
}

}  // namespace

BranchingPath simulate_z(const Environment& env, std::int64_t n, std::uint64_t seed, std::int64_t population_bound) {
    return simulate_z_with(env, n, NegativeBinomialOffspring(derive_key(seed, "branching")), population_bound);
}

MeanProfile quenched_mean_profile(const Environment& env, std::int64_t n) {
    if (n < 1) throw std::invalid_argument("quenched_mean_profile needs n >= 1");
    MeanProfile out;
    out.h.reserve(static_cast<std::size_t>(n));
    double m = 0.0;
    for (std::int64_t k = 0; k < n; ++k) {
        m = env.rho_at(-k) * (m + 1.0);
        out.h.push_back(m);
    }
    return out;
}

std::vector<double> forward_rhos(const Environment& env, std::int64_t n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    env.fill_omega(0, out);
    for (auto& v : out) v = rho_of(v);
    return out;
}

std::vector<double> reflected_rhos(const Environment& env, std::int64_t n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    env.fill_omega(-(n - 1), out);
    for (auto& v : out) v = rho_of(v);
    return out;
}

double phi_product(std::span<const double> rho_prefix, double s) {
    check_s(s);
    double product = 1.0;
    for (std::size_t j = 0; j < rho_prefix.size(); ++j) {
        // factor j: f_{−j}(s f_{−j+1}(… s f_0(s)))
        double inner = f_step(rho_prefix[0], s);
        for (std::size_t k = 1; k <= j; ++k) inner = f_step(rho_prefix[k], s * inner);
        product *= inner;
    }
    return product;
}

double phi_product(const Environment& env, std::int64_t n, double s) {
    if (n < 1) throw std::invalid_argument("phi_product needs n >= 1");
    return phi_product(forward_rhos(env, n), s);
}

GenFnState genfn_state(std::span<const double> rho_prefix, double s) {
    check_s(s);
    GenFnState state;
    state.s = s;
    state.ratios.reserve(rho_prefix.size());
    double q = 1.0;  // B_{−1}/B_0
    stats::KahanSum acc;
    for (double rho : rho_prefix) {
        q = f_step(rho, s * q);
        if (!(q > 0.0 && q <= 1.0)) {
            std::ostringstream msg;
            msg << "generating-function ratio q_" << state.ratios.size() << " = " << q << " left (0,1]";
            throw std::logic_error(msg.str());
        }
        state.ratios.push_back(q);
        acc.add(-std::log(q));
    }
    state.log_b = acc.value();
    return state;
}

double log_b(std::span<const double> rho_prefix, double s) { return genfn_state(rho_prefix, s).log_b; }

double log_b(const Environment& env, std::int64_t n, double s) {
    if (n < 0) throw std::invalid_argument("log_b needs n >= 0");
    if (n == 0) return 0.0;
    return log_b(forward_rhos(env, n), s);
}

double b_recursion(std::span<const double> rho_prefix, std::int64_t n, double s) {
    check_s(s);
    check_prefix(rho_prefix, n);
    if (n > kDirectBLimit) throw std::overflow_error("direct B_n evaluation is limited to n <= 500");
    if (n == 0) return 1.0;
    double prev = 1.0;                                 // B_0
    double cur = 1.0 + rho_prefix[0] * (1.0 - s);      // B_1
    for (std::int64_t k = 1; k < n; ++k) {
        const double rho = rho_prefix[static_cast<std::size_t>(k)];
        const double next = cur + rho * (cur - s * prev);
        prev = cur;
        cur = next;
    }
    return cur;
}

double b_summed(std::span<const double> rho_prefix, std::int64_t n, double s) {
    check_s(s);
    check_prefix(rho_prefix, n);
    if (n > kDirectBLimit) throw std::overflow_error("direct B_n evaluation is limited to n <= 500");
    // b[k + 1] holds B_k, with b[0] = B_{−1} = 1.
    std::vector<double> b(static_cast<std::size_t>(n) + 2, 1.0);
    for (std::int64_t k = 0; k < n; ++k) {
        double acc = 0.0;
        double prod = 1.0;
        for (std::int64_t i = k; i >= 0; --i) {
            prod *= rho_prefix[static_cast<std::size_t>(i)];
            acc += b[static_cast<std::size_t>(i)] * prod;  // B_{i−1} ∏_{j=i}^k ρ_j
        }
        b[static_cast<std::size_t>(k) + 2] = b[static_cast<std::size_t>(k) + 1] + (1.0 - s) * acc;
    }
    return b[static_cast<std::size_t>(n) + 1];
}

BPair b_direct(std::span<const double> rho_prefix, std::int64_t n, double s) {
    return {b_recursion(rho_prefix, n, s), b_summed(rho_prefix, n, s)};
}

PsiEstimate psi_mc(const Environment& env, std::int64_t n, double s, std::int64_t replicas, std::uint64_t seed) {
    check_s(s);
    if (n < 1 || replicas < 1) throw std::invalid_argument("psi_mc needs n >= 1 and replicas >= 1");
    if (s == 1.0) return {1.0, 0.0};

    std::vector<double> omega(static_cast<std::size_t>(n));
    env.fill_omega(-(n - 1), omega);
    const double log_s = std::log(s);

    std::vector<double> samples(static_cast<std::size_t>(replicas));
    for (std::int64_t r = 0; r < replicas; ++r) {
        NegativeBinomialOffspring draw(derive_key(seed, "psi", r));
        std::int64_t z = 0;
        std::int64_t total = 0;
        for (std::int64_t k = 0; k < n; ++k) {
            z = draw(z + 1, omega[static_cast<std::size_t>(n - 1 - k)]);
            total += z;
        }
        samples[static_cast<std::size_t>(r)] = total == 0 ? 1.0 : (s == 0.0 ? 0.0 : std::exp(static_cast<double>(total) * log_s));
    }
    PsiEstimate out;
    out.mean = stats::mean(samples);
    out.standard_error = replicas > 1 ? std::sqrt(stats::variance(samples) / static_cast<double>(replicas)) : 0.0;
    return out;
}

}  // namespace rwre
