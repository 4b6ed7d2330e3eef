// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "rwre/branching.hpp"
#include "rwre/env.hpp"
#include "rwre/harness.hpp"
#include "rwre/parallel.hpp"
#include "rwre/spectrum.hpp"
#include "rwre/stats.hpp"
#include "rwre/walk.hpp"

using namespace rwre;
using namespace rwre::harness;

namespace {

constexpr double kTwoThirds = 2.0 / 3.0;
constexpr double kOneThird = 1.0 / 3.0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

unsigned worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

EnvironmentModel two_point() { return make_iid_two_point(kTwoThirds, kOneThird, 0.4, 2024); }

EnvironmentModel markov() { return make_markov_finite({kOneThird, kTwoThirds}, {{0.5, 0.5}, {0.2, 0.8}}, 2025); }

// Larger root of q x² − x + (1 − q) = 0 gives 2^κ.
double closed_form_kappa(double q) { return std::log2((1.0 + std::sqrt(1.0 - 4.0 * q * (1.0 - q))) / (2.0 * q)); }

ExperimentConfig scaling(ExperimentKind kind, EnvironmentModel model, std::vector<std::int64_t> sizes,
                         std::int64_t replicas, std::uint64_t seed) {
    ExperimentConfig c;
    c.kind = kind;
    c.model = std::move(model);
    c.sizes = std::move(sizes);
    c.replicas = replicas;
    c.master_seed = seed;
    c.threads = worker_count();
    return c;
}

Outcome exponent_closed_form() {
    const auto start = std::chrono::steady_clock::now();
    const auto m = two_point();
    const double root = kappa_root(m).value;
    const auto via = kappa_via_rate(m);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double exact = closed_form_kappa(0.4);
    const double root_err = std::abs(root - exact);
    const double via_err = via.value ? std::abs(*via.value - root) : INFINITY;
    return {root_err <= 1e-10 && via_err <= 1e-4 && seconds < 1.0,
            fmt("kappa_root=%.12f |err|=%.2e, via_rate |gap|=%.2e, %.3fs", root, root_err, via_err, seconds)};
}

Outcome sign_property() {
    const auto start = std::chrono::steady_clock::now();
    int checked = 0;
    int violations = 0;
    for (const auto& m : {two_point(), markov()}) {
        const double kappa = kappa_root(m).value;
        for (int i = 1; i <= 40; ++i) {
            const double lam = 0.05 * i;
            if (std::abs(lam - kappa) <= 1e-6) continue;
            const double value = lambda_fn(m, lam);
            ++checked;
            if (value == 0.0 || (value > 0.0) != (lam > kappa)) ++violations;
        }
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {violations == 0 && seconds < 1.0, fmt("%d grid points, %d violations, %.3fs", checked, violations, seconds)};
}

Outcome hitting_identity() {
    const auto start = std::chrono::steady_clock::now();
    const std::int64_t per_model = 5000;
    std::int64_t finite = 0;
    std::int64_t failures = 0;
    std::int64_t capped = 0;
    for (const auto& m : {two_point(), markov()}) {
        const double kappa = kappa_root(m).value;
        std::int64_t got = 0;
        for (std::int64_t r = 0; got < per_model; ++r) {
            const std::uint64_t key = derive_key(m.master_seed, "identity", r);
            const Environment env(m, derive_key(key, "env"));
            const std::int64_t target = 1 + static_cast<std::int64_t>(derive_key(key, "target") % 128);
            const auto rec = hitting_time(env, target, default_step_cap(target, kappa), derive_key(key, "walk"));
            if (rec.capped) {
                ++capped;
                continue;
            }
            ++got;
            if (!verify_identity(rec)) ++failures;
        }
        finite += got;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {failures == 0 && finite == 10000 && seconds < 60.0,
            fmt("%lld finite records, %lld identity failures, %lld capped skipped, %.1fs", static_cast<long long>(finite),
                static_cast<long long>(failures), static_cast<long long>(capped), seconds)};
}

Outcome lemma_audit() {
    const auto start = std::chrono::steady_clock::now();
    AuditOptions opt;
    opt.cases = 1000;
    opt.max_n = 100;
    opt.seed = 11;
    const auto report = run_genfn_audit(two_point(), opt);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::int64_t failures = 0;
    for (const auto& c : report.checks) failures += c.failures;
    return {report.passed() && seconds < 60.0,
            fmt("%lld cases, %lld failures, worst |phi*B-1|=%.2e, worst rec/sum gap=%.2e, %.1fs",
                static_cast<long long>(opt.cases), static_cast<long long>(failures), report.checks[0].worst_error,
                report.checks[2].worst_error, seconds)};
}

Outcome ballistic_sanity() {
    const auto start = std::chrono::steady_clock::now();
    const auto m = make_constant(kTwoThirds, 7);
    const auto v = speed(m, 1000, 10, 7);
    const std::int64_t n = 1000000;
    std::vector<double> ratio(200);
    const Environment env(m);
    parallel_for(ratio.size(), worker_count(), [&](std::size_t r) {
        ratio[r] = static_cast<double>(run_to_time(env, n, derive_key(7, "ballistic", r)).final_position) / static_cast<double>(n);
    });
    const double med = stats::median(ratio);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {v.converged && std::abs(v.velocity - 1.0 / 3.0) <= 1e-12 && med >= 0.323 && med <= 0.343 && seconds < 60.0,
            fmt("speed=%.15f, median X_n/n=%.5f at n=1e6 over 200 replicas, %.1fs", v.velocity, med, seconds)};
}

Outcome zero_speed_scaling() {
    const auto start = std::chrono::steady_clock::now();
    const auto m = two_point();
    const double kappa = closed_form_kappa(0.4);

    std::vector<std::int64_t> zsizes;
    for (int e = 10; e <= 16; ++e) zsizes.push_back(std::int64_t{1} << e);
    const auto z = run_zsum_exponent(scaling(ExperimentKind::zsum_exponent, m, zsizes, 500, 61));

    std::vector<std::int64_t> targets;
    for (int e = 9; e <= 13; ++e) targets.push_back(std::int64_t{1} << e);
    const auto h = run_hitting_exponent(scaling(ExperimentKind::hitting_exponent, m, targets, 200, 62));

    const auto w = run_walk_exponent(scaling(ExperimentKind::walk_exponent, m, {10000, 100000, 1000000}, 200, 63));
    const double walk_median = w.summary.back().median;

    const bool z_ok = z.fit.slope >= 1.56 && z.fit.slope <= 1.86;
    const bool h_ok = std::abs(h.fit.slope - 1.0 / kappa) <= 0.25;
    const bool w_ok = std::abs(walk_median - kappa) <= 0.15;
    std::int64_t capped = 0;
    for (const auto& s : h.summary) capped += s.flagged;
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {z_ok && h_ok && w_ok,
            fmt("zsum slope=%.4f in [1.56,1.86]; hitting slope=%.4f vs 1/kappa=%.4f +/- 0.25 (%lld capped); "
                "walk median=%.4f vs kappa=%.4f +/- 0.15; %.0fs",
                z.fit.slope, h.fit.slope, 1.0 / kappa, static_cast<long long>(capped), walk_median, kappa, seconds)};
}

Outcome law_equivalence() {
    const Environment env(make_constant(kTwoThirds, 3));
    const int samples = 100000;
    std::string detail;
    bool ok = true;
    for (std::int64_t n : {2, 3}) {
        std::vector<double> u(samples), z(samples);
        parallel_for(static_cast<std::size_t>(samples), worker_count(), [&](std::size_t r) {
            const auto rec = hitting_time(env, n, 100000000, derive_key(3, "walk", n, r));
            u[r] = static_cast<double>(rec.left_moves_between(1, n));
            z[r] = static_cast<double>(simulate_z(env, n - 1, derive_key(3, "branching", n, r)).partial_sums.back());
        });
        const auto ks = stats::ks_two_sample(u, z);
        ok = ok && ks.p_value > 0.01;
        detail += fmt("n=%lld D=%.5f p=%.3f; ", static_cast<long long>(n), ks.statistic, ks.p_value);
    }
    return {ok, detail + "100000 samples each"};
}

Outcome moment_dichotomy() {
    const auto m = two_point();
    const auto a = r_moment(m, 0.3, 1000, 2000, 81);
    const auto b = r_moment(m, 0.3, 10000, 2000, 81);
    const auto c = r_moment(m, 0.9, 1000, 2000, 81);
    const double change = std::abs(b.estimate - a.estimate) / a.estimate;
    return {change < 0.01 && !a.divergence_warning && !b.divergence_warning && c.divergence_warning,
            fmt("beta=0.3: %.6f -> %.6f (change %.3e); beta=0.9 warning=%s", a.estimate, b.estimate, change,
                c.divergence_warning ? "yes" : "no")};
}

Outcome determinism() {
    int compared = 0;
    int mismatches = 0;
    for (auto kind : {ExperimentKind::walk_exponent, ExperimentKind::hitting_exponent, ExperimentKind::zsum_exponent}) {
        for (const auto& m : {two_point(), markov()}) {
            auto c = scaling(kind, m, {64, 128, 256, 512}, 25, 91);
            c.threads = 1;
            const auto serial = to_csv(run_experiment(c));
            for (unsigned threads : {1u, 3u, 8u}) {
                c.threads = threads;
                ++compared;
                if (to_csv(run_experiment(c)) != serial) ++mismatches;
            }
        }
    }
    AuditOptions opt;
    opt.cases = 200;
    ++compared;
    if (to_csv(run_genfn_audit(markov(), opt)) != to_csv(run_genfn_audit(markov(), opt))) ++mismatches;
    SpectrumOptions so;
    so.speed_depth = 500;
    so.speed_replicas = 20;
    ++compared;
    if (lambda_grid_csv(spectrum_report(markov(), so)) + rate_grid_csv(spectrum_report(markov(), so)) !=
        lambda_grid_csv(spectrum_report(markov(), so)) + rate_grid_csv(spectrum_report(markov(), so))) {
        ++mismatches;
    }
    return {mismatches == 0, fmt("%d reruns compared byte-for-byte, %d mismatches", compared, mismatches)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"exponent closed form", exponent_closed_form},
        {"sign property", sign_property},
        {"hitting identity", hitting_identity},
        {"generating-function audit", lemma_audit},
        {"ballistic sanity", ballistic_sanity},
        {"zero-speed scaling", zero_speed_scaling},
        {"walk-branching law equivalence", law_equivalence},
        {"moment dichotomy", moment_dichotomy},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome out;
        try {
            out = criteria[i].second();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        failed += !out.pass;
        std::printf("%s %zu %s: %s\n", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, out.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
