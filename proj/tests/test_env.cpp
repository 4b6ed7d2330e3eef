#include <array>
#include <cmath>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "generators.hpp"
#include "rwre/env.hpp"
#include "rwre/parallel.hpp"
#include "rwre/spectrum.hpp"
#include "rwre/stats.hpp"

using namespace rwre;
using gen::kOneThird;
using gen::kTwoThirds;

namespace {

std::string rejection(auto&& make) {
    try {
        make();
    } catch (const ModelError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("two-point model of the zero-speed regime") {
    const auto m = gen::two_point(0.4);
    CHECK(m.kind == ModelKind::iid_two_point);
    REQUIRE(m.states() == 2);
    CHECK(m.rho(0) == doctest::Approx(0.5));
    CHECK(m.rho(1) == doctest::Approx(2.0));
    CHECK(m.weights[1] == 0.4);
    CHECK(mean_log_rho(m) == doctest::Approx(-0.2 * std::log(2.0)).epsilon(1e-14));
    CHECK(std::exp(lambda_fn(m, 1.0)) == doctest::Approx(1.1).epsilon(1e-14));
}

TEST_CASE("admissibility gate names the failed condition") {
    CHECK(rejection([] { gen::two_point(0.2); }).find("ballistic") != std::string::npos);
    CHECK(rejection([] { make_iid_two_point(0.5, 0.5, 0.5, 1); }).find("not transient") != std::string::npos);
    CHECK(rejection([] { make_iid_two_point(1.0, kOneThird, 0.4, 1); }).find("(0,1)") != std::string::npos);
    CHECK(rejection([] { make_iid_two_point(kTwoThirds, 0.0, 0.4, 1); }).find("(0,1)") != std::string::npos);
    CHECK(rejection([] { make_iid_two_point(kTwoThirds, kOneThird, 1.0, 1); }).find("q") != std::string::npos);
    CHECK(rejection([] { make_iid_discrete({0.3, 0.7}, {0.5, 0.6}, 1); }).find("sums to") != std::string::npos);
    CHECK(rejection([] { make_iid_discrete({0.3, 0.7}, {1.0}, 1); }) != "");
    CHECK_NOTHROW(make_iid_two_point(kTwoThirds, kOneThird, 0.2, 1, Admissibility::bypass));
}

TEST_CASE("Markov constructor: stationary law, reducibility, periodicity") {
    const std::vector<double> sym{0.9, 0.1, 0.1, 0.9};
    const auto pi = stationary_distribution(sym, 2);
    CHECK(pi[0] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(pi[1] == doctest::Approx(0.5).epsilon(1e-14));

    const auto bypass = make_markov_finite({kOneThird, kTwoThirds}, {{0.9, 0.1}, {0.1, 0.9}}, 1, Admissibility::bypass);
    CHECK(bypass.stationary[0] == doctest::Approx(0.5));
    // Symmetric chain: E log rho = 0.
    CHECK(rejection([] { make_markov_finite({kOneThird, kTwoThirds}, {{0.9, 0.1}, {0.1, 0.9}}, 1); })
              .find("not transient") != std::string::npos);
    CHECK(rejection([] { make_markov_finite({kOneThird, kTwoThirds}, {{0.5, 0.5}, {0.5, 0.5}}, 1); })
              .find("not transient") != std::string::npos);
    CHECK(rejection([] {
              make_markov_finite({kOneThird, kTwoThirds}, {{1.0, 0.0}, {0.0, 1.0}}, 1, Admissibility::bypass);
          }).find("reducible") != std::string::npos);
    CHECK(rejection([] {
              make_markov_finite({kOneThird, kTwoThirds}, {{0.0, 1.0}, {1.0, 0.0}}, 1, Admissibility::bypass);
          }).find("periodic") != std::string::npos);
    CHECK(rejection([] { make_markov_finite({kOneThird, kTwoThirds}, {{0.9, 0.2}, {0.1, 0.9}}, 1); }).find("sums to") !=
          std::string::npos);

    const auto m = gen::markov_two_state();
    CHECK(m.stationary[0] == doctest::Approx(2.0 / 7.0).epsilon(1e-12));
    CHECK(m.stationary[1] == doctest::Approx(5.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("property: random admissible models satisfy the model invariants") {
    gen::Source src(101);
    for (int trial = 0; trial < 60; ++trial) {
        const auto m = gen::admissible(src);
        for (double w : m.support) CHECK((w > 0.0 && w < 1.0));
        CHECK(mean_log_rho(m) < 0.0);
        CHECK(lambda_fn(m, 1.0) >= -kSignTolerance);
        if (m.is_markov()) {
            const std::size_t n = m.states();
            for (std::size_t i = 0; i < n; ++i) {
                double row = 0.0;
                double flow = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    row += m.transition_at(i, j);
                    flow += m.stationary[j] * m.transition_at(j, i);
                }
                CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
                CHECK(std::abs(flow - m.stationary[i]) <= 1e-10);
                CHECK(m.stationary[i] > 0.0);
            }
        } else {
            double total = 0.0;
            for (double w : m.weights) total += w;
            CHECK(std::abs(total - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("realizations are pure functions of (model, seed, site)") {
    gen::Source src(7);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = gen::admissible(src);
        const Environment a(m, 99);
        const double at_minus_five = a.omega_at(-5);
        std::vector<double> first;
        for (std::int64_t i = -300; i <= 300; i += 7) first.push_back(a.omega_at(i));
        // Interleaved queries far away on both sides, then re-query.
        (void)a.omega_at(-50000);
        (void)a.omega_at(70000);
        CHECK(a.omega_at(-5) == at_minus_five);
        const Environment b(m, 99);
        (void)b.omega_at(12345);
        std::size_t k = 0;
        for (std::int64_t i = -300; i <= 300; i += 7, ++k) {
            CHECK(a.omega_at(i) == first[k]);
            CHECK(b.omega_at(i) == first[k]);
            bool in_support = false;
            for (double w : m.support) in_support = in_support || w == first[k];
            CHECK(in_support);
        }
        std::vector<double> window(64);
        b.fill_omega(-20, window);
        for (std::int64_t i = 0; i < 64; ++i) CHECK(window[static_cast<std::size_t>(i)] == a.omega_at(i - 20));
    }
}

TEST_CASE("different seeds give different realizations") {
    const Environment a(gen::two_point(), 1);
    const Environment b(gen::two_point(), 2);
    int differ = 0;
    for (std::int64_t i = 0; i < 200; ++i) differ += a.omega_at(i) != b.omega_at(i);
    CHECK(differ > 50);
}

TEST_CASE("rho_at is the odds of a left step") {
    CHECK(Environment(make_constant(kOneThird, 1)).rho_at(3) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(Environment(make_constant(kTwoThirds, 1)).rho_at(-3) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(Environment(make_constant(0.5, 1)).rho_at(0) == 1.0);
}

TEST_CASE("IID frequency of the low state lies in the binomial band") {
    const double q = 0.4;
    const Environment env(gen::two_point(q), 2024);
    const std::int64_t n = 100000;
    std::int64_t lo = 0;
    for (std::int64_t i = 0; i < n; ++i) lo += env.omega_at(i) == kOneThird;
    const double freq = static_cast<double>(lo) / n;
    CHECK(std::abs(freq - q) <= 3.0 * std::sqrt(q * (1 - q) / n));
}

TEST_CASE("IID site pairs pass a chi-square test of independence") {
    const double q = 0.4;
    const Environment env(gen::two_point(q), 77);
    std::array<double, 4> counts{};
    const std::int64_t pairs = 100000;
    for (std::int64_t k = 0; k < pairs; ++k) {
        const int a = env.omega_at(2 * k) == kOneThird;
        const int b = env.omega_at(2 * k + 1) == kOneThird;
        counts[static_cast<std::size_t>(2 * a + b)] += 1.0;
    }
    const std::array<double, 4> p{(1 - q) * (1 - q), (1 - q) * q, q * (1 - q), q * q};
    double chi2 = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
        const double e = p[c] * pairs;
        chi2 += (counts[c] - e) * (counts[c] - e) / e;
    }
    CHECK(stats::chi_square_sf(chi2, 3) > 0.01);
}

namespace {

std::array<double, 4> transition_frequencies(const Environment& env, std::int64_t first, std::int64_t count) {
    std::array<double, 4> c{};
    for (std::int64_t i = first; i < first + count; ++i) {
        c[env.state_at(i) * 2 + env.state_at(i + 1)] += 1.0;
    }
    return {c[0] / (c[0] + c[1]), c[1] / (c[0] + c[1]), c[2] / (c[2] + c[3]), c[3] / (c[2] + c[3])};
}

}  // namespace

TEST_CASE("Markov realization: forward transitions match P on both half-lines") {
    const auto m = gen::markov_two_state();
    const Environment env(m, 31);
    const auto right = transition_frequencies(env, 0, 100000);
    const auto left = transition_frequencies(env, -100000, 100000);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(std::abs(right[2 * i + j] - m.transition_at(i, j)) <= 0.01);
            CHECK(std::abs(left[2 * i + j] - m.transition_at(i, j)) <= 0.01);
        }
    }
    double ones = 0.0;
    for (std::int64_t i = -50000; i < 50000; ++i) ones += static_cast<double>(env.state_at(i));
    CHECK(ones / 100000.0 == doctest::Approx(5.0 / 7.0).epsilon(0.05));
}

TEST_CASE("reversed kernel satisfies detailed balance with the forward kernel") {
    gen::Source src(12);
    for (int trial = 0; trial < 20; ++trial) {
        const auto m = gen::admissible_markov(src);
        const auto rev = reversed_kernel(m);
        const std::size_t n = m.states();
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row += rev[i * n + j];
                CHECK(m.stationary[i] * rev[i * n + j] ==
                      doctest::Approx(m.stationary[j] * m.transition_at(j, i)).epsilon(1e-12));
            }
            CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("concurrent first queries agree with a serial pass") {
    const auto m = gen::markov_two_state();
    const Environment serial(m, 5);
    std::vector<std::size_t> expected(4000);
    for (std::int64_t i = 0; i < 4000; ++i) expected[static_cast<std::size_t>(i)] = serial.state_at(i - 2000);

    const Environment shared(m, 5);
    std::vector<std::size_t> got(4000);
    parallel_for(got.size(), 4, [&](std::size_t k) { got[k] = shared.state_at(static_cast<std::int64_t>(k) - 2000); });
    CHECK(got == expected);
}

TEST_CASE("model JSON round trip and identifiers") {
    const auto a = gen::two_point();
    const auto b = gen::markov_two_state();
    CHECK(model_from_json(model_to_json(a)) == a);
    CHECK(model_from_json(model_to_json(b)) == b);
    CHECK(model_id(a) == model_id(gen::two_point()));
    CHECK(model_id(a) != model_id(b));
    CHECK(model_id(a).rfind("iid_two_point", 0) == 0);

    nlohmann::json j = model_to_json(b);
    j["kind"] = "MARKOV_FINITE";
    CHECK(model_from_json(j) == b);
    CHECK_THROWS_AS(model_from_json(nlohmann::json{{"kind", "iid_two_point"}}), ModelError);
    CHECK_THROWS_AS(model_from_json(nlohmann::json{{"kind", "gaussian"}, {"omega_states", {0.5}}}), ModelError);
    nlohmann::json bypass = model_to_json(a);
    bypass["weights"] = {0.8, 0.2};
    CHECK_THROWS_AS(model_from_json(bypass), ModelError);
    bypass["check_admissibility"] = false;
    CHECK_NOTHROW(model_from_json(bypass));
}
