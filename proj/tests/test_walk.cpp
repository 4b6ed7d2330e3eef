#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "doctest.h"
#include "generators.hpp"
#include "rwre/spectrum.hpp"
#include "rwre/stats.hpp"
#include "rwre/walk.hpp"

using namespace rwre;
using gen::kOneThird;
using gen::kTwoThirds;

namespace {

constexpr std::uint64_t kUp = 0;
constexpr std::uint64_t kDown = std::numeric_limits<std::uint64_t>::max();

// Replays a fixed list of 64-bit words, then repeats the last one.
struct ForcedBits {
    std::vector<std::uint64_t> words;
    std::size_t next = 0;
    std::uint64_t operator()() { return words[std::min(next++, words.size() - 1)]; }
};

}  // namespace

TEST_CASE("forced transitions") {
    const Environment env(gen::two_point(), 3);
    SiteWindow window(env);
    ForcedBits up{{kUp}};
    ForcedBits down{{kDown}};
    const WalkState s0{4, 10};
    CHECK(step(s0, window, up) == WalkState{5, 11});
    CHECK(step(s0, window, down) == WalkState{3, 11});
    const WalkState far{-100000, 0};
    CHECK(step(far, window, down) == WalkState{-100001, 1});
}

TEST_CASE("right-step frequency at a pinned site") {
    const double omega = 0.999;
    const Environment env(make_constant(omega, 1));
    SiteWindow window(env);
    Xoshiro256 bits(42);
    const int n = 100000;
    int right = 0;
    for (int i = 0; i < n; ++i) right += step(WalkState{7, 0}, window, bits).position == 8;
    CHECK(std::abs(right / static_cast<double>(n) - omega) <= 3.0 * std::sqrt(omega * (1 - omega) / n));
}

TEST_CASE("run_to_time basics") {
    const Environment env(gen::two_point(), 3);
    const auto zero = run_to_time(env, 0, 1);
    CHECK(zero.final_position == 0);
    CHECK(zero.steps == 0);
    CHECK_THROWS(run_to_time(env, -1, 1));
    const auto run = run_to_time(env, 1001, 9);
    CHECK(run.steps == 1001);
    CHECK(std::abs(run.final_position) % 2 == 1);
    CHECK(run.min_position <= std::min<std::int64_t>(0, run.final_position));
    CHECK(run.max_position >= std::max<std::int64_t>(0, run.final_position));
    CHECK(run_to_time(env, 1001, 9).final_position == run.final_position);
}

TEST_CASE("constant environment walks at speed 1/3") {
    const auto m = make_constant(kTwoThirds, 1);
    const Environment env(m);
    const std::int64_t n = 1000000;
    for (std::uint64_t r = 0; r < 20; ++r) {
        const double v = static_cast<double>(run_to_time(env, n, r).final_position) / static_cast<double>(n);
        CHECK(std::abs(v - 1.0 / 3.0) <= 0.01);
    }
}

TEST_CASE("zero-speed model: transient with sublinear displacement") {
    const auto m = gen::two_point();
    const std::int64_t n = 1000000;
    int good = 0;
    const int replicas = 40;
    for (int r = 0; r < replicas; ++r) {
        const Environment env(m, derive_key(5, "env", r));
        const auto x = run_to_time(env, n, derive_key(5, "walk", r)).final_position;
        good += x > 0 && static_cast<double>(x) / static_cast<double>(n) < 0.01;
    }
    CHECK(good >= 0.95 * replicas);
}

TEST_CASE("hand-checked hitting records") {
    const Environment env(gen::two_point(), 3);
    ForcedBits right{{kUp}};
    const auto straight = hitting_time_with(env, 5, 100, right);
    CHECK(straight.steps == 5);
    CHECK_FALSE(straight.capped);
    CHECK(straight.total_left_moves() == 0);
    CHECK(straight.min_position == 0);
    CHECK(verify_identity(straight));
    CHECK(left_tail_mass(straight) == 0);

    ForcedBits detour{{kDown, kUp, kUp}};
    const auto rec = hitting_time_with(env, 1, 100, detour);
    CHECK(rec.hitting_time() == 3);
    CHECK(rec.left_count(0) == 1);
    CHECK(rec.left_count(-1) == 0);
    CHECK(rec.min_position == -1);
    CHECK(verify_identity(rec));
    CHECK(left_tail_mass(rec) == 1);

    auto tampered = rec;
    tampered.left_counts.back() += 1;
    CHECK_FALSE(verify_identity(tampered));

    ForcedBits stuck{{kDown}};
    const auto capped = hitting_time_with(env, 3, 50, stuck);
    CHECK(capped.capped);
    CHECK_FALSE(capped.hitting_time().has_value());
    CHECK_FALSE(verify_identity(capped));
    CHECK(capped.min_position == -50);

    CHECK_THROWS(hitting_time_with(env, 0, 10, right));
    CHECK_THROWS(hitting_time_with(env, 10, 5, right));
}

TEST_CASE("property: every finite record satisfies the path identity") {
    gen::Source src(2718);
    int finite = 0;
    for (int trial = 0; trial < 400; ++trial) {
        const auto m = gen::admissible_with_kappa(src, 0.4);
        const Environment env(m, src.bits());
        const std::int64_t target = src.integer(1, 60);
        const auto rec = hitting_time(env, target, default_step_cap(target, kappa_root(m).value), src.bits());
        if (rec.capped) continue;
        ++finite;
        CHECK(verify_identity(rec));
        CHECK((rec.steps - target) % 2 == 0);
        CHECK(rec.left_count(target) == 0);
        CHECK(rec.left_count(target + 5) == 0);
        CHECK(rec.min_position <= 0);
        CHECK(static_cast<std::int64_t>(rec.left_counts.size()) == target - rec.min_position);
        CHECK(rec.left_moves_between(rec.min_position, target - 1) == rec.total_left_moves());
        if (rec.min_position < 0) CHECK(rec.left_count(rec.min_position + 1) > 0);
    }
    CHECK(finite > 380);
}

TEST_CASE("monotone coupling: raising every omega cannot delay the hitting time") {
    gen::Source src(31);
    for (int trial = 0; trial < 200; ++trial) {
        const double lo = src.uniform(0.4, 0.5);
        const double hi = src.uniform(0.6, 0.8);
        const double bump = src.uniform(0.0, 0.1);
        const auto base = make_iid_two_point(hi, lo, 0.4, 1, Admissibility::bypass);
        const auto raised = make_iid_two_point(hi + bump, lo + bump, 0.4, 1, Admissibility::bypass);
        const std::uint64_t env_seed = src.bits();
        const Environment a(base, env_seed);
        const Environment b(raised, env_seed);
        for (std::int64_t i = -50; i < 50; ++i) REQUIRE(b.omega_at(i) >= a.omega_at(i));
        const std::uint64_t walk_seed = src.bits();
        const std::int64_t target = src.integer(1, 40);
        const auto ta = hitting_time(a, target, 100000000, walk_seed);
        const auto tb = hitting_time(b, target, 100000000, walk_seed);
        REQUIRE_FALSE(ta.capped);
        CHECK(tb.steps <= ta.steps);
    }
}

TEST_CASE("constant environment: left crossings at site 1 before hitting 2 are geometric") {
    const Environment env(make_constant(kTwoThirds, 1));
    const int replicas = 100000;
    std::vector<double> u(replicas);
    for (int r = 0; r < replicas; ++r) u[static_cast<std::size_t>(r)] = static_cast<double>(hitting_time(env, 2, 1000000, r).left_count(1));
    // Geometric on {0, 1, ...} with success 2/3: mean 1/2, variance 3/4.
    CHECK(std::abs(stats::mean(u) - 0.5) <= 3.0 * std::sqrt(0.75 / replicas));
}

TEST_CASE("left tail mass and the running minimum are tight in the target") {
    const auto m = gen::two_point();
    const double kappa = kappa_root(m).value;
    const int replicas = 400;
    struct Sample {
        std::vector<double> tail;
        std::vector<double> minimum;
    };
    auto collect = [&](std::int64_t target) {
        Sample out;
        for (int r = 0; r < replicas; ++r) {
            const Environment env(m, derive_key(8, "env", target, r));
            const auto rec = hitting_time(env, target, default_step_cap(target, kappa), derive_key(8, "walk", target, r));
            if (rec.capped) continue;
            out.tail.push_back(static_cast<double>(left_tail_mass(rec)));
            out.minimum.push_back(static_cast<double>(rec.min_position));
        }
        CHECK(out.tail.size() >= 0.95 * replicas);
        return out;
    };
    const auto small = collect(100);
    const auto large = collect(1000);
    CHECK(stats::ks_two_sample(small.tail, large.tail).p_value > 0.01);
    CHECK(stats::ks_two_sample(small.minimum, large.minimum).p_value > 0.01);
    const double q_small = stats::quantile(small.minimum, 0.01);
    const double q_large = stats::quantile(large.minimum, 0.01);
    CHECK(std::abs(q_small - q_large) <= 0.5 * std::abs(q_small) + 2.0);
}

TEST_CASE("constant environment: left tail mass is stable across targets") {
    const Environment env(make_constant(kTwoThirds, 1));
    std::vector<double> means;
    for (std::int64_t target : {10, 100, 1000}) {
        std::vector<double> xs(10000);
        for (std::size_t r = 0; r < xs.size(); ++r) xs[r] = static_cast<double>(left_tail_mass(env, target, derive_key(target, r), 100 * target));
        means.push_back(stats::mean(xs));
    }
    CHECK(std::isfinite(means[0]));
    CHECK(means[1] == doctest::Approx(means[0]).epsilon(0.1));
    CHECK(means[2] == doctest::Approx(means[0]).epsilon(0.1));
}

TEST_CASE("left_tail_mass refuses capped runs") {
    const Environment env(gen::two_point(), 1);
    CHECK_THROWS(left_tail_mass(env, 1000, 1, 1000));
}

TEST_CASE("default step cap grows like target^(1/kappa)") {
    CHECK(default_step_cap(100, 1.0) == 100000);
    CHECK(default_step_cap(1024, 0.5) == 1000LL * 1024 * 1024);
    CHECK(default_step_cap(std::int64_t{1} << 40, 0.1) == (std::int64_t{1} << 61));
}

TEST_CASE("hitting record serialization") {
    const Environment env(gen::two_point(), 3);
    ForcedBits detour{{kDown, kUp, kUp}};
    const auto rec = hitting_time_with(env, 1, 100, detour);
    const auto j = to_json(rec);
    CHECK(j.at("target") == 1);
    CHECK(j.at("T_n") == 3);
    CHECK(j.at("capped") == false);
    CHECK(j.at("min_position") == -1);
    CHECK(j.at("left_counts").size() == 2);
    const auto csv = hitting_batch_csv({rec, rec});
    CHECK(csv == "replica,target,T_n,sumU,minPos,capped\n0,1,3,1,-1,0\n1,1,3,1,-1,0\n");
    CHECK(hitting_batch_csv({}) == "replica,target,T_n,sumU,minPos,capped\n");
}
