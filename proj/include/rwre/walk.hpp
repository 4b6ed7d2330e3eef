#pragma once

// Quenched nearest-neighbour walk: X moves right from site i with probability
// ω_i. Trajectory randomness comes from a stream keyed independently of the
// environment, so one environment can be replayed under many walks.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rwre/env.hpp"
#include "rwre/random.hpp"

namespace rwre {

struct WalkState {
    std::int64_t position = 0;
    std::int64_t time = 0;

    friend bool operator==(const WalkState&, const WalkState&) = default;
};

/// Right-step probability ω scaled to a 64-bit threshold: a step goes right
/// iff the next 64 random bits are below it.
inline std::uint64_t step_threshold(double omega) noexcept {
    return static_cast<std::uint64_t>(std::ldexp(omega, 64));
}

/// Per-walk cache of step thresholds over a contiguous site range, filled from
/// the environment in chunks. Single-threaded.
class SiteWindow {
public:
    explicit SiteWindow(const Environment& env);

    std::uint64_t threshold(std::int64_t site) {
        if (site < first_ || site >= first_ + static_cast<std::int64_t>(thresholds_.size())) grow_to(site);
        return thresholds_[static_cast<std::size_t>(site - first_)];
    }

private:
    void grow_to(std::int64_t site);

    const Environment* env_;
    std::int64_t first_ = 0;
    std::vector<std::uint64_t> thresholds_;
};

/// One step of the quenched chain. `bits` is any callable returning uniform
/// 64-bit words (an engine, or a forced test stream).
template <class Bits>
WalkState step(WalkState state, SiteWindow& window, Bits& bits) {
    const bool right = bits() < window.threshold(state.position);
    return {state.position + (right ? 1 : -1), state.time + 1};
}

struct RunSummary {
    std::int64_t final_position = 0;
    std::int64_t min_position = 0;
    std::int64_t max_position = 0;
    std::int64_t steps = 0;
};

template <class Bits>
RunSummary run_to_time_with(const Environment& env, std::int64_t n, Bits& bits) {
    if (n < 0) throw std::invalid_argument("run_to_time needs n >= 0");
    SiteWindow window(env);
    WalkState state;
    RunSummary out;
    while (state.time < n) {
        state = step(state, window, bits);
        out.min_position = std::min(out.min_position, state.position);
        out.max_position = std::max(out.max_position, state.position);
    }
    out.final_position = state.position;
    out.steps = state.time;
    return out;
}

/// X_n after exactly n steps from X_0 = 0, trajectory stream keyed by `seed`.
RunSummary run_to_time(const Environment& env, std::int64_t n, std::uint64_t seed);

struct HittingRecord {
    std::int64_t target = 0;
    std::int64_t steps = 0;  // T_n when not capped
    bool capped = false;
    std::int64_t min_position = 0;
    // U_i^n for every site i in [min_position, target - 1], i.e. every site the
    // walk can have left from; left_counts[0] is site min_position.
    std::vector<std::int64_t> left_counts;

    std::optional<std::int64_t> hitting_time() const {
        return capped ? std::nullopt : std::optional<std::int64_t>(steps);
    }
    std::int64_t left_count(std::int64_t site) const;
    std::int64_t total_left_moves() const;
    /// Σ_{i=lo}^{hi} U_i^n over the recorded range.
    std::int64_t left_moves_between(std::int64_t lo, std::int64_t hi) const;
};

template <class Bits>
HittingRecord hitting_time_with(const Environment& env, std::int64_t target, std::int64_t step_cap, Bits& bits) {
    if (target < 1) throw std::invalid_argument("hitting_time needs target >= 1");
    if (step_cap < target) throw std::invalid_argument("hitting_time needs step_cap >= target");

    // Dense buffers over [lo, target - 1]; only the left end ever grows.
    std::int64_t lo = -64;
    std::vector<std::uint64_t> thr(static_cast<std::size_t>(target - lo));
    std::vector<std::int64_t> counts(thr.size(), 0);
    {
        std::vector<double> omega(thr.size());
        env.fill_omega(lo, omega);
        for (std::size_t k = 0; k < omega.size(); ++k) thr[k] = step_threshold(omega[k]);
    }

    std::int64_t pos = 0;
    std::int64_t t = 0;
    std::int64_t min_pos = 0;
    while (pos != target && t < step_cap) {
        const auto idx = static_cast<std::size_t>(pos - lo);
        ++t;
        if (bits() < thr[idx]) {
            ++pos;
            continue;
        }
        ++counts[idx];
        --pos;
        if (pos < min_pos) {
            min_pos = pos;
            if (pos < lo) {
                const std::int64_t grow = std::max<std::int64_t>(64, target - lo);
                const std::int64_t new_lo = lo - grow;
                std::vector<double> omega(static_cast<std::size_t>(grow));
                env.fill_omega(new_lo, omega);
                std::vector<std::uint64_t> new_thr(static_cast<std::size_t>(target - new_lo));
                std::vector<std::int64_t> new_counts(new_thr.size(), 0);
                for (std::size_t k = 0; k < omega.size(); ++k) new_thr[k] = step_threshold(omega[k]);
                std::copy(thr.begin(), thr.end(), new_thr.begin() + grow);
                std::copy(counts.begin(), counts.end(), new_counts.begin() + grow);
                thr.swap(new_thr);
                counts.swap(new_counts);
                lo = new_lo;
            }
        }
    }

    HittingRecord rec;
    rec.target = target;
    rec.steps = t;
    rec.capped = pos != target;
    rec.min_position = min_pos;
    rec.left_counts.assign(counts.begin() + (min_pos - lo), counts.end());
    return rec;
}

/// Runs until the walk first hits `target` or `step_cap` steps have elapsed.
HittingRecord hitting_time(const Environment& env, std::int64_t target, std::int64_t step_cap, std::uint64_t seed);

/// Default cap 10 · target^{1/κ̂} · 100, saturating well below int64 overflow.
std::int64_t default_step_cap(std::int64_t target, double kappa_hat);

/// T_n = n + 2 Σ_i U_i^n in exact integer arithmetic. False for capped records.
bool verify_identity(const HittingRecord& record);

/// Σ_{i ≤ 0} U_i^n.
std::int64_t left_tail_mass(const HittingRecord& record);
std::int64_t left_tail_mass(const Environment& env, std::int64_t target, std::uint64_t seed,
                            std::int64_t step_cap);

nlohmann::json to_json(const HittingRecord& record);

/// CSV with columns replica,target,T_n,sumU,minPos,capped.
std::string hitting_batch_csv(const std::vector<HittingRecord>& records);

}  // namespace rwre
