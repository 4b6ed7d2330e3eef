#include "rwre/walk.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace rwre {

SiteWindow::SiteWindow(const Environment& env) : env_(&env) {}

void SiteWindow::grow_to(std::int64_t site) {
    const auto size = static_cast<std::int64_t>(thresholds_.size());
    const std::int64_t chunk = std::max<std::int64_t>(1024, size);
    std::int64_t new_first = first_;
    std::int64_t new_end = first_ + size;
    if (thresholds_.empty()) {
        new_first = site - chunk / 2;
        new_end = site + chunk / 2;
    } else if (site < first_) {
        new_first = std::min(site, first_ - chunk);
    } else {
        new_end = std::max(site + 1, new_end + chunk);
    }

    std::vector<double> omega(static_cast<std::size_t>(new_end - new_first));
    std::vector<std::uint64_t> grown(omega.size());
    // Re-query only the new sites; existing thresholds are copied over.
    const std::int64_t keep_lo = thresholds_.empty() ? new_end : first_;
    const std::int64_t keep_hi = thresholds_.empty() ? new_end : first_ + size;
    if (new_first < keep_lo) env_->fill_omega(new_first, std::span(omega).first(static_cast<std::size_t>(keep_lo - new_first)));
    if (keep_hi < new_end) {
        env_->fill_omega(keep_hi, std::span(omega).subspan(static_cast<std::size_t>(keep_hi - new_first)));
    }
    for (std::int64_t s = new_first; s < new_end; ++s) {
        const auto k = static_cast<std::size_t>(s - new_first);
        grown[k] = (s >= keep_lo && s < keep_hi) ? thresholds_[static_cast<std::size_t>(s - first_)]
                                                 : step_threshold(omega[k]);
    }
    thresholds_.swap(grown);
    first_ = new_first;
}

RunSummary run_to_time(const Environment& env, std::int64_t n, std::uint64_t seed) {
    Xoshiro256 bits(derive_key(seed, "walk"));
    return run_to_time_with(env, n, bits);
}

HittingRecord hitting_time(const Environment& env, std::int64_t target, std::int64_t step_cap, std::uint64_t seed) {
    Xoshiro256 bits(derive_key(seed, "walk"));
    return hitting_time_with(env, target, step_cap, bits);
}

std::int64_t default_step_cap(std::int64_t target, double kappa_hat) {
    const double cap = 10.0 * std::pow(static_cast<double>(target), 1.0 / kappa_hat) * 100.0;
    constexpr double ceiling = 0x1.0p61;
    return static_cast<std::int64_t>(std::min(cap, ceiling));
}

std::int64_t HittingRecord::left_count(std::int64_t site) const {
    if (site < min_position || site >= min_position + static_cast<std::int64_t>(left_counts.size())) return 0;
    return left_counts[static_cast<std::size_t>(site - min_position)];
}

std::int64_t HittingRecord::total_left_moves() const {
    return std::accumulate(left_counts.begin(), left_counts.end(), std::int64_t{0});
}

std::int64_t HittingRecord::left_moves_between(std::int64_t lo, std::int64_t hi) const {
    std::int64_t total = 0;
    for (std::int64_t s = std::max(lo, min_position); s <= hi; ++s) total += left_count(s);
    return total;
}

bool verify_identity(const HittingRecord& record) {
    if (record.capped) return false;
    return record.steps == record.target + 2 * record.total_left_moves();
}

std::int64_t left_tail_mass(const HittingRecord& record) { return record.left_moves_between(record.min_position, 0); }

std::int64_t left_tail_mass(const Environment& env, std::int64_t target, std::uint64_t seed, std::int64_t step_cap) {
    const auto record = hitting_time(env, target, step_cap, seed);
    if (record.capped) throw std::runtime_error("left_tail_mass: walk did not hit the target within the step cap");
    return left_tail_mass(record);
}

nlohmann::json to_json(const HittingRecord& record) {
    nlohmann::json j;
    j["target"] = record.target;
    j["T_n"] = record.capped ? nlohmann::json(nullptr) : nlohmann::json(record.steps);
    j["steps"] = record.steps;
    j["capped"] = record.capped;
    j["min_position"] = record.min_position;
    auto counts = nlohmann::json::array();
    for (std::size_t k = 0; k < record.left_counts.size(); ++k) {
        counts.push_back({record.min_position + static_cast<std::int64_t>(k), record.left_counts[k]});
    }
    j["left_counts"] = std::move(counts);
    return j;
}

std::string hitting_batch_csv(const std::vector<HittingRecord>& records) {
    std::ostringstream out;
    out << "replica,target,T_n,sumU,minPos,capped\n";
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        out << r << ',' << rec.target << ',' << rec.steps << ',' << rec.total_left_moves() << ',' << rec.min_position
            << ',' << (rec.capped ? 1 : 0) << '\n';
    }
    return out.str();
}

}  // namespace rwre
