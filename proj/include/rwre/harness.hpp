#pragma once

// Scaling experiments, the generating-function audit, and result emission.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "rwre/branching.hpp"
#include "rwre/env.hpp"
#include "rwre/spectrum.hpp"

namespace rwre::harness {

enum class ExperimentKind { walk_exponent, hitting_exponent, zsum_exponent, spectrum, genfn_audit };

std::string experiment_name(ExperimentKind kind);
ExperimentKind parse_experiment(std::string_view name);

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    EnvironmentModel model;
    ExperimentKind kind = ExperimentKind::walk_exponent;
    std::vector<std::int64_t> sizes;
    std::int64_t replicas = 100;
    std::uint64_t master_seed = 0;
    unsigned threads = 1;
    std::int64_t population_bound = kDefaultPopulationBound;
    SpectrumOptions spectrum;
    std::int64_t audit_cases = 1000;
};

/// Throws ConfigError: sizes must be >= 2 and strictly increasing, replicas >= 1.
void validate(const ExperimentConfig& config);

/// Reads {"model": {...}, "sizes": [...], "replicas", "seed", "threads",
/// "population_bound", "spectrum": {...}, "audit_cases"}. The seed defaults to the
/// model seed.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentKind kind);

enum class RowFlag { ok, nonpositive, capped, overflow };
std::string flag_name(RowFlag flag);
RowFlag parse_flag(std::string_view name);

struct Row {
    std::int64_t size = 0;
    std::int64_t replica = 0;
    double statistic = 0.0;
    RowFlag flag = RowFlag::ok;

    friend bool operator==(const Row&, const Row&) = default;
};

struct SizeSummary {
    std::int64_t size = 0;
    std::int64_t count = 0;    // rows entering the quantiles
    std::int64_t flagged = 0;  // flagged rows at this size
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;

    friend bool operator==(const SizeSummary&, const SizeSummary&) = default;
};

enum class FitStatus { ok, low_confidence, insufficient_grid };
std::string fit_status_name(FitStatus status);

/// Log-log regression of median log-statistic on log size.
struct ExponentFit {
    FitStatus status = FitStatus::insufficient_grid;
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;

    friend bool operator==(const ExponentFit&, const ExponentFit&) = default;
};

/// Empirical P(n^{−α} X_n > 1) at one size.
struct Probe {
    std::int64_t size = 0;
    double alpha = 0.0;
    double fraction = 0.0;

    friend bool operator==(const Probe&, const Probe&) = default;
};

struct ScalingResult {
    std::string experiment;
    std::string model_id;
    std::vector<Row> rows;
    std::vector<SizeSummary> summary;
    ExponentFit fit;
    std::vector<Probe> probes;

    friend bool operator==(const ScalingResult&, const ScalingResult&) = default;
};

/// Per-size quartiles from rows; flagged rows are dropped when exclude_flagged.
std::vector<SizeSummary> summarize(std::span<const Row> rows, bool exclude_flagged);
ExponentFit fit_exponent(std::span<const SizeSummary> summary);

/// log max(X_n, 1)/log n per replica; slope estimates κ.
ScalingResult run_walk_exponent(const ExperimentConfig& config);
/// log T_n/log n per replica; capped runs excluded from the summary; slope estimates 1/κ.
ScalingResult run_hitting_exponent(const ExperimentConfig& config);
/// log(1 + Σ_{i≤n} Z_i)/log n per replica; slope estimates 1/κ.
ScalingResult run_zsum_exponent(const ExperimentConfig& config);

ScalingResult run_experiment(const ExperimentConfig& config);

// ---- generating-function audit --------------------------------------------

using RecursionFn = std::function<double(std::span<const double>, std::int64_t, double)>;

struct AuditOptions {
    std::int64_t cases = 1000;
    std::int64_t max_n = 100;
    std::uint64_t seed = 0;
    double lemma_tolerance = 1e-10;
    double recursion_tolerance = 1e-11;
    RecursionFn recursion = b_recursion;  // replaceable for mutation tests
};

struct AuditCheck {
    std::string name;
    std::int64_t cases = 0;
    std::int64_t failures = 0;
    double worst_error = 0.0;
    std::string counterexample;  // first failing instance
};

struct AuditReport {
    std::vector<AuditCheck> checks;
    bool passed() const;
};

AuditReport run_genfn_audit(const EnvironmentModel& model, const AuditOptions& options);

nlohmann::json to_json(const AuditReport& report);
std::string to_csv(const AuditReport& report);

/// Invariant breaches of a spectrum report (Λ(0) = 0, convexity, κ duality, sign
/// property). Empty when all hold.
std::vector<std::string> spectrum_breaches(const EnvironmentModel& model, const SpectrumReport& report);

// ---- emission --------------------------------------------------------------

enum class Format { csv, json };
Format parse_format(std::string_view name);

/// Columns experiment,model_id,size,replica,statistic,flag.
std::string to_csv(const ScalingResult& result);
nlohmann::json to_json(const ScalingResult& result);
ScalingResult scaling_result_from_json(const nlohmann::json& j);

/// Writes text to path; IO failures throw std::runtime_error naming the path.
void write_file(const std::filesystem::path& path, const std::string& text);
void emit(const ScalingResult& result, Format format, const std::filesystem::path& path);

}  // namespace rwre::harness
