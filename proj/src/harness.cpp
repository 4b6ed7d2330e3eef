#include "rwre/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "rwre/format.hpp"
#include "rwre/parallel.hpp"
#include "rwre/random.hpp"
#include "rwre/stats.hpp"
#include "rwre/walk.hpp"

namespace rwre::harness {

namespace {

// Keys for one (experiment, size, replica) cell; partial reruns reproduce exact subsets.
struct ReplicaKeys {
    std::uint64_t environment;
    std::uint64_t trajectory;
};

ReplicaKeys replica_keys(std::uint64_t master, ExperimentKind kind, std::int64_t size, std::int64_t replica) {
    const std::uint64_t cell = derive_key(master, experiment_name(kind), size, replica);
    return {derive_key(cell, "environment"), derive_key(cell, "trajectory")};
}

// κ when the model has one in (0,1]; 1 otherwise (ballistic sanity models).
double kappa_or_one(const EnvironmentModel& model) {
    try {
        return kappa_root(model).value;
    } catch (const ModelError&) {
        return 1.0;
    }
}

template <class Cell>
std::vector<Row> run_grid(const ExperimentConfig& config, Cell&& cell) {
    const std::size_t per_size = static_cast<std::size_t>(config.replicas);
    std::vector<Row> rows(config.sizes.size() * per_size);
    parallel_for(rows.size(), config.threads, [&](std::size_t idx) {
        const std::int64_t size = config.sizes[idx / per_size];
        const auto replica = static_cast<std::int64_t>(idx % per_size);
        Row row = cell(size, replica_keys(config.master_seed, config.kind, size, replica));
        row.size = size;
        row.replica = replica;
        rows[idx] = row;
    });
    return rows;
}

ScalingResult assemble(const ExperimentConfig& config, std::vector<Row> rows, bool exclude_flagged) {
    ScalingResult result;
    result.experiment = experiment_name(config.kind);
    result.model_id = model_id(config.model);
    result.rows = std::move(rows);
    result.summary = summarize(result.rows, exclude_flagged);
    result.fit = fit_exponent(result.summary);
    return result;
}

std::string describe_case(std::int64_t index, std::int64_t n, double s) {
    std::ostringstream out;
    out << "case " << index << " (n=" << n << ", s=" << format_real(s) << ")";
    return out.str();
}

}  // namespace

std::string experiment_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::walk_exponent: return "walk-exponent";
        case ExperimentKind::hitting_exponent: return "hitting-exponent";
        case ExperimentKind::zsum_exponent: return "zsum-exponent";
        case ExperimentKind::spectrum: return "spectrum";
        case ExperimentKind::genfn_audit: return "genfn-audit";
    }
    return "unknown";
}

ExperimentKind parse_experiment(std::string_view name) {
    for (auto kind : {ExperimentKind::walk_exponent, ExperimentKind::hitting_exponent, ExperimentKind::zsum_exponent,
                      ExperimentKind::spectrum, ExperimentKind::genfn_audit}) {
        if (experiment_name(kind) == name) return kind;
    }
    throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

void validate(const ExperimentConfig& config) {
    if (config.replicas < 1) throw ConfigError("replicas must be >= 1");
    if (config.threads < 1) throw ConfigError("threads must be >= 1");
    const bool needs_grid = config.kind == ExperimentKind::walk_exponent ||
                            config.kind == ExperimentKind::hitting_exponent ||
                            config.kind == ExperimentKind::zsum_exponent;
    if (needs_grid && config.sizes.empty()) throw ConfigError("size grid is empty");
    for (std::size_t i = 0; i < config.sizes.size(); ++i) {
        if (config.sizes[i] < 2) throw ConfigError("grid sizes must be >= 2");
        if (i > 0 && config.sizes[i] <= config.sizes[i - 1]) throw ConfigError("size grid must be strictly increasing");
    }
    if (config.audit_cases < 1) throw ConfigError("audit_cases must be >= 1");
}

ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentKind kind) {
    ExperimentConfig config;
    config.kind = kind;
    try {
        if (j.contains("experiment") && parse_experiment(j.at("experiment").get<std::string>()) != kind) {
            throw ConfigError("config experiment '" + j.at("experiment").get<std::string>() + "' does not match '" +
                              experiment_name(kind) + "'");
        }
        config.model = model_from_json(j.at("model"));
        config.master_seed = j.value("seed", config.model.master_seed);
        config.sizes = j.value("sizes", std::vector<std::int64_t>{});
        config.replicas = j.value("replicas", config.replicas);
        config.threads = j.value("threads", config.threads);
        config.population_bound = j.value("population_bound", config.population_bound);
        config.audit_cases = j.value("audit_cases", config.audit_cases);
        if (j.contains("spectrum")) {
            const auto& s = j.at("spectrum");
            config.spectrum.lambda_min = s.value("lambda_min", config.spectrum.lambda_min);
            config.spectrum.lambda_max = s.value("lambda_max", config.spectrum.lambda_max);
            config.spectrum.lambda_step = s.value("lambda_step", config.spectrum.lambda_step);
            config.spectrum.rate_points = s.value("rate_points", config.spectrum.rate_points);
            config.spectrum.speed_depth = s.value("speed_depth", config.spectrum.speed_depth);
            config.spectrum.speed_replicas = s.value("speed_replicas", config.spectrum.speed_replicas);
        }
        config.spectrum.seed = config.master_seed;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    } catch (const ModelError& e) {
        throw ConfigError(std::string("invalid model: ") + e.what());
    }
    validate(config);
    return config;
}

std::string flag_name(RowFlag flag) {
    switch (flag) {
        case RowFlag::ok: return "ok";
        case RowFlag::nonpositive: return "nonpositive";
        case RowFlag::capped: return "capped";
        case RowFlag::overflow: return "overflow";
    }
    return "unknown";
}

RowFlag parse_flag(std::string_view name) {
    for (auto f : {RowFlag::ok, RowFlag::nonpositive, RowFlag::capped, RowFlag::overflow}) {
        if (flag_name(f) == name) return f;
    }
    throw std::invalid_argument("unknown row flag '" + std::string(name) + "'");
}

std::string fit_status_name(FitStatus status) {
    switch (status) {
        case FitStatus::ok: return "ok";
        case FitStatus::low_confidence: return "low_confidence";
        case FitStatus::insufficient_grid: return "insufficient_grid";
    }
    return "unknown";
}

std::vector<SizeSummary> summarize(std::span<const Row> rows, bool exclude_flagged) {
    std::map<std::int64_t, std::vector<double>> kept;
    std::map<std::int64_t, std::int64_t> flagged;
    for (const auto& row : rows) {
        auto& bucket = kept[row.size];
        if (row.flag != RowFlag::ok) ++flagged[row.size];
        if (row.flag == RowFlag::ok || !exclude_flagged) bucket.push_back(row.statistic);
    }
    std::vector<SizeSummary> out;
    for (const auto& [size, values] : kept) {
        SizeSummary s;
        s.size = size;
        s.count = static_cast<std::int64_t>(values.size());
        s.flagged = flagged[size];
        if (!values.empty()) {
            const auto q = stats::quartiles(values);
            s.q1 = q.q1;
            s.median = q.median;
            s.q3 = q.q3;
        }
        out.push_back(s);
    }
    return out;
}

ExponentFit fit_exponent(std::span<const SizeSummary> summary) {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> se;
    for (const auto& s : summary) {
        if (s.count == 0) continue;
        const double log_n = std::log(static_cast<double>(s.size));
        x.push_back(log_n);
        y.push_back(s.median * log_n);
        // Asymptotic standard error of a median, with the IQR as a robust scale.
        const double sigma = (s.q3 - s.q1) / 1.349;
        se.push_back(1.2533 * sigma / std::sqrt(static_cast<double>(s.count)) * log_n);
    }

    ExponentFit fit;
    if (x.size() < 2) return fit;
    const auto line = stats::fit_line(x, y);
    fit.slope = line.slope;
    fit.intercept = line.intercept;

    // Propagate per-size median uncertainty through the regression weights.
    double xm = 0.0;
    for (double v : x) xm += v;
    xm /= static_cast<double>(x.size());
    double sxx = 0.0;
    for (double v : x) sxx += (v - xm) * (v - xm);
    double var = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double w = (x[i] - xm) / sxx;
        var += w * w * se[i] * se[i];
    }
    fit.slope_stderr = std::max(std::sqrt(var), line.slope_stderr);
    fit.status = x.size() == 2 ? FitStatus::low_confidence : FitStatus::ok;
    return fit;
}

ScalingResult run_walk_exponent(const ExperimentConfig& config) {
    validate(config);
    auto rows = run_grid(config, [&](std::int64_t n, const ReplicaKeys& keys) {
        const Environment env(config.model, keys.environment);
        const auto run = run_to_time(env, n, keys.trajectory);
        Row row;
        row.statistic = std::log(static_cast<double>(std::max<std::int64_t>(run.final_position, 1))) /
                        std::log(static_cast<double>(n));
        row.flag = run.final_position <= 0 ? RowFlag::nonpositive : RowFlag::ok;
        return row;
    });
    auto result = assemble(config, std::move(rows), false);

    // Bracket probes at κ ± 0.15: P(n^{−α} X_n > 1) heads to 1 below κ and 0 above.
    if (const double kappa = kappa_or_one(config.model); kappa < 1.0) {
        for (const double alpha : {kappa - 0.15, kappa + 0.15}) {
            for (const auto n : config.sizes) {
                std::int64_t above = 0;
                std::int64_t total = 0;
                for (const auto& row : result.rows) {
                    if (row.size != n) continue;
                    ++total;
                    // statistic > α  ⇔  X_n > n^α
                    if (row.flag == RowFlag::ok && row.statistic > alpha) ++above;
                }
                result.probes.push_back({n, alpha, static_cast<double>(above) / static_cast<double>(total)});
            }
        }
    }
    return result;
}

ScalingResult run_hitting_exponent(const ExperimentConfig& config) {
    validate(config);
    const double kappa = kappa_or_one(config.model);
    auto rows = run_grid(config, [&](std::int64_t n, const ReplicaKeys& keys) {
        const Environment env(config.model, keys.environment);
        const auto record = hitting_time(env, n, default_step_cap(n, kappa), keys.trajectory);
        Row row;
        row.statistic = std::log(static_cast<double>(record.steps)) / std::log(static_cast<double>(n));
        row.flag = record.capped ? RowFlag::capped : RowFlag::ok;
        return row;
    });
    return assemble(config, std::move(rows), true);
}

ScalingResult run_zsum_exponent(const ExperimentConfig& config) {
    validate(config);
    auto rows = run_grid(config, [&](std::int64_t n, const ReplicaKeys& keys) {
        const Environment env(config.model, keys.environment);
        const auto path = simulate_z(env, n, keys.trajectory, config.population_bound);
        Row row;
        row.statistic = std::log1p(static_cast<double>(path.partial_sums.back())) / std::log(static_cast<double>(n));
        row.flag = path.overflow ? RowFlag::overflow : RowFlag::ok;
        return row;
    });
    return assemble(config, std::move(rows), true);
}

ScalingResult run_experiment(const ExperimentConfig& config) {
    switch (config.kind) {
        case ExperimentKind::walk_exponent: return run_walk_exponent(config);
        case ExperimentKind::hitting_exponent: return run_hitting_exponent(config);
        case ExperimentKind::zsum_exponent: return run_zsum_exponent(config);
        default: throw ConfigError(experiment_name(config.kind) + " is not a scaling experiment");
    }
}

// ---- generating-function audit --------------------------------------------

bool AuditReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.failures == 0; });
}

AuditReport run_genfn_audit(const EnvironmentModel& model, const AuditOptions& options) {
    if (options.cases < 1 || options.max_n < 1 || options.max_n > kDirectBLimit) {
        throw std::invalid_argument("audit needs cases >= 1 and 1 <= max_n <= 500");
    }
    AuditCheck lemma{"phi_times_B_equals_one"};
    AuditCheck ratio_route{"phi_matches_exp_minus_log_b"};
    AuditCheck recursion{"recursion_matches_summed_form"};
    AuditCheck ratios{"ratios_in_unit_interval"};
    AuditCheck monotone{"log_b_strictly_increasing"};
    AuditCheck unit_s{"s_equals_one_column"};

    auto record = [](AuditCheck& check, double error, double tolerance, const std::string& where) {
        ++check.cases;
        if (!(error <= tolerance)) {
            if (check.failures == 0) check.counterexample = where + ": error " + format_real(error);
            ++check.failures;
        }
        if (std::isnan(error) || error > check.worst_error) check.worst_error = error;
    };

    const double kappa = kappa_or_one(model);
    for (std::int64_t c = 0; c < options.cases; ++c) {
        const Environment env(model, derive_key(options.seed, "genfn-audit", c));
        const std::uint64_t pick = derive_key(options.seed, "genfn-audit-shape", c);
        const std::int64_t n = 1 + static_cast<std::int64_t>(pick % static_cast<std::uint64_t>(options.max_n));
        const auto rho = forward_rhos(env, n);

        // Grid s plus one scaling point s = exp(−λ/n^{1/κ}).
        const double grid_s = 0.1 * static_cast<double>(c % 10);
        const double lambda = std::array{0.5, 1.0, 2.0}[static_cast<std::size_t>(c % 3)];
        const double scaling_s = std::exp(-lambda / std::pow(static_cast<double>(n), 1.0 / kappa));

        for (const double s : {grid_s, scaling_s}) {
            const std::string where = describe_case(c, n, s);
            const double phi = phi_product(rho, s);
            const double b = options.recursion(rho, n, s);
            record(lemma, std::abs(phi * b - 1.0), options.lemma_tolerance, where);

            const double summed = b_summed(rho, n, s);
            record(recursion, std::abs(b - summed) / std::abs(summed), options.recursion_tolerance, where);

            try {
                const auto state = genfn_state(rho, s);
                record(ratio_route, std::abs(phi - std::exp(-state.log_b)) / phi, options.lemma_tolerance, where);
                record(ratios, 0.0, 0.0, where);
                const bool increasing =
                    std::all_of(state.ratios.begin(), state.ratios.end(), [](double q) { return q < 1.0; });
                record(monotone, increasing ? 0.0 : 1.0, 0.0, where);
            } catch (const std::logic_error& e) {
                record(ratios, 1.0, 0.0, where + " (" + e.what() + ")");
            }
        }

        const std::string where = describe_case(c, n, 1.0);
        const double worst_at_one = std::max({std::abs(phi_product(rho, 1.0) - 1.0), std::abs(log_b(rho, 1.0)),
                                              std::abs(options.recursion(rho, n, 1.0) - 1.0),
                                              std::abs(b_summed(rho, n, 1.0) - 1.0),
                                              std::abs(psi_mc(env, n, 1.0, 1, c).mean - 1.0)});
        record(unit_s, worst_at_one, 0.0, where);
    }

    AuditReport report;
    report.checks = {lemma, ratio_route, recursion, ratios, monotone, unit_s};
    return report;
}

nlohmann::json to_json(const AuditReport& report) {
    nlohmann::json j;
    j["passed"] = report.passed();
    j["checks"] = nlohmann::json::array();
    for (const auto& c : report.checks) {
        j["checks"].push_back({{"name", c.name},
                               {"cases", c.cases},
                               {"failures", c.failures},
                               {"worst_error", c.worst_error},
                               {"counterexample", c.counterexample}});
    }
    return j;
}

std::string to_csv(const AuditReport& report) {
    std::ostringstream out;
    out << "check,cases,failures,worst_error\n";
    for (const auto& c : report.checks) {
        out << c.name << ',' << c.cases << ',' << c.failures << ',' << format_real(c.worst_error) << '\n';
    }
    return out.str();
}

std::vector<std::string> spectrum_breaches(const EnvironmentModel& model, const SpectrumReport& report) {
    std::vector<std::string> breaches;
    const auto& grid = report.lambda_grid;
    for (const auto& [lam, value] : grid) {
        if (lam == 0.0 && value != 0.0) breaches.push_back("Lambda(0) = " + format_real(value) + " is not 0");
    }
    for (std::size_t i = 1; i + 1 < grid.size(); ++i) {
        const double second = grid[i - 1].second - 2.0 * grid[i].second + grid[i + 1].second;
        if (second < -1e-9) breaches.push_back("Lambda not convex at lambda = " + format_real(grid[i].first));
    }
    if (!(std::abs(report.kappa_root - report.kappa_via_rate) <= 1e-4)) {
        breaches.push_back("kappa duality gap " + format_real(std::abs(report.kappa_root - report.kappa_via_rate)) +
                           " exceeds 1e-4");
    }
    for (const auto& [lam, value] : grid) {
        if (lam <= 0.0 || std::abs(lam - report.kappa_root) <= 1e-6) continue;
        if ((value > 0.0) != (lam > report.kappa_root) || value == 0.0) {
            breaches.push_back("sign of Lambda(" + format_real(lam) + ") disagrees with lambda - kappa");
        }
    }
    if (const auto j0 = rate_function(model, 0.0); !j0 || !(*j0 > 0.0)) breaches.push_back("J(0) is not positive");
    return breaches;
}

// ---- emission --------------------------------------------------------------

Format parse_format(std::string_view name) {
    if (name == "csv") return Format::csv;
    if (name == "json") return Format::json;
    throw ConfigError("unknown format '" + std::string(name) + "' (expected csv or json)");
}

std::string to_csv(const ScalingResult& result) {
    std::ostringstream out;
    out << "experiment,model_id,size,replica,statistic,flag\n";
    for (const auto& row : result.rows) {
        out << result.experiment << ',' << result.model_id << ',' << row.size << ',' << row.replica << ','
            << format_real(row.statistic) << ',' << flag_name(row.flag) << '\n';
    }
    return out.str();
}

nlohmann::json to_json(const ScalingResult& result) {
    nlohmann::json j;
    j["experiment"] = result.experiment;
    j["model_id"] = result.model_id;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : result.rows) {
        j["rows"].push_back({{"size", r.size}, {"replica", r.replica}, {"statistic", r.statistic}, {"flag", flag_name(r.flag)}});
    }
    j["summary"] = nlohmann::json::array();
    for (const auto& s : result.summary) {
        j["summary"].push_back({{"size", s.size},
                                {"count", s.count},
                                {"flagged", s.flagged},
                                {"q1", s.q1},
                                {"median", s.median},
                                {"q3", s.q3}});
    }
    j["fit"] = {{"status", fit_status_name(result.fit.status)},
                {"slope", result.fit.slope},
                {"intercept", result.fit.intercept},
                {"slope_stderr", result.fit.slope_stderr}};
    j["probes"] = nlohmann::json::array();
    for (const auto& p : result.probes) j["probes"].push_back({{"size", p.size}, {"alpha", p.alpha}, {"fraction", p.fraction}});
    return j;
}

ScalingResult scaling_result_from_json(const nlohmann::json& j) {
    ScalingResult result;
    result.experiment = j.at("experiment").get<std::string>();
    result.model_id = j.at("model_id").get<std::string>();
    for (const auto& r : j.at("rows")) {
        result.rows.push_back({r.at("size").get<std::int64_t>(), r.at("replica").get<std::int64_t>(),
                               r.at("statistic").get<double>(), parse_flag(r.at("flag").get<std::string>())});
    }
    for (const auto& s : j.at("summary")) {
        result.summary.push_back({s.at("size").get<std::int64_t>(), s.at("count").get<std::int64_t>(),
                                  s.at("flagged").get<std::int64_t>(), s.at("q1").get<double>(),
                                  s.at("median").get<double>(), s.at("q3").get<double>()});
    }
    const auto& f = j.at("fit");
    const auto status = f.at("status").get<std::string>();
    for (auto st : {FitStatus::ok, FitStatus::low_confidence, FitStatus::insufficient_grid}) {
        if (fit_status_name(st) == status) result.fit.status = st;
    }
    result.fit.slope = f.at("slope").get<double>();
    result.fit.intercept = f.at("intercept").get<double>();
    result.fit.slope_stderr = f.at("slope_stderr").get<double>();
    for (const auto& p : j.at("probes")) {
        result.probes.push_back({p.at("size").get<std::int64_t>(), p.at("alpha").get<double>(), p.at("fraction").get<double>()});
    }
    return result;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

void emit(const ScalingResult& result, Format format, const std::filesystem::path& path) {
    write_file(path, format == Format::csv ? to_csv(result) : to_json(result).dump(2) + "\n");
}

}  // namespace rwre::harness
