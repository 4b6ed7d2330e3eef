#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "rwre/harness.hpp"
#include "rwre/spectrum.hpp"

namespace fs = std::filesystem;
using namespace rwre;
using namespace rwre::harness;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitBreach = 2;

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::int64_t> replicas;
    std::optional<unsigned> threads;
    std::string out = ".";
    std::string format = "csv";
};

ExperimentConfig load_config(const Options& opt, ExperimentKind kind) {
    std::ifstream in(opt.config_path);
    if (!in) throw ConfigError("cannot open config '" + opt.config_path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + opt.config_path + "' is not valid JSON: " + e.what());
    }
    auto config = config_from_json(j, kind);
    if (opt.seed) {
        config.master_seed = *opt.seed;
        config.spectrum.seed = *opt.seed;
    }
    if (opt.replicas) {
        config.replicas = *opt.replicas;
        config.spectrum.speed_replicas = *opt.replicas;
    }
    if (opt.threads) config.threads = *opt.threads;
    validate(config);
    return config;
}

fs::path output_dir(const Options& opt) {
    fs::path dir(opt.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir.string() + "': " + ec.message());
    return dir;
}

int run_scaling(const Options& opt, ExperimentKind kind) {
    const auto config = load_config(opt, kind);
    const auto format = parse_format(opt.format);
    const auto result = run_experiment(config);
    const auto dir = output_dir(opt);
    emit(result, format, dir / (experiment_name(kind) + (format == Format::csv ? ".csv" : ".json")));

    const bool exclude = kind != ExperimentKind::walk_exponent;
    if (summarize(result.rows, exclude) != result.summary) {
        std::cerr << "invariant breach: summary does not match emitted rows\n";
        return kExitBreach;
    }
    std::cout << experiment_name(kind) << ": slope " << result.fit.slope << " +/- " << result.fit.slope_stderr << " ("
              << fit_status_name(result.fit.status) << ")\n";
    return kExitOk;
}

int run_spectrum(const Options& opt) {
    const auto config = load_config(opt, ExperimentKind::spectrum);
    const auto format = parse_format(opt.format);
    const auto report = spectrum_report(config.model, config.spectrum);
    const auto dir = output_dir(opt);
    if (format == Format::json) {
        write_file(dir / "spectrum.json", to_json(report).dump(2) + "\n");
    } else {
        write_file(dir / "spectrum_lambda.csv", lambda_grid_csv(report));
        write_file(dir / "spectrum_rate.csv", rate_grid_csv(report));
    }
    const auto breaches = spectrum_breaches(config.model, report);
    for (const auto& b : breaches) std::cerr << "invariant breach: " << b << '\n';
    std::cout << "kappa " << report.kappa_root << " (via rate " << report.kappa_via_rate << "), velocity "
              << report.speed.velocity << '\n';
    return breaches.empty() ? kExitOk : kExitBreach;
}

int run_audit(const Options& opt) {
    const auto config = load_config(opt, ExperimentKind::genfn_audit);
    const auto format = parse_format(opt.format);
    AuditOptions audit;
    audit.cases = config.audit_cases;
    audit.seed = config.master_seed;
    const auto report = run_genfn_audit(config.model, audit);
    const auto dir = output_dir(opt);
    if (format == Format::json) {
        write_file(dir / "genfn_audit.json", to_json(report).dump(2) + "\n");
    } else {
        write_file(dir / "genfn_audit.csv", to_csv(report));
    }
    for (const auto& c : report.checks) {
        std::cout << c.name << ": " << c.failures << "/" << c.cases << " failures, worst " << c.worst_error << '\n';
        if (c.failures > 0) std::cerr << "invariant breach in " << c.name << ": " << c.counterexample << '\n';
    }
    return report.passed() ? kExitOk : kExitBreach;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Transient random walks in random environment: spectra, scaling experiments and audits"};
    app.require_subcommand(1);

    Options opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", opt.seed, "master seed; overrides the config");
        sub->add_option("--out", opt.out, "output directory")->capture_default_str();
        sub->add_option("--replicas", opt.replicas, "replicas per size; overrides the config")->check(CLI::PositiveNumber);
        sub->add_option("--format", opt.format, "output format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
        sub->add_option("--threads", opt.threads, "worker threads; output does not depend on it")->check(CLI::PositiveNumber);
    };

    auto* spectrum = app.add_subcommand("spectrum", "Lambda grid, rate function, kappa and speed");
    auto* walk = app.add_subcommand("walk-exponent", "log X_n/log n over a grid of times");
    auto* hitting = app.add_subcommand("hitting-exponent", "log T_n/log n over a grid of targets");
    auto* zsum = app.add_subcommand("zsum-exponent", "log(1 + sum Z)/log n for the branching process");
    auto* audit = app.add_subcommand("genfn-audit", "generating-function identities over random instances");
    for (auto* sub : {spectrum, walk, hitting, zsum, audit}) add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (spectrum->parsed()) return run_spectrum(opt);
        if (walk->parsed()) return run_scaling(opt, ExperimentKind::walk_exponent);
        if (hitting->parsed()) return run_scaling(opt, ExperimentKind::hitting_exponent);
        if (zsum->parsed()) return run_scaling(opt, ExperimentKind::zsum_exponent);
        return run_audit(opt);
    } catch (const std::logic_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return dynamic_cast<const std::invalid_argument*>(&e) ? kExitConfig : kExitBreach;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}
