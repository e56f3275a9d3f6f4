// nfisac: dataset generation, baseline estimation, evaluation, perturbation sweeps,
// rate/QoS tradeoff, and the physics self-check.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "nfisac/commands.hpp"

namespace {

enum Exit { ok = 0, validation = 1, runtime = 2, selfcheck_failed = 3 };

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string out;
};

nfisac::RunConfig load(const Common& c) {
    nfisac::RunConfig cfg = c.config.empty() ? nfisac::RunConfig{} : nfisac::load_run_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.workers) cfg.workers = *c.workers;
    if (!c.out.empty()) cfg.output_dir = c.out;
    nfisac::validate(cfg);
    return cfg;
}

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "run configuration (JSON)")->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "override the configured seed");
    app->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
    app->add_option("--out", c.out, "output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"near-field ISAC laboratory"};
    app.require_subcommand(1);

    Common common;
    std::string dataset, predictions, curve, estimator, kind, levels;
    std::optional<double> tau_cls, tau_loc;

    auto* gen = app.add_subcommand("generate", "simulate channel tensors into a dataset container");
    add_common(gen, common);

    auto* est = app.add_subcommand("estimate", "run a classical estimator over a dataset");
    add_common(est, common);
    est->add_option("--dataset", dataset, "dataset container")->required()->check(CLI::ExistingFile);
    est->add_option("--estimator", estimator, "periodogram | matched-filter");

    auto* eval = app.add_subcommand("evaluate", "aggregate metrics of a predictions CSV");
    add_common(eval, common);
    eval->add_option("--predictions", predictions, "predictions CSV")->required()->check(CLI::ExistingFile);
    eval->add_option("--dataset", dataset, "dataset container")->required()->check(CLI::ExistingFile);

    auto* pert = app.add_subcommand("perturb", "write noise- or phase-perturbed copies of a dataset");
    add_common(pert, common);
    pert->add_option("--dataset", dataset, "dataset container")->required()->check(CLI::ExistingFile);
    pert->add_option("--kind", kind, "noise | phase")->required();
    pert->add_option("--levels", levels, "comma-separated levels (noise: sigma/RMS, phase: degrees)")->required();

    auto* trade = app.add_subcommand("tradeoff", "ergodic-rate table and QoS sensing bandwidth");
    add_common(trade, common);
    trade->add_option("--curve", curve, "CSV with k_s,accuracy,planar_mae_m")->required()->check(CLI::ExistingFile);
    trade->add_option("--tau-cls", tau_cls, "accuracy target in [0, 1]");
    trade->add_option("--tau-loc", tau_loc, "planar error target (m)");

    auto* self = app.add_subcommand("selfcheck", "physics and operator invariant suite");
    add_common(self, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Exit::ok : Exit::validation;
    }

    try {
        if (gen->parsed()) {
            nfisac::cmd_generate(load(common));
        } else if (est->parsed()) {
            auto cfg = load(common);
            if (!estimator.empty()) cfg.estimator.kind = nfisac::estimator_from_string(estimator);
            nfisac::cmd_estimate(dataset, cfg.estimator, cfg.output_dir, cfg.workers);
        } else if (eval->parsed()) {
            const auto cfg = load(common);
            const auto res = nfisac::cmd_evaluate(predictions, dataset, cfg.output_dir);
            std::cout << nfisac::metric_csv_header << '\n' << nfisac::metric_csv_row(res.report) << '\n';
        } else if (pert->parsed()) {
            const auto cfg = load(common);
            const auto k = nfisac::perturb_kind_from_string(kind);
            nfisac::cmd_perturb(dataset, k, nfisac::parse_levels(levels), cfg.seed, cfg.output_dir);
        } else if (trade->parsed()) {
            auto cfg = load(common);
            if (tau_cls) cfg.rate.qos.tau_cls = *tau_cls;
            if (tau_loc) cfg.rate.qos.tau_loc = *tau_loc;
            const auto res = nfisac::cmd_tradeoff(cfg, curve, cfg.output_dir);
            std::cout << nfisac::rates_csv(res.rates) << "k_s_star," << nfisac::qos_report(res.k_s_star) << '\n';
        } else if (self->parsed()) {
            const auto cfg = load(common);
            const auto results = nfisac::run_selfcheck();
            const std::string report = nfisac::selfcheck_report(results);
            std::cout << report;
            if (!common.out.empty()) {
                nfisac::ensure_dir(cfg.output_dir);
                nfisac::write_text(std::filesystem::path(cfg.output_dir) / "selfcheck.csv", report);
            }
            for (const auto& r : results)
                if (!r.passed) return Exit::selfcheck_failed;
        }
    } catch (const nfisac::Error& e) {
        std::cerr << "error [" << nfisac::to_string(e.kind()) << "]: " << e.what() << '\n';
        return e.kind() == nfisac::ErrorKind::invalid_config ? Exit::validation : Exit::runtime;
    } catch (const std::exception& e) {
        std::cerr << "error [runtime]: " << e.what() << '\n';
        return Exit::runtime;
    }
    return Exit::ok;
}
