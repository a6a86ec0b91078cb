#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ips/common.hpp"
#include "ips/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Incremental propensity score effect curves from tabular data"};
    app.require_subcommand(1);

    int threads = ips::hardware_threads();
    app.add_option("--threads", threads, "Worker threads (results are thread-count invariant)");

    std::string config_path, data_path, out_dir;

    auto* estimate = app.add_subcommand("estimate", "Estimate an effect curve from a CSV file");
    estimate->add_option("--config", config_path, "JSON run config")->required();
    estimate->add_option("--data", data_path, "CSV data file")->required();
    estimate->add_option("--out", out_dir, "Output directory")->required();

    auto* summarize = app.add_subcommand("summarize", "Write summary tables for a CSV file");
    summarize->add_option("--config", config_path, "JSON run config")->required();
    summarize->add_option("--data", data_path, "CSV data file")->required();
    summarize->add_option("--out", out_dir, "Output directory")->required();

    std::string suite;
    ips::SimOverrides overrides;
    int reps = -1, n = -1;
    long long seed = -1;
    auto* simulate = app.add_subcommand("simulate", "Run a validation suite against enumerable truth");
    simulate->add_option("--suite", suite,
                         "one of: oracle_consistency, coverage, double_robustness, "
                         "literal_formula_bias, probation_like")
        ->required();
    simulate->add_option("--out", out_dir, "Output directory")->required();
    simulate->add_option("--reps", reps, "Replicate count override");
    simulate->add_option("--n", n, "Sample size override");
    simulate->add_option("--seed", seed, "Master seed override");

    CLI11_PARSE(app, argc, argv);

    if (threads < 1) {
        std::cerr << "config error: --threads must be >= 1\n";
        return 2;
    }

    if (estimate->parsed()) return ips::cmd_estimate(config_path, data_path, out_dir, threads);
    if (summarize->parsed()) return ips::cmd_summarize(config_path, data_path, out_dir);
    if (simulate->parsed()) {
        if (reps >= 0) overrides.reps = reps;
        if (n >= 0) overrides.n = n;
        if (seed >= 0) overrides.seed = static_cast<std::uint64_t>(seed);
        overrides.threads = threads;
        return ips::cmd_simulate(suite, out_dir, overrides);
    }
    return 2;
}
