// cluskin command line: analytic prediction tables, seeded MD/DSMC replica
// ensembles, and theory-vs-simulation analysis of finished runs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cluskin/experiments.hpp"

namespace {

cluskin::kinetics::series_policy policy_from_name(const std::string& name) {
    using mode = cluskin::kinetics::series_policy::mode;
    cluskin::kinetics::series_policy policy;
    if (name == "direct") policy.eval = mode::direct_sum;
    else if (name == "identity") policy.eval = mode::tree_identity;
    else policy.eval = mode::automatic;
    return policy;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kinetic cluster dynamics laboratory"};
    app.require_subcommand(1);

    // predict
    auto* predict = app.add_subcommand("predict", "Emit analytic cluster-statistics tables");
    std::vector<double> t_grid;
    std::int64_t k_max = 100;
    std::string out_dir;
    std::string mode_name = "auto";
    predict->add_option("--t-grid", t_grid, "Comma-separated kinetic times")
        ->required()
        ->delimiter(',');
    predict->add_option("--k-max", k_max, "Largest cluster size in the tables");
    predict->add_option("--out", out_dir, "Directory for distributions.csv and scalars.csv");
    predict->add_option("--mode", mode_name, "Series evaluation: auto, direct or identity")
        ->check(CLI::IsMember({"auto", "direct", "identity"}));

    // run
    auto* run = app.add_subcommand("run", "Run a replica ensemble from a JSON config");
    std::string config_path;
    std::string run_out_override;
    int workers = 0;
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--out", run_out_override, "Override the config's output_dir");
    run->add_option("--workers", workers,
                    "Worker pool size (default: CLUSKIN_WORKERS or hardware concurrency)");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Compare a finished run against theory");
    std::string run_dir;
    cluskin::experiments::analysis_options options;
    analyze->add_option("--run", run_dir, "Run directory produced by `run`")->required();
    analyze->add_option("--fit-kmin", options.fit_kmin, "Lower edge of the power-law fit range");
    analyze->add_option("--fit-kmax", options.fit_kmax, "Upper edge of the power-law fit range");

    // selfcheck
    app.add_subcommand("selfcheck", "Execute the oracle suites and report pass/fail");

    CLI11_PARSE(app, argc, argv);

    try {
        if (predict->parsed()) {
            const auto policy = policy_from_name(mode_name);
            if (out_dir.empty()) {
                std::ostringstream dist, scal;
                cluskin::experiments::write_prediction_tables(dist, scal, t_grid, k_max, policy);
                std::cout << dist.str() << '\n' << scal.str();
            } else {
                std::filesystem::create_directories(out_dir);
                std::ofstream dist(std::filesystem::path(out_dir) / "distributions.csv");
                std::ofstream scal(std::filesystem::path(out_dir) / "scalars.csv");
                cluskin::experiments::write_prediction_tables(dist, scal, t_grid, k_max, policy);
                std::cout << "wrote " << out_dir << "/distributions.csv and scalars.csv\n";
            }
            return 0;
        }
        if (run->parsed()) {
            auto cfg = cluskin::experiments::load_config(config_path);
            if (!run_out_override.empty()) cfg.output_dir = run_out_override;
            if (cfg.engine == cluskin::experiments::engine_kind::predict) {
                if (cfg.output_dir.empty()) cfg.output_dir = "predict_out";
                std::filesystem::create_directories(cfg.output_dir);
                std::ofstream dist(cfg.output_dir / "distributions.csv");
                std::ofstream scal(cfg.output_dir / "scalars.csv");
                cluskin::experiments::write_prediction_tables(dist, scal, cfg.time_grid,
                                                              cfg.predict.k_max);
                std::cout << "wrote prediction tables to " << cfg.output_dir << '\n';
                return 0;
            }
            const auto summary = cluskin::experiments::run_experiment(cfg, workers);
            std::cout << "run directory: " << summary.dir.string() << '\n'
                      << "replicas: " << summary.replicas << " (" << summary.failed
                      << " failed)\n";
            return summary.failed == 0 ? 0 : 1;
        }
        if (analyze->parsed()) {
            const auto report = cluskin::experiments::analyze_run(run_dir, options);
            std::cout << "wrote comparison.csv and summary.csv in " << run_dir << '\n';
            for (const auto& s : report.summaries) {
                std::cout << "t=" << cluskin::format_double(s.t)
                          << " largest=" << cluskin::format_double(s.largest_mass.mean)
                          << " giant_pred=" << cluskin::format_double(s.giant_pred);
                if (s.fit) {
                    std::cout << " alpha=" << cluskin::format_double(s.fit->exponent)
                              << " damping=" << cluskin::format_double(s.fit->damping_rate);
                }
                std::cout << '\n';
            }
            return 0;
        }
        // selfcheck
        const int failures = cluskin::experiments::selfcheck(std::cout);
        std::cout << (failures == 0 ? "selfcheck passed\n"
                                    : "selfcheck failed (" + std::to_string(failures) + ")\n");
        return failures == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
